use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major `f64` array.
///
/// A tensor by itself carries no gradient information; it becomes
/// differentiable once placed on a [`Tape`](super::Tape) as a [`Var`](super::Var).
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?}{:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?}[{} values]", self.shape, self.data.len())
        }
    }
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Tensor { shape, data })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::shape("item", &self.shape, &[]));
        }
        Ok(self.data[0])
    }

    pub fn rows(&self) -> usize {
        if self.shape.is_empty() {
            1
        } else {
            self.shape[0]
        }
    }

    /// Row width when the tensor is viewed as 2-D (leading axis by the rest).
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, &shape));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::shape(op, &a.shape, &b.shape));
    }
    Ok(())
}

pub(crate) fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape.clone(), data)
}

pub(crate) fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(a.shape.clone(), a.data.iter().map(|&x| f(x)).collect())
}

fn as_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape.as_slice() {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::shape(op, &t.shape, &[])),
    }
}

/// `out[n×m] += a[n×k] · b[k×m]`, row-major.
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        let o_row = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * m..(p + 1) * m];
            for (o, &bv) in o_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[n×k] += g[n×m] · b[k×m]ᵀ`.
pub(crate) fn gemm_nt_acc(g: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    // transposing b first turns the inner loop into a contiguous axpy
    let mut bt = vec![0.0; m * k];
    for p in 0..k {
        for j in 0..m {
            bt[j * k + p] = b[p * m + j];
        }
    }
    gemm_acc(g, &bt, out, n, m, k);
}

/// `out[k×m] += a[n×k]ᵀ · g[n×m]`.
pub(crate) fn gemm_tn_acc(a: &[f64], g: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        let g_row = &g[i * m..(i + 1) * m];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let o_row = &mut out[p * m..(p + 1) * m];
            for (o, &gv) in o_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, k) = as_matrix("matmul", a)?;
    let (k2, m) = as_matrix("matmul", b)?;
    if k != k2 {
        return Err(Error::shape("matmul", &a.shape, &b.shape));
    }
    let mut out = vec![0.0; n * m];
    gemm_acc(&a.data, &b.data, &mut out, n, k, m);
    Ok(Tensor::from_parts(vec![n, m], out))
}

pub(crate) fn concat_last(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ra, rb) = (a.rank(), b.rank());
    if ra == 0 || ra != rb || a.shape[..ra - 1] != b.shape[..rb - 1] {
        return Err(Error::shape("concat_last_axis", &a.shape, &b.shape));
    }
    let wa = a.shape[ra - 1];
    let wb = b.shape[rb - 1];
    let rows = a.data.len() / wa;
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    for r in 0..rows {
        data.extend_from_slice(&a.data[r * wa..(r + 1) * wa]);
        data.extend_from_slice(&b.data[r * wb..(r + 1) * wb]);
    }
    let mut shape = a.shape.clone();
    shape[ra - 1] = wa + wb;
    Ok(Tensor::from_parts(shape, data))
}

/// Splits `shape` around `axis` into (outer, axis length, inner) strides.
pub(crate) fn axis_split(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::shape(op, shape, &[axis]));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    shape
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &d)| d)
        .collect()
}

/// Max along `axis`, returning the values and the flat input index of each
/// winner. Ties go to the lowest index along the axis.
pub(crate) fn reduce_max(a: &Tensor, axis: usize) -> Result<(Tensor, Vec<usize>)> {
    let (outer, len, inner) = axis_split("reduce_max_over_axis", &a.shape, axis)?;
    let mut values = Vec::with_capacity(outer * inner);
    let mut arg = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        let base = o * len * inner;
        for i in 0..inner {
            let mut best = base + i;
            let mut best_v = a.data[best];
            for l in 1..len {
                let idx = base + l * inner + i;
                if a.data[idx] > best_v {
                    best = idx;
                    best_v = a.data[idx];
                }
            }
            values.push(best_v);
            arg.push(best);
        }
    }
    Ok((
        Tensor::from_parts(reduced_shape(&a.shape, axis), values),
        arg,
    ))
}

pub(crate) fn reduce_mean(a: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, len, inner) = axis_split("reduce_mean_over_axis", &a.shape, axis)?;
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        for l in 0..len {
            let src = &a.data[(o * len + l) * inner..(o * len + l + 1) * inner];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        let inv = 1.0 / len as f64;
        dst.iter_mut().for_each(|d| *d *= inv);
    }
    Ok(Tensor::from_parts(reduced_shape(&a.shape, axis), out))
}

pub(crate) fn log_softmax(a: &Tensor) -> Result<Tensor> {
    let (rows, cols) = as_matrix("log_softmax", a)?;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let row = &a.data[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|&x| x - lse));
    }
    Ok(Tensor::from_parts(vec![rows, cols], out))
}

pub(crate) fn gather_rows(a: &Tensor, indices: &[usize]) -> Result<Tensor> {
    if a.rank() != 2 {
        return Err(Error::shape("gather_rows", &a.shape, &[indices.len()]));
    }
    let (rows, w) = (a.shape[0], a.shape[1]);
    if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
        return Err(Error::shape("gather_rows", &a.shape, &[bad]));
    }
    if indices.is_empty() {
        return Err(Error::shape("gather_rows", &a.shape, &[0]));
    }
    let mut data = Vec::with_capacity(indices.len() * w);
    for &i in indices {
        data.extend_from_slice(&a.data[i * w..(i + 1) * w]);
    }
    Ok(Tensor::from_parts(vec![indices.len(), w], data))
}

pub(crate) fn broadcast_rows(a: &Tensor, n: usize) -> Result<Tensor> {
    let w = match a.shape.as_slice() {
        [w] | [1, w] => *w,
        _ => return Err(Error::shape("broadcast_rows", &a.shape, &[n])),
    };
    if n == 0 {
        return Err(Error::shape("broadcast_rows", &a.shape, &[n]));
    }
    let mut data = Vec::with_capacity(n * w);
    for _ in 0..n {
        data.extend_from_slice(&a.data);
    }
    Ok(Tensor::from_parts(vec![n, w], data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_of_ones() {
        let a = Tensor::full(vec![2, 3], 1.0);
        let b = Tensor::full(vec![3, 2], 1.0);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert!(c.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 2]);
        let err = matmul(&a, &b).unwrap_err();
        assert!(err.to_string().contains("matmul"));
        assert!(err.to_string().contains("[2, 3]"));
    }

    #[test]
    fn log_softmax_uniform_pair() {
        let x = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        let y = log_softmax(&x).unwrap();
        for &v in y.data() {
            assert!((v + std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn log_softmax_is_stable_for_large_logits() {
        let x = Tensor::matrix(1, 2, vec![1000.0, 0.0]).unwrap();
        let y = log_softmax(&x).unwrap();
        assert!(y.all_finite());
        assert_eq!(y.data()[0], 0.0);
    }

    #[test]
    fn reduce_max_prefers_lowest_index_on_ties() {
        let x = Tensor::matrix(3, 1, vec![2.0, 2.0, 1.0]).unwrap();
        let (v, arg) = reduce_max(&x, 0).unwrap();
        assert_eq!(v.data(), &[2.0]);
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn reduce_mean_middle_axis() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = reduce_mean(&x, 1).unwrap();
        assert_eq!(m.shape(), &[1, 2]);
        assert_eq!(m.data(), &[2.0, 3.0]);
    }

    #[test]
    fn concat_and_gather() {
        let a = Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap();
        let b = Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = concat_last(&a, &b).unwrap();
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let g = gather_rows(&c, &[1, 1, 0]).unwrap();
        assert_eq!(g.shape(), &[3, 3]);
        assert_eq!(&g.data()[..3], &[2.0, 5.0, 6.0]);
        assert!(gather_rows(&c, &[2]).is_err());
    }

    #[test]
    fn new_rejects_bad_length() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }
}
