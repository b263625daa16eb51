use std::sync::Arc;

use super::tensor::{self as k, Tensor};
use crate::error::{Error, Result};

/// Negative slope used by [`Tape::leaky_relu`] in every model layer.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The differentiable primitive set.
///
/// `Reshape` is a pure view change; everything else maps one-to-one onto a
/// kernel in [`tensor`](super::tensor).
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    MatMul,
    Add,
    Sub,
    MulElementwise,
    ScalarMul(f64),
    Relu,
    LeakyRelu(f64),
    ConcatLastAxis,
    ReduceMaxOverAxis(usize),
    ReduceMeanOverAxis(usize),
    ReduceSum,
    Square,
    LogSoftmax,
    GatherRows(Arc<[usize]>),
    BroadcastRows(usize),
    Reshape(Vec<usize>),
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::MulElementwise => "mul_elementwise",
            Primitive::ScalarMul(_) => "scalar_mul",
            Primitive::Relu => "relu",
            Primitive::LeakyRelu(_) => "leaky_relu",
            Primitive::ConcatLastAxis => "concat_last_axis",
            Primitive::ReduceMaxOverAxis(_) => "reduce_max_over_axis",
            Primitive::ReduceMeanOverAxis(_) => "reduce_mean_over_axis",
            Primitive::ReduceSum => "reduce_sum",
            Primitive::Square => "square",
            Primitive::LogSoftmax => "log_softmax",
            Primitive::GatherRows(_) => "gather_rows",
            Primitive::BroadcastRows(_) => "broadcast_rows",
            Primitive::Reshape(_) => "reshape",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Primitive::MatMul
            | Primitive::Add
            | Primitive::Sub
            | Primitive::MulElementwise
            | Primitive::ConcatLastAxis => 2,
            _ => 1,
        }
    }

    /// Evaluates the primitive on plain tensors, without recording anything.
    pub fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        self.eval(inputs).map(|(t, _)| t)
    }

    fn eval(&self, inputs: &[&Tensor]) -> Result<(Tensor, Option<Vec<usize>>)> {
        if inputs.len() != self.arity() {
            return Err(Error::invalid(format!(
                "{} expects {} inputs, got {}",
                self.name(),
                self.arity(),
                inputs.len()
            )));
        }
        let a = inputs[0];
        let out = match self {
            Primitive::MatMul => k::matmul(a, inputs[1])?,
            Primitive::Add => {
                k::same_shape("add", a, inputs[1])?;
                k::zip_map(a, inputs[1], |x, y| x + y)
            }
            Primitive::Sub => {
                k::same_shape("sub", a, inputs[1])?;
                k::zip_map(a, inputs[1], |x, y| x - y)
            }
            Primitive::MulElementwise => {
                k::same_shape("mul_elementwise", a, inputs[1])?;
                k::zip_map(a, inputs[1], |x, y| x * y)
            }
            Primitive::ScalarMul(s) => k::map(a, |x| x * s),
            Primitive::Relu => k::map(a, |x| if x > 0.0 { x } else { 0.0 }),
            Primitive::LeakyRelu(slope) => k::map(a, |x| if x > 0.0 { x } else { slope * x }),
            Primitive::ConcatLastAxis => k::concat_last(a, inputs[1])?,
            Primitive::ReduceMaxOverAxis(axis) => {
                let (t, arg) = k::reduce_max(a, *axis)?;
                return Ok((t, Some(arg)));
            }
            Primitive::ReduceMeanOverAxis(axis) => k::reduce_mean(a, *axis)?,
            Primitive::ReduceSum => Tensor::scalar(a.data().iter().sum()),
            Primitive::Square => k::map(a, |x| x * x),
            Primitive::LogSoftmax => k::log_softmax(a)?,
            Primitive::GatherRows(idx) => k::gather_rows(a, idx)?,
            Primitive::BroadcastRows(n) => k::broadcast_rows(a, *n)?,
            Primitive::Reshape(shape) => a.reshape(shape.clone())?,
        };
        Ok((out, None))
    }
}

#[derive(Debug)]
enum Origin {
    Leaf,
    Param(usize),
    Op {
        prim: Primitive,
        inputs: Vec<Var>,
        argmax: Option<Vec<usize>>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    origin: Origin,
    requires_grad: bool,
}

/// Define-by-run recording of one forward pass.
///
/// Nodes are appended in evaluation order, so the node list is always
/// topologically sorted. Constants and ops whose inputs are all constants
/// are stored without their history.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`]: one adjoint per node that lies on a path
/// from a gradient-requiring leaf to the loss.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(usize, Var)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// `(parameter index, gradient)` for every parameter leaf on the tape.
    /// Parameters that did not influence the loss yield `None`.
    pub fn params(&self) -> impl Iterator<Item = (usize, Option<&[f64]>)> + '_ {
        self.params.iter().map(|&(p, v)| (p, self.wrt(v)))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, origin: Origin, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            origin,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Origin::Leaf, false)
    }

    /// A free input that receives a gradient but is not a model parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Origin::Leaf, true)
    }

    /// A model parameter; its gradient is reported under `index`.
    pub fn param(&mut self, index: usize, value: Tensor) -> Var {
        self.push(value, Origin::Param(index), true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Applies `prim` to `inputs`, recording history only when some input is tracked.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let (out, argmax) = prim.eval(&values)?;
        let tracked = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        if !tracked {
            return Ok(self.push(out, Origin::Leaf, false));
        }
        Ok(self.push(
            out,
            Origin::Op {
                prim,
                inputs: inputs.to_vec(),
                argmax,
            },
            true,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MulElementwise, &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.apply(Primitive::ScalarMul(s), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Relu, &[a])
    }

    pub fn leaky_relu(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::LeakyRelu(LEAKY_SLOPE), &[a])
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::ConcatLastAxis, &[a, b])
    }

    pub fn reduce_max(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::ReduceMaxOverAxis(axis), &[a])
    }

    pub fn reduce_mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::ReduceMeanOverAxis(axis), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::ReduceSum, &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Square, &[a])
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::LogSoftmax, &[a])
    }

    pub fn gather_rows(&mut self, a: Var, indices: Arc<[usize]>) -> Result<Var> {
        self.apply(Primitive::GatherRows(indices), &[a])
    }

    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        self.apply(Primitive::BroadcastRows(n), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        self.apply(Primitive::Reshape(shape.into()), &[a])
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        let rows = self.shape(y)[0];
        let bb = self.broadcast_rows(b, rows)?;
        self.add(y, bb)
    }

    /// Per-column `x · scale + shift`.
    pub fn affine(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var> {
        let rows = self.shape(x)[0];
        let s = self.broadcast_rows(scale, rows)?;
        let t = self.broadcast_rows(shift, rows)?;
        let y = self.mul(x, s)?;
        self.add(y, t)
    }

    /// Reverse sweep from a scalar `loss`, visiting each node at most once.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::invalid(format!(
                "backward requires a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if root.requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Origin::Op {
                prim,
                inputs,
                argmax,
            } = &node.origin
            {
                self.propagate(prim, inputs, argmax.as_deref(), &node.value, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.origin {
                Origin::Param(p) => Some((p, Var(i))),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(
        &self,
        prim: &Primitive,
        inputs: &[Var],
        argmax: Option<&[usize]>,
        out: &Tensor,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        let a = inputs[0];
        match prim {
            Primitive::MatMul => {
                let b = inputs[1];
                let (n, kk) = (val(a).shape()[0], val(a).shape()[1]);
                let m = val(b).shape()[1];
                acc(a, &mut |ga| k::gemm_nt_acc(g, val(b).data(), ga, n, kk, m));
                acc(b, &mut |gb| k::gemm_tn_acc(val(a).data(), g, gb, n, kk, m));
            }
            Primitive::Add => {
                acc(a, &mut |ga| add_into(ga, g));
                acc(inputs[1], &mut |gb| add_into(gb, g));
            }
            Primitive::Sub => {
                acc(a, &mut |ga| add_into(ga, g));
                acc(inputs[1], &mut |gb| gb.iter_mut().zip(g).for_each(|(d, &s)| *d -= s));
            }
            Primitive::MulElementwise => {
                let b = inputs[1];
                acc(a, &mut |ga| {
                    for ((d, &s), &y) in ga.iter_mut().zip(g).zip(val(b).data()) {
                        *d += s * y;
                    }
                });
                acc(b, &mut |gb| {
                    for ((d, &s), &x) in gb.iter_mut().zip(g).zip(val(a).data()) {
                        *d += s * x;
                    }
                });
            }
            Primitive::ScalarMul(c) => acc(a, &mut |ga| {
                ga.iter_mut().zip(g).for_each(|(d, &s)| *d += c * s)
            }),
            Primitive::Relu => acc(a, &mut |ga| {
                for ((d, &s), &x) in ga.iter_mut().zip(g).zip(val(a).data()) {
                    if x > 0.0 {
                        *d += s;
                    }
                }
            }),
            Primitive::LeakyRelu(slope) => acc(a, &mut |ga| {
                for ((d, &s), &x) in ga.iter_mut().zip(g).zip(val(a).data()) {
                    *d += if x > 0.0 { s } else { slope * s };
                }
            }),
            Primitive::ConcatLastAxis => {
                let b = inputs[1];
                let wa = *val(a).shape().last().unwrap();
                let wb = *val(b).shape().last().unwrap();
                let w = wa + wb;
                acc(a, &mut |ga| {
                    for (r, dst) in ga.chunks_mut(wa).enumerate() {
                        add_into(dst, &g[r * w..r * w + wa]);
                    }
                });
                acc(b, &mut |gb| {
                    for (r, dst) in gb.chunks_mut(wb).enumerate() {
                        add_into(dst, &g[r * w + wa..(r + 1) * w]);
                    }
                });
            }
            Primitive::ReduceMaxOverAxis(_) => {
                let arg = argmax.expect("reduce_max records its argmax");
                acc(a, &mut |ga| {
                    for (&idx, &s) in arg.iter().zip(g) {
                        ga[idx] += s;
                    }
                })
            }
            Primitive::ReduceMeanOverAxis(axis) => {
                let (outer, len, inner) =
                    k::axis_split("reduce_mean_over_axis", val(a).shape(), *axis)
                        .expect("validated in forward");
                let inv = 1.0 / len as f64;
                acc(a, &mut |ga| {
                    for o in 0..outer {
                        let src = &g[o * inner..(o + 1) * inner];
                        for l in 0..len {
                            let base = (o * len + l) * inner;
                            for (d, &s) in ga[base..base + inner].iter_mut().zip(src) {
                                *d += s * inv;
                            }
                        }
                    }
                })
            }
            Primitive::ReduceSum => acc(a, &mut |ga| ga.iter_mut().for_each(|d| *d += g[0])),
            Primitive::Square => acc(a, &mut |ga| {
                for ((d, &s), &x) in ga.iter_mut().zip(g).zip(val(a).data()) {
                    *d += 2.0 * x * s;
                }
            }),
            Primitive::LogSoftmax => {
                let cols = out.shape()[1];
                acc(a, &mut |ga| {
                    for ((dst, gr), yr) in ga
                        .chunks_mut(cols)
                        .zip(g.chunks(cols))
                        .zip(out.data().chunks(cols))
                    {
                        let total: f64 = gr.iter().sum();
                        for ((d, &s), &y) in dst.iter_mut().zip(gr).zip(yr) {
                            *d += s - y.exp() * total;
                        }
                    }
                })
            }
            Primitive::GatherRows(idx) => {
                let w = val(a).shape()[1];
                acc(a, &mut |ga| {
                    for (r, &src) in idx.iter().enumerate() {
                        add_into(&mut ga[src * w..(src + 1) * w], &g[r * w..(r + 1) * w]);
                    }
                })
            }
            Primitive::BroadcastRows(_) => acc(a, &mut |ga| {
                let w = ga.len();
                for row in g.chunks(w) {
                    add_into(ga, row);
                }
            }),
            Primitive::Reshape(_) => acc(a, &mut |ga| add_into(ga, g)),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_forward_values() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn square_sum_gradient() {
        let mut tape = Tape::new();
        let p = tape.param(0, Tensor::vector(vec![3.0]));
        let s = tape.square(p).unwrap();
        let loss = tape.sum(s).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(p).unwrap(), &[6.0]);
    }

    #[test]
    fn relu_subgradient_is_zero_on_the_negative_side() {
        let mut tape = Tape::new();
        let p = tape.param(0, Tensor::vector(vec![-1.0, 2.0]));
        let r = tape.relu(p).unwrap();
        let loss = tape.sum(r).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(p).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::vector(vec![0.0]));
        let r = tape.relu(p).unwrap();
        let loss = tape.sum(r).unwrap();
        assert_eq!(tape.backward(loss).unwrap().wrt(p).unwrap(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.square(p).unwrap();
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn constants_do_not_record_history() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0]));
        let b = tape.square(a).unwrap();
        assert!(!tape.requires_grad(b));
        let p = tape.param(3, Tensor::vector(vec![2.0]));
        let c = tape.mul(b, p).unwrap();
        let loss = tape.sum(c).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.wrt(a).is_none());
        let params: Vec<_> = grads.params().collect();
        assert_eq!(params, vec![(3, Some(&[1.0][..]))]);
    }

    #[test]
    fn unreachable_parameter_has_no_gradient() {
        let mut tape = Tape::new();
        let p = tape.param(0, Tensor::vector(vec![1.0]));
        let _q = tape.param(1, Tensor::vector(vec![1.0]));
        let loss = tape.sum(p).unwrap();
        let grads = tape.backward(loss).unwrap();
        let params: Vec<_> = grads.params().collect();
        assert_eq!(params[1], (1, None));
    }

    #[test]
    fn reduce_max_routes_gradient_to_first_maximum() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::matrix(3, 2, vec![1.0, 5.0, 1.0, 5.0, 0.0, 7.0]).unwrap());
        let m = tape.reduce_max(p, 0).unwrap();
        let loss = tape.sum(m).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(p).unwrap(), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn apply_checks_arity() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0]));
        assert!(tape.apply(Primitive::Add, &[a]).is_err());
    }

    #[test]
    fn shared_input_accumulates() {
        // d/dx (x * x) = 2x through two edges into one node
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.5]));
        let y = tape.mul(x, x).unwrap();
        let loss = tape.sum(y).unwrap();
        assert_eq!(tape.backward(loss).unwrap().wrt(x).unwrap(), &[3.0]);
    }
}
