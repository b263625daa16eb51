use std::sync::Arc;

use super::{squared_distance, Point, PointCloud};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Two-sided squared Chamfer distance
/// `Σ_a min_b ‖a−b‖² + Σ_b min_a ‖a−b‖²`.
///
/// Terms are accumulated with [`exact_sum`], so the value does not depend
/// on point order and is symmetric bit for bit.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> f64 {
    let forward = a.points().iter().map(|p| min_sq(p, b.points()));
    let backward = b.points().iter().map(|q| min_sq(q, a.points()));
    exact_sum(forward.chain(backward))
}

fn min_sq(p: &Point, others: &[Point]) -> f64 {
    others
        .iter()
        .map(|q| squared_distance(p, q))
        .fold(f64::INFINITY, f64::min)
}

/// For each row of `from`, the index of its nearest row in `to` (lowest
/// index on ties). Both are flat `n × 3` buffers.
pub fn nearest_indices(from: &[f64], to: &[f64]) -> Vec<usize> {
    let to: Vec<Point> = to.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    from.chunks_exact(3)
        .map(|c| {
            let p = [c[0], c[1], c[2]];
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, q) in to.iter().enumerate() {
                let d = squared_distance(&p, q);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

/// Batched Chamfer distance on the tape, summed over the batch.
///
/// `a` is `(batch·ma) × 3` and `b` is `(batch·mb) × 3`, with the rows of
/// sample `s` stored contiguously. Nearest-neighbour assignments are
/// computed from the current values and held fixed for the backward pass.
pub fn chamfer_on_tape(tape: &mut Tape, a: Var, b: Var, batch: usize) -> Result<Var> {
    let (sa, sb) = (tape.shape(a).to_vec(), tape.shape(b).to_vec());
    let ok = |s: &[usize]| s.len() == 2 && s[1] == 3 && batch > 0 && s[0] % batch == 0;
    if !ok(&sa) || !ok(&sb) {
        return Err(Error::shape("chamfer_distance", &sa, &sb));
    }
    let (ma, mb) = (sa[0] / batch, sb[0] / batch);
    let (va, vb) = (tape.value(a).data(), tape.value(b).data());
    let mut a_to_b = Vec::with_capacity(sa[0]);
    let mut b_to_a = Vec::with_capacity(sb[0]);
    for s in 0..batch {
        let ca = &va[s * ma * 3..(s + 1) * ma * 3];
        let cb = &vb[s * mb * 3..(s + 1) * mb * 3];
        a_to_b.extend(nearest_indices(ca, cb).into_iter().map(|j| s * mb + j));
        b_to_a.extend(nearest_indices(cb, ca).into_iter().map(|i| s * ma + i));
    }
    let a_to_b: Arc<[usize]> = a_to_b.into();
    let b_to_a: Arc<[usize]> = b_to_a.into();

    let matched_b = tape.gather_rows(b, a_to_b)?;
    let d_ab = tape.sub(a, matched_b)?;
    let sq_ab = tape.square(d_ab)?;
    let fwd = tape.sum(sq_ab)?;

    let matched_a = tape.gather_rows(a, b_to_a)?;
    let d_ba = tape.sub(matched_a, b)?;
    let sq_ba = tape.square(d_ba)?;
    let bwd = tape.sum(sq_ba)?;

    tape.add(fwd, bwd)
}

/// Correctly rounded sum of `values` (Shewchuk's exact partials, as in
/// Python's `math.fsum`). The result is independent of summation order.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }

    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // half-way case: round-half-even needs the sign of the next partial
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn cloud(points: &[Point]) -> PointCloud {
        PointCloud::new(points.to_vec()).unwrap()
    }

    #[test]
    fn identical_clouds_have_zero_distance() {
        let a = cloud(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]]);
        assert_eq!(chamfer_distance(&a, &a), 0.0);
    }

    #[test]
    fn singleton_pair() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer_distance(&a, &b), 2.0);
    }

    #[test]
    fn unequal_counts() {
        let a = cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer_distance(&a, &b), 3.0);
    }

    #[test]
    fn exact_sum_handles_cancellation() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        assert_eq!(exact_sum(std::iter::empty()), 0.0);
    }

    #[test]
    fn tape_version_matches_plain_value() {
        let a = cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0]]);
        let mut tape = Tape::new();
        let va = tape.leaf(a.to_tensor());
        let vb = tape.constant(b.to_tensor());
        let d = chamfer_on_tape(&mut tape, va, vb, 1).unwrap();
        assert_eq!(tape.value(d).item().unwrap(), 3.0);
        let g = tape.backward(d).unwrap();
        // a0 matches b (−2 on x), a1 matches b (+2 on x), b matches a0 (tie → lowest)
        assert_eq!(g.wrt(va).unwrap(), &[-4.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn tape_batches_are_independent() {
        let mut tape = Tape::new();
        let a = tape.constant(
            Tensor::new(vec![2, 3], vec![0.0, 0.0, 0.0, 5.0, 0.0, 0.0]).unwrap(),
        );
        let b = tape.constant(
            Tensor::new(vec![2, 3], vec![1.0, 0.0, 0.0, 5.0, 0.0, 0.0]).unwrap(),
        );
        let d = chamfer_on_tape(&mut tape, a, b, 2).unwrap();
        assert_eq!(tape.value(d).item().unwrap(), 2.0);
    }
}
