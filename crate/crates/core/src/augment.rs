//! PointMixup: a mixed cloud made of farthest-point subsets of two samples,
//! labelled with the matching convex combination of their one-hot labels.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sample, PointCloud};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct MixedSample {
    pub cloud: PointCloud,
    pub soft_label: Vec<f64>,
    pub gamma: f64,
}

/// Draws the mixing weight `γ ~ Beta(alpha, alpha)`.
pub fn sample_gamma(alpha: f64, seed: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("Beta shape must be positive, got {alpha}")));
    }
    Ok(beta_with(alpha, alpha, &mut rng::seeded(seed)))
}

/// `Beta(a, b)` as `X / (X + Y)` with `X ~ Gamma(a)`, `Y ~ Gamma(b)`.
///
/// Works in log space: for shapes below 1 the boosted draws routinely
/// underflow to zero.
pub fn beta_with<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let lx = ln_gamma_variate(a, rng);
    let ly = ln_gamma_variate(b, rng);
    // x / (x + y) = 1 / (1 + exp(ly - lx))
    let d = ly - lx;
    if d > 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}

/// Log of a unit-scale Gamma(shape) draw (Marsaglia–Tsang).
///
/// Shapes below 1 are boosted: `Gamma(a) = Gamma(a + 1) · U^(1/a)`.
fn ln_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = rng.random::<f64>();
        // random() is in [0, 1); 1 - u is in (0, 1]
        return ln_gamma_variate(shape + 1.0, rng) + (1.0 - u).ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = 1.0 - rng.random::<f64>();
        if u < 1.0 - 0.0331 * x * x * x * x || u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

/// Number of points taken from the first cloud: `round((1 − γ)·m)`.
pub fn split_counts(gamma: f64, m: usize) -> (usize, usize) {
    let from_i = ((1.0 - gamma) * m as f64).round().clamp(0.0, m as f64) as usize;
    (from_i, m - from_i)
}

/// Mixes `(xi, yi)` with `(xj, yj)` at weight `gamma`.
///
/// The cloud is `FPS(round((1−γ)·m), xi) ∪ FPS(m − that, xj)`; the label is
/// `(1−γ)·onehot(yi) + γ·onehot(yj)`.
#[allow(clippy::too_many_arguments)]
pub fn pointmixup(
    xi: &PointCloud,
    yi: usize,
    xj: &PointCloud,
    yj: usize,
    gamma: f64,
    num_classes: usize,
    seed: u64,
) -> Result<MixedSample> {
    let m = xi.len();
    if xj.len() != m {
        return Err(Error::invalid(format!(
            "pointmixup: cloud sizes differ ({} vs {})",
            m,
            xj.len()
        )));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("pointmixup: gamma {gamma} outside [0, 1]")));
    }
    if yi >= num_classes || yj >= num_classes {
        return Err(Error::invalid(format!(
            "pointmixup: labels ({yi}, {yj}) out of range for {num_classes} classes"
        )));
    }
    let (ni, nj) = split_counts(gamma, m);
    let mut points = Vec::with_capacity(m);
    if ni > 0 {
        let idx = farthest_point_sample(xi, ni, rng::derive(seed, 0))?;
        points.extend(idx.iter().map(|&i| xi.points()[i]));
    }
    if nj > 0 {
        let idx = farthest_point_sample(xj, nj, rng::derive(seed, 1))?;
        points.extend(idx.iter().map(|&i| xj.points()[i]));
    }
    let mut soft_label = vec![0.0; num_classes];
    soft_label[yi] += 1.0 - gamma;
    soft_label[yj] += gamma;
    Ok(MixedSample {
        cloud: PointCloud::new(points)?,
        soft_label,
        gamma,
    })
}

/// Mixes a labelled batch with a random permutation of itself, drawing a
/// fresh `γ ~ Beta(alpha, alpha)` per sample.
pub fn mix_batch<R: Rng + ?Sized>(
    clouds: &[PointCloud],
    labels: &[usize],
    alpha: f64,
    num_classes: usize,
    rng: &mut R,
) -> Result<Vec<MixedSample>> {
    if clouds.len() != labels.len() {
        return Err(Error::invalid("mix_batch: clouds and labels differ in length"));
    }
    let mut partner: Vec<usize> = (0..clouds.len()).collect();
    partner.shuffle(rng);
    clouds
        .iter()
        .zip(labels)
        .zip(&partner)
        .map(|((x, &y), &p)| {
            let gamma = beta_with(alpha, alpha, rng);
            let seed = rng.random::<u64>();
            pointmixup(x, y, &clouds[p], labels[p], gamma, num_classes, seed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(offset: f64, m: usize) -> PointCloud {
        PointCloud::new(
            (0..m)
                .map(|i| [offset + i as f64, (i * i) as f64 * 0.1, 0.0])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn quarter_weight_takes_six_and_two() {
        let (a, b) = (cloud(0.0, 8), cloud(100.0, 8));
        let mix = pointmixup(&a, 0, &b, 1, 0.25, 3, 5).unwrap();
        assert_eq!(split_counts(0.25, 8), (6, 2));
        assert_eq!(mix.cloud.len(), 8);
        let from_a = mix.cloud.points().iter().filter(|p| p[0] < 50.0).count();
        assert_eq!(from_a, 6);
        assert_eq!(mix.soft_label, vec![0.75, 0.25, 0.0]);
    }

    #[test]
    fn gamma_zero_uses_only_the_first_cloud() {
        let (a, b) = (cloud(0.0, 8), cloud(100.0, 8));
        let mix = pointmixup(&a, 2, &b, 1, 0.0, 3, 5).unwrap();
        assert!(mix.cloud.points().iter().all(|p| a.points().contains(p)));
        assert_eq!(mix.soft_label, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn gamma_one_with_equal_labels() {
        let (a, b) = (cloud(0.0, 8), cloud(100.0, 8));
        let mix = pointmixup(&a, 1, &b, 1, 1.0, 3, 5).unwrap();
        assert!(mix.cloud.points().iter().all(|p| b.points().contains(p)));
        assert_eq!(mix.soft_label, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        assert!(pointmixup(&cloud(0.0, 8), 0, &cloud(0.0, 7), 0, 0.5, 2, 0).is_err());
    }

    #[test]
    fn gamma_draws_are_reproducible_and_in_support() {
        assert_eq!(sample_gamma(0.2, 42).unwrap(), sample_gamma(0.2, 42).unwrap());
        for s in 0..2000 {
            let g = sample_gamma(0.2, s).unwrap();
            assert!((0.0..=1.0).contains(&g));
        }
        assert!(sample_gamma(0.0, 1).is_err());
    }

    #[test]
    fn mix_batch_keeps_sizes() {
        let clouds: Vec<_> = (0..4).map(|i| cloud(i as f64 * 10.0, 16)).collect();
        let labels = vec![0, 1, 2, 1];
        let mut r = rng::seeded(1);
        let mixed = mix_batch(&clouds, &labels, 0.2, 3, &mut r).unwrap();
        assert_eq!(mixed.len(), 4);
        for m in mixed {
            assert_eq!(m.cloud.len(), 16);
            assert!((m.soft_label.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
