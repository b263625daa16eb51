use rand::Rng;
use rand_distr::StandardNormal;

use super::{norm, PointCloud};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Per-coordinate Gaussian noise `N(0, sigma²)` clamped to `[-clip, clip]`.
pub fn jitter(cloud: &PointCloud, sigma: f64, clip: f64, seed: u64) -> PointCloud {
    jitter_with(cloud, sigma, clip, &mut rng::seeded(seed))
}

pub fn jitter_with<R: Rng + ?Sized>(cloud: &PointCloud, sigma: f64, clip: f64, rng: &mut R) -> PointCloud {
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            p.map(|c| {
                let z: f64 = rng.sample(StandardNormal);
                c + (sigma * z).clamp(-clip, clip)
            })
        })
        .collect();
    PointCloud::from_points_unchecked(points)
}

/// Exact sine and cosine for multiples of 90°, `f64::sin_cos` otherwise.
fn sin_cos_degrees(degrees: f64) -> (f64, f64) {
    let quarter = degrees / 90.0;
    if quarter.fract() == 0.0 && quarter.abs() < 1e15 {
        match (quarter as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        degrees.to_radians().sin_cos()
    }
}

/// Right-handed rotation about `axis` through the origin (counter-clockwise
/// when viewed from the positive end of the axis).
pub fn align_rotate(cloud: &PointCloud, axis: Axis, degrees: f64) -> PointCloud {
    let (s, c) = sin_cos_degrees(degrees);
    let points = cloud
        .points()
        .iter()
        .map(|&[x, y, z]| match axis {
            Axis::X => [x, c * y - s * z, s * y + c * z],
            Axis::Y => [c * x + s * z, y, -s * x + c * z],
            Axis::Z => [c * x - s * y, s * x + c * y, z],
        })
        .collect();
    PointCloud::from_points_unchecked(points)
}

/// Centres the cloud on its centroid and scales the farthest point to norm 1.
pub fn normalize_unit_sphere(cloud: &PointCloud) -> PointCloud {
    let c = cloud.centroid();
    let centred: Vec<_> = cloud
        .points()
        .iter()
        .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
        .collect();
    let max = centred.iter().map(norm).fold(0.0, f64::max);
    let points = if max > 1e-12 {
        centred.into_iter().map(|p| p.map(|v| v / max)).collect()
    } else {
        centred
    };
    PointCloud::from_points_unchecked(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::squared_distance;

    fn sample() -> PointCloud {
        PointCloud::new(vec![
            [0.3, -0.2, 0.9],
            [1.5, 0.0, -0.4],
            [-0.7, 0.8, 0.1],
            [0.0, 0.0, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn rotation_about_x_by_90() {
        let c = PointCloud::new(vec![[0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(align_rotate(&c, Axis::X, 90.0).points()[0], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn right_handed_about_y_and_z() {
        let c = PointCloud::new(vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap();
        let ry = align_rotate(&c, Axis::Y, 90.0);
        assert_eq!(ry.points()[0], [1.0, 0.0, 0.0]);
        let rz = align_rotate(&c, Axis::Z, 90.0);
        assert_eq!(rz.points()[1], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let c = sample();
        assert_eq!(align_rotate(&c, Axis::Z, 0.0), c);
    }

    #[test]
    fn rotation_preserves_pairwise_distances() {
        let c = sample();
        let r = align_rotate(&c, Axis::Y, 37.5);
        for i in 0..c.len() {
            for j in 0..c.len() {
                let d0 = squared_distance(&c.points()[i], &c.points()[j]).sqrt();
                let d1 = squared_distance(&r.points()[i], &r.points()[j]).sqrt();
                assert!((d0 - d1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jitter_is_bounded_and_reproducible() {
        let c = sample();
        let a = jitter(&c, 0.01, 0.02, 3);
        let b = jitter(&c, 0.01, 0.02, 3);
        assert_eq!(a, b);
        for (p, q) in c.points().iter().zip(a.points()) {
            for d in 0..3 {
                assert!((p[d] - q[d]).abs() <= 0.02);
            }
        }
    }

    #[test]
    fn tiny_sigma_is_nearly_identity() {
        let c = sample();
        let a = jitter(&c, 1e-300, 0.02, 9);
        for (p, q) in c.points().iter().zip(a.points()) {
            for d in 0..3 {
                assert!((p[d] - q[d]).abs() < 1e-290);
            }
        }
    }

    #[test]
    fn normalize_single_point_goes_to_origin() {
        let c = PointCloud::new(vec![[4.0, -2.0, 7.0]]).unwrap();
        assert_eq!(normalize_unit_sphere(&c).points()[0], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_symmetric_pair_is_unchanged() {
        let c = PointCloud::new(vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(normalize_unit_sphere(&c), c);
    }

    #[test]
    fn normalize_postconditions() {
        let n = normalize_unit_sphere(&sample());
        assert!(norm(&n.centroid()) < 1e-12);
        let max = n.points().iter().map(norm).fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
    }
}
