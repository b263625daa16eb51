//! Point-cloud kernels: sampling, neighbourhoods, Chamfer distance and
//! preprocessing transforms.

mod chamfer;
mod fps;
mod knn;
mod transform;

pub use chamfer::{chamfer_distance, chamfer_on_tape, exact_sum, nearest_indices};
pub use fps::{farthest_point_sample, farthest_point_sample_from};
pub use knn::{knn_graph, knn_rows, KnnGraph};
pub use transform::{align_rotate, jitter, jitter_with, normalize_unit_sphere, Axis};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// A non-empty set of finite 3D points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud must contain at least one point"));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("point cloud coordinates must be finite"));
        }
        Ok(PointCloud { points })
    }

    /// Builds a cloud from a flat `[x0, y0, z0, x1, ...]` slice.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if coords.len() % 3 != 0 {
            return Err(Error::invalid(format!(
                "flat coordinate buffer length {} is not a multiple of 3",
                coords.len()
            )));
        }
        Self::new(coords.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    /// `m × 3` tensor view of the coordinates.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.points.len(), 3], self.flat()).expect("non-empty cloud")
    }

    pub fn centroid(&self) -> Point {
        let n = self.points.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for d in 0..3 {
                c[d] += p[d];
            }
        }
        c.map(|v| v / n)
    }

    pub(crate) fn from_points_unchecked(points: Vec<Point>) -> Self {
        debug_assert!(!points.is_empty());
        PointCloud { points }
    }
}

pub fn squared_distance(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

pub fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![[0.0, f64::NAN, 0.0]]).is_err());
        assert!(PointCloud::from_flat(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let c = PointCloud::from_flat(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.flat(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(c.to_tensor().shape(), &[2, 3]);
    }
}
