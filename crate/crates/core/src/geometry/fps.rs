use rand::Rng;

use super::{squared_distance, PointCloud};
use crate::error::{Error, Result};
use crate::rng;

/// Greedy farthest-point sampling with a seeded random first point.
pub fn farthest_point_sample(cloud: &PointCloud, n: usize, seed: u64) -> Result<Vec<usize>> {
    let first = rng::seeded(seed).random_range(0..cloud.len());
    farthest_point_sample_from(cloud, n, first)
}

/// Greedy farthest-point sampling starting from index `first`.
///
/// Each step picks the unselected point with the largest squared distance
/// to the selected set; ties go to the lowest index.
pub fn farthest_point_sample_from(cloud: &PointCloud, n: usize, first: usize) -> Result<Vec<usize>> {
    let m = cloud.len();
    if n == 0 || n > m {
        return Err(Error::invalid(format!(
            "farthest_point_sample: requested {n} points from a cloud of {m}"
        )));
    }
    if first >= m {
        return Err(Error::invalid(format!(
            "farthest_point_sample: start index {first} out of range for {m} points"
        )));
    }
    let pts = cloud.points();
    let mut selected = vec![false; m];
    let mut min_d = vec![f64::INFINITY; m];
    let mut order = Vec::with_capacity(n);
    let mut current = first;
    loop {
        selected[current] = true;
        order.push(current);
        if order.len() == n {
            break;
        }
        let anchor = pts[current];
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in pts.iter().enumerate() {
            let d = squared_distance(p, &anchor);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if selected[i] {
                continue;
            }
            match best {
                Some((_, bd)) if min_d[i] <= bd => {}
                _ => best = Some((i, min_d[i])),
            }
        }
        current = best.expect("n <= m leaves an unselected point").0;
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> PointCloud {
        PointCloud::new(xs.iter().map(|&x| [x, 0.0, 0.0]).collect()).unwrap()
    }

    #[test]
    fn picks_the_far_end_of_a_line() {
        let c = line(&[0.0, 1.0, 10.0]);
        assert_eq!(farthest_point_sample_from(&c, 2, 0).unwrap(), vec![0, 2]);
    }

    #[test]
    fn full_sample_is_a_permutation() {
        let c = line(&[0.3, -1.0, 4.0, 2.5, 9.0]);
        let mut idx = farthest_point_sample(&c, 5, 7).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn identical_points_still_give_distinct_indices() {
        let c = PointCloud::new(vec![[1.0, 1.0, 1.0]; 4]).unwrap();
        assert_eq!(farthest_point_sample_from(&c, 2, 0).unwrap(), vec![0, 1]);
        assert_eq!(farthest_point_sample_from(&c, 2, 2).unwrap(), vec![2, 0]);
    }

    #[test]
    fn too_many_points_is_an_error() {
        let c = line(&[0.0, 1.0]);
        assert!(farthest_point_sample(&c, 3, 0).is_err());
        assert!(farthest_point_sample(&c, 0, 0).is_err());
    }

    #[test]
    fn seeded_start_is_deterministic() {
        let c = line(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(
            farthest_point_sample(&c, 3, 11).unwrap(),
            farthest_point_sample(&c, 3, 11).unwrap()
        );
    }
}
