use super::PointCloud;
use crate::error::{Error, Result};

/// Exact k-nearest-neighbour graph, self excluded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnnGraph {
    pub k: usize,
    /// Row-major `m × k`; row `i` lists neighbours of `i` nearest first.
    pub indices: Vec<usize>,
}

impl KnnGraph {
    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.k.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn knn_graph(cloud: &PointCloud, k: usize) -> Result<KnnGraph> {
    knn_rows(&cloud.flat(), cloud.len(), 3, k)
}

/// kNN over `m` feature rows of width `dim` by squared Euclidean distance.
/// Ties are broken by the lower index.
pub fn knn_rows(features: &[f64], m: usize, dim: usize, k: usize) -> Result<KnnGraph> {
    if features.len() != m * dim {
        return Err(Error::shape("knn_graph", &[m, dim], &[features.len()]));
    }
    if k == 0 || k >= m {
        return Err(Error::invalid(format!(
            "knn_graph: k = {k} must be in 1..{m} for {m} points"
        )));
    }
    // symmetric distance matrix, each pair evaluated once
    let mut dist = vec![0.0; m * m];
    for i in 0..m {
        let fi = &features[i * dim..(i + 1) * dim];
        for j in i + 1..m {
            let fj = &features[j * dim..(j + 1) * dim];
            let d: f64 = fi.iter().zip(fj).map(|(a, b)| (a - b) * (a - b)).sum();
            dist[i * m + j] = d;
            dist[j * m + i] = d;
        }
    }
    let mut indices = Vec::with_capacity(m * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(m);
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    for i in 0..m {
        cand.clear();
        cand.extend((0..m).filter(|&j| j != i).map(|j| (dist[i * m + j], j)));
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, by_dist);
            cand.truncate(k);
        }
        cand.sort_unstable_by(by_dist);
        indices.extend(cand.iter().map(|&(_, j)| j));
    }
    Ok(KnnGraph { k, indices })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_triple() {
        let c = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
        let g = knn_graph(&c, 1).unwrap();
        assert_eq!(g.indices, vec![1, 0, 1]);
    }

    #[test]
    fn k_all_others_is_a_permutation() {
        let c = PointCloud::new(vec![
            [0.0, 0.0, 0.0],
            [1.0, 2.0, 0.0],
            [3.0, 0.0, 1.0],
            [0.5, 0.5, 0.5],
        ])
        .unwrap();
        let g = knn_graph(&c, 3).unwrap();
        for i in 0..4 {
            let mut row = g.neighbours(i).to_vec();
            row.sort_unstable();
            let expect: Vec<usize> = (0..4).filter(|&j| j != i).collect();
            assert_eq!(row, expect);
        }
    }

    #[test]
    fn ties_resolve_to_lower_index() {
        let c = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        let g = knn_graph(&c, 1).unwrap();
        assert_eq!(g.neighbours(0), &[1]);
    }

    #[test]
    fn k_too_large() {
        let c = PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        assert!(knn_graph(&c, 2).is_err());
        assert!(knn_graph(&c, 0).is_err());
    }
}
