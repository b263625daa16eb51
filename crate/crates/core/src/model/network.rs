use std::sync::Arc;

use super::arch::Arch;
use super::params::Bound;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{knn_rows, KnnGraph, PointCloud};

/// kNN graphs of a batch of clouds flattened into global row indices.
#[derive(Clone, Debug)]
pub struct BatchGraph {
    pub k: usize,
    /// Row `i` repeated `k` times, for every point of the batch.
    pub centers: Arc<[usize]>,
    /// Neighbour rows aligned with `centers`.
    pub neighbours: Arc<[usize]>,
}

impl BatchGraph {
    pub fn from_graphs(graphs: &[KnnGraph], points: usize) -> Result<Self> {
        let k = graphs.first().map(|g| g.k).unwrap_or(0);
        let mut centers = Vec::with_capacity(graphs.len() * points * k);
        let mut neighbours = Vec::with_capacity(centers.capacity());
        for (s, g) in graphs.iter().enumerate() {
            if g.k != k || g.len() != points {
                return Err(Error::invalid("edgeconv: graph does not match the point count"));
            }
            let offset = s * points;
            for i in 0..points {
                for &j in g.neighbours(i) {
                    centers.push(offset + i);
                    neighbours.push(offset + j);
                }
            }
        }
        Ok(BatchGraph {
            k,
            centers: centers.into(),
            neighbours: neighbours.into(),
        })
    }

    /// Per-sample kNN over the rows of a `(batch·points) × dim` value.
    pub fn build(values: &Tensor, batch: usize, points: usize, k: usize) -> Result<Self> {
        let dim = values.row_len();
        if values.rows() != batch * points {
            return Err(Error::shape("knn_graph", values.shape(), &[batch, points]));
        }
        let graphs = (0..batch)
            .map(|s| {
                let rows = &values.data()[s * points * dim..(s + 1) * points * dim];
                knn_rows(rows, points, dim, k)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_graphs(&graphs, points)
    }
}

/// One EdgeConv layer: for each point, the max over its neighbours `j` of
/// `leaky_relu(affine([h_i, h_j − h_i] · W))`.
///
/// `W` is stored as `2F × F'`. Because the edge function is linear,
/// `[h_i, h_j − h_i]·W = h_i·(W_c − W_d) + h_j·W_d`, so each point is
/// projected once. After the per-column affine map the centre term is
/// constant over `j` and leaky ReLU is monotone, so the max only has to
/// run over the scaled neighbour projections `s ⊙ h_j·W_d`.
pub fn edgeconv_layer(
    tape: &mut Tape,
    features: Var,
    graph: &BatchGraph,
    w: Var,
    scale: Var,
    shift: Var,
) -> Result<Var> {
    let fin = tape.shape(features).get(1).copied().unwrap_or(0);
    let wshape = tape.shape(w).to_vec();
    if tape.shape(features).len() != 2 || wshape.len() != 2 || wshape[0] != 2 * fin {
        return Err(Error::shape("edgeconv", tape.shape(features), &wshape));
    }
    let rows = tape.shape(features)[0];
    if graph.centers.len() != rows * graph.k {
        return Err(Error::shape("edgeconv", &[rows, graph.k], &[graph.centers.len()]));
    }
    let fout = wshape[1];
    let w_center = tape.gather_rows(w, (0..fin).collect::<Vec<_>>().into())?;
    let w_diff = tape.gather_rows(w, (fin..2 * fin).collect::<Vec<_>>().into())?;
    let u = tape.matmul(features, w_center)?;
    let v = tape.matmul(features, w_diff)?;
    let own = tape.sub(u, v)?;
    let own = tape.affine(own, scale, shift)?;
    let s = tape.broadcast_rows(scale, rows)?;
    let v = tape.mul(v, s)?;
    let nb = tape.gather_rows(v, graph.neighbours.clone())?;
    let grouped = tape.reshape(nb, vec![rows, graph.k, fout])?;
    let nb_max = tape.reduce_max(grouped, 1)?;
    let pre = tape.add(own, nb_max)?;
    tape.leaky_relu(pre)
}

/// Encoder outputs for a batch.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    /// `batch × F`.
    pub global: Var,
    /// `(batch·M) × (F_last + F)`: local feature with the global feature appended.
    pub per_point: Option<Var>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureMode {
    Global,
    PerPoint,
}

pub fn clouds_tensor(clouds: &[PointCloud], points: usize) -> Result<Tensor> {
    if clouds.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut data = Vec::with_capacity(clouds.len() * points * 3);
    for c in clouds {
        if c.len() != points {
            return Err(Error::shape("encode", &[c.len(), 3], &[points, 3]));
        }
        data.extend(c.points().iter().flatten());
    }
    Tensor::new(vec![clouds.len() * points, 3], data)
}

fn repeat_each(n: usize, times: usize) -> Arc<[usize]> {
    (0..n).flat_map(|i| std::iter::repeat_n(i, times)).collect()
}

/// Shared feature extractor over a batch of `M`-point clouds.
pub fn encode(tape: &mut Tape, net: &Bound, clouds: &[PointCloud], mode: FeatureMode) -> Result<Encoded> {
    let arch = net.arch().clone();
    let batch = clouds.len();
    let x = clouds_tensor(clouds, arch.points)?;
    let coord_graph = BatchGraph::build(&x, batch, arch.points, arch.k)?;
    let mut h = tape.constant(x);
    let mut graph = coord_graph;
    for i in 0..arch.edge_widths.len() {
        if i > 0 && arch.dynamic_graph {
            graph = BatchGraph::build(tape.value(h), batch, arch.points, arch.k)?;
        }
        let p = format!("encoder.edgeconv{}", i + 1);
        h = edgeconv_layer(
            tape,
            h,
            &graph,
            net.var(&format!("{p}.w")),
            net.var(&format!("{p}.scale")),
            net.var(&format!("{p}.shift")),
        )?;
    }
    let proj = tape.matmul(h, net.var("encoder.proj.w"))?;
    let proj = tape.affine(proj, net.var("encoder.proj.scale"), net.var("encoder.proj.shift"))?;
    let proj = tape.leaky_relu(proj)?;
    let grouped = tape.reshape(proj, vec![batch, arch.points, arch.latent])?;
    let global = tape.reduce_max(grouped, 1)?;
    let per_point = match mode {
        FeatureMode::Global => None,
        FeatureMode::PerPoint => {
            let spread = tape.gather_rows(global, repeat_each(batch, arch.points))?;
            Some(tape.concat(h, spread)?)
        }
    };
    Ok(Encoded { global, per_point })
}

fn mlp_head(tape: &mut Tape, net: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let h = tape.linear(x, net.var(&format!("{prefix}.fc1.w")), net.var(&format!("{prefix}.fc1.b")))?;
    let h = tape.leaky_relu(h)?;
    tape.linear(h, net.var(&format!("{prefix}.fc2.w")), net.var(&format!("{prefix}.fc2.b")))
}

/// Class logits, `batch × C`, from global features.
pub fn classify(tape: &mut Tape, net: &Bound, global: Var) -> Result<Var> {
    mlp_head(tape, net, "cls", global)
}

/// Per-point part logits, `(batch·M) × C`, from per-point features.
pub fn segment(tape: &mut Tape, net: &Bound, per_point: Var) -> Result<Var> {
    mlp_head(tape, net, "seg", per_point)
}

/// Fixed 2-D folding grid, uniform in `[-0.5, 0.5]²`, `M × 2`.
pub fn folding_grid(arch: &Arch) -> Tensor {
    let (rows, cols) = arch.grid();
    let coord = |i: usize, n: usize| {
        if n == 1 {
            0.0
        } else {
            -0.5 + i as f64 / (n - 1) as f64
        }
    };
    let mut data = Vec::with_capacity(rows * cols * 2);
    for r in 0..rows {
        for c in 0..cols {
            data.push(coord(r, rows));
            data.push(coord(c, cols));
        }
    }
    Tensor::from_parts(vec![rows * cols, 2], data)
}

/// Folding decoder: each grid seed, concatenated with the latent code, is
/// mapped through the MLP to one output point. Returns `(batch·M) × 3`.
pub fn decode(tape: &mut Tape, net: &Bound, global: Var) -> Result<Var> {
    let arch = net.arch().clone();
    let batch = tape.shape(global)[0];
    let m = arch.points;
    let w1 = net.var("decoder.fc1.w");
    // [z, g]·W = z·W_z + g·W_g
    let w_latent = tape.gather_rows(w1, (0..arch.latent).collect::<Vec<_>>().into())?;
    let w_grid = tape.gather_rows(w1, (arch.latent..arch.latent + 2).collect::<Vec<_>>().into())?;
    let grid = tape.constant(folding_grid(&arch));
    let zl = tape.matmul(global, w_latent)?;
    let gl = tape.matmul(grid, w_grid)?;
    let zl = tape.gather_rows(zl, repeat_each(batch, m))?;
    let point_rows: Arc<[usize]> = (0..batch).flat_map(|_| 0..m).collect();
    let gl = tape.gather_rows(gl, point_rows)?;
    let pre = tape.add(zl, gl)?;
    let b1 = tape.broadcast_rows(net.var("decoder.fc1.b"), batch * m)?;
    let mut h = tape.add(pre, b1)?;
    h = tape.leaky_relu(h)?;
    let layers = arch.decoder_widths.len() + 1;
    for i in 2..=layers {
        h = tape.linear(h, net.var(&format!("decoder.fc{i}.w")), net.var(&format!("decoder.fc{i}.b")))?;
        if i < layers {
            h = tape.leaky_relu(h)?;
        }
    }
    Ok(h)
}
