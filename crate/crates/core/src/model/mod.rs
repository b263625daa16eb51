//! EdgeConv encoder, classification/segmentation heads and folding decoder.
//!
//! All forward functions work on a batch of equally sized clouds stacked
//! row-wise, so a batch of `B` clouds with `M` points is a `(B·M) × 3` value.

mod arch;
mod network;
mod params;

pub use arch::{Arch, Task};
pub use network::{
    classify, clouds_tensor, decode, edgeconv_layer, encode, folding_grid, segment, BatchGraph, Encoded,
    FeatureMode,
};
pub use params::{Bound, ModelParams};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Feature of a single cloud: `F` values in global mode, `M × (F_last + F)`
/// in per-point mode.
pub fn encode_cloud(params: &ModelParams, cloud: &PointCloud, mode: FeatureMode) -> Result<Tensor> {
    let mut tape = Tape::new();
    let net = params.bind(&mut tape, false);
    let enc = encode(&mut tape, &net, std::slice::from_ref(cloud), mode)?;
    Ok(match mode {
        FeatureMode::Global => tape.value(enc.global).reshape(vec![params.arch().latent])?,
        FeatureMode::PerPoint => tape.value(enc.per_point.expect("per-point requested")).clone(),
    })
}

/// Reconstruction of a single cloud, `M × 3`.
pub fn reconstruct(params: &ModelParams, cloud: &PointCloud) -> Result<PointCloud> {
    let mut tape = Tape::new();
    let net = params.bind(&mut tape, false);
    let enc = encode(&mut tape, &net, std::slice::from_ref(cloud), FeatureMode::Global)?;
    let out = decode(&mut tape, &net, enc.global)?;
    PointCloud::from_flat(tape.value(out).data())
}

fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let w = t.row_len();
    t.data()
        .chunks(w)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Logits for a batch: `batch × C` (classification) or `(batch·M) × C`.
pub fn logits(params: &ModelParams, clouds: &[PointCloud]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let net = params.bind(&mut tape, false);
    let out = match params.arch().task {
        Task::Classification => {
            let enc = encode(&mut tape, &net, clouds, FeatureMode::Global)?;
            classify(&mut tape, &net, enc.global)?
        }
        Task::Segmentation => {
            let enc = encode(&mut tape, &net, clouds, FeatureMode::PerPoint)?;
            segment(&mut tape, &net, enc.per_point.expect("per-point requested"))?
        }
    };
    Ok(tape.value(out).clone())
}

/// Predicted class per cloud, evaluated `batch` clouds at a time.
pub fn predict_classes(params: &ModelParams, clouds: &[PointCloud], batch: usize) -> Result<Vec<usize>> {
    if params.arch().task != Task::Classification {
        return Err(Error::invalid("predict_classes needs a classification model"));
    }
    let mut out = Vec::with_capacity(clouds.len());
    for chunk in clouds.chunks(batch.max(1)) {
        out.extend(argmax_rows(&logits(params, chunk)?));
    }
    Ok(out)
}

/// Predicted part label per point of every cloud.
pub fn predict_parts(params: &ModelParams, clouds: &[PointCloud], batch: usize) -> Result<Vec<Vec<usize>>> {
    if params.arch().task != Task::Segmentation {
        return Err(Error::invalid("predict_parts needs a segmentation model"));
    }
    let m = params.arch().points;
    let mut out = Vec::with_capacity(clouds.len());
    for chunk in clouds.chunks(batch.max(1)) {
        let labels = argmax_rows(&logits(params, chunk)?);
        out.extend(labels.chunks(m).map(<[usize]>::to_vec));
    }
    Ok(out)
}
