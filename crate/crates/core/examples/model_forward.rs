//! The desk-scale network: global features, class logits, per-point part
//! logits and a folding reconstruction.
//!
//! Usage: `cargo run --release --example model_forward`

use sen::data::{build_dataset, DatasetSpec, DomainProfile};
use sen::geometry::chamfer_distance;
use sen::model::{encode_cloud, logits, reconstruct, Arch, FeatureMode, ModelParams, Task};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> sen::Result<()> {
    let data = build_dataset(&DatasetSpec::classification(5, DomainProfile::CLEAN, 64, 0))?;
    let params = ModelParams::init(Arch::desk(Task::Classification, 6, 64), 1)?;
    println!("classifier: {} parameter tensors, {} scalars", params.len(), params.num_scalars());

    let cloud = &data.train.clouds[0];
    let global = encode_cloud(&params, cloud, FeatureMode::Global)?;
    println!("global feature shape {:?}", global.shape());
    let l = logits(&params, &data.train.clouds[..4])?;
    println!("logits for 4 clouds: shape {:?}", l.shape());
    let rec = reconstruct(&params, cloud)?;
    println!("untrained reconstruction: {} points, chamfer {:.3}", rec.len(), chamfer_distance(&rec, cloud));

    let seg = ModelParams::init(Arch::desk(Task::Segmentation, 3, 64), 1)?;
    let per_point = encode_cloud(&seg, cloud, FeatureMode::PerPoint)?;
    println!("segmentation per-point features: shape {:?}", per_point.shape());
    Ok(())
}
