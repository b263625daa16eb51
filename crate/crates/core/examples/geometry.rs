//! Point-cloud kernels: farthest-point sampling, kNN graphs, Chamfer
//! distance and the preprocessing transforms.
//!
//! Usage: `cargo run --release --example geometry`

use sen::data::{generate_shape, ShapeFamily, ShapeSpec};
use sen::geometry::{
    align_rotate, chamfer_distance, farthest_point_sample, jitter, knn_graph, normalize_unit_sphere, Axis,
};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> sen::Result<()> {
    let spec = ShapeSpec {
        family: ShapeFamily::Torus,
        scale_jitter: 0.0,
    };
    let raw = generate_shape(&spec, 1024, 7)?.cloud;
    let idx = farthest_point_sample(&raw, 64, 1)?;
    let cloud = normalize_unit_sphere(&raw.select(&idx));
    println!("torus: {} raw points, {} after FPS", raw.len(), cloud.len());

    let graph = knn_graph(&cloud, 8)?;
    println!("neighbours of point 0: {:?}", graph.neighbours(0));

    let noisy = jitter(&cloud, 0.01, 0.02, 3);
    let turned = align_rotate(&cloud, Axis::X, 90.0);
    println!("chamfer(cloud, cloud)         = {:.6}", chamfer_distance(&cloud, &cloud));
    println!("chamfer(cloud, jittered)      = {:.6}", chamfer_distance(&cloud, &noisy));
    println!("chamfer(cloud, rotated 90° X) = {:.6}", chamfer_distance(&cloud, &turned));
    println!("chamfer(cloud, half of it)    = {:.6}", chamfer_distance(&cloud, &cloud.select(&(0..32).collect::<Vec<_>>())));
    Ok(())
}
