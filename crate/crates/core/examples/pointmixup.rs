//! PointMixup: two clouds mixed by FPS subsets with a Beta-drawn weight
//! and the matching soft label.
//!
//! Usage: `cargo run --release --example pointmixup -- [alpha]`

use sen::augment::{pointmixup, sample_gamma, split_counts};
use sen::data::{generate_shape, ShapeFamily, ShapeSpec};
use sen::geometry::farthest_point_sample;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> sen::Result<()> {
    let alpha: f64 = std::env::args().nth(1).map_or(0.2, |a| a.parse().expect("numeric alpha"));
    let shape = |family, seed| -> sen::Result<_> {
        let raw = generate_shape(&ShapeSpec { family, scale_jitter: 0.0 }, 512, seed)?.cloud;
        Ok(raw.select(&farthest_point_sample(&raw, 64, seed)?))
    };
    let sphere = shape(ShapeFamily::Sphere, 1)?;
    let cube = shape(ShapeFamily::Box, 2)?;

    for seed in 0..5 {
        let gamma = sample_gamma(alpha, seed)?;
        let mixed = pointmixup(&sphere, 0, &cube, 1, gamma, 6, seed)?;
        let (from_sphere, from_cube) = split_counts(gamma, 64);
        println!(
            "γ = {gamma:.3}: {from_sphere:>2} sphere + {from_cube:>2} box points = {}, label {:?}",
            mixed.cloud.len(),
            mixed.soft_label.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        );
    }
    let draws: Vec<f64> = (0..10_000).map(|s| sample_gamma(alpha, 1000 + s)).collect::<sen::Result<_>>()?;
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let extreme = draws.iter().filter(|&&g| !(0.05..=0.95).contains(&g)).count();
    println!("Beta({alpha}, {alpha}) over 10⁴ draws: mean {mean:.4}, {extreme} outside [0.05, 0.95]");
    Ok(())
}
