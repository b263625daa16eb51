//! The teacher as an exponential moving average of the student: with a
//! fixed student the gap shrinks geometrically by the momentum.
//!
//! Usage: `cargo run --release --example mean_teacher -- [momentum]`

use sen::model::{Arch, ModelParams, Task};
use sen::teacher::{init_teacher, EmaState};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn gap(a: &ModelParams, b: &ModelParams) -> f64 {
    a.iter()
        .zip(b.iter())
        .flat_map(|(p, q)| p.value().data().iter().zip(q.value().data()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

fn main() -> sen::Result<()> {
    let momentum: f64 = std::env::args().nth(1).map_or(0.99, |a| a.parse().expect("numeric momentum"));
    let arch = Arch::tiny(Task::Classification, 3, 16);
    let student = ModelParams::init(arch.clone(), 1)?;
    let mut teacher = init_teacher(&ModelParams::init(arch, 2)?);
    let mut ema = EmaState::new(momentum)?;
    let start = gap(&teacher, &student);
    for step in 1..=300 {
        ema.update(&mut teacher, &student)?;
        if step % 50 == 0 {
            let g = gap(&teacher, &student);
            println!(
                "step {step:>3}: max |θ' − θ| = {g:.3e}, α^t·gap₀ = {:.3e}",
                momentum.powi(step) * start
            );
        }
    }
    Ok(())
}
