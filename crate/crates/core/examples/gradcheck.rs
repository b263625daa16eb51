//! Finite-difference check of every autodiff primitive and of the joint
//! objective on a tiny network.
//!
//! Usage: `cargo run --release --example gradcheck -- [cases] [seed]`

use std::time::Instant;

use sen::verify::{run_suite, CASES_PER_PRIMITIVE};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> sen::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("numeric argument"));
    let cases = args.next().map_or(CASES_PER_PRIMITIVE, |c| c as usize);
    let seed = args.next().unwrap_or(0);
    let started = Instant::now();
    let report = run_suite(cases, seed)?;
    for line in report.lines() {
        println!("{line}");
    }
    println!(
        "{} (max rel err {:.2e}, tol {:.0e}, {:.1}s)",
        if report.passed() { "PASS" } else { "FAIL" },
        report.max_rel_err(),
        report.tol,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
