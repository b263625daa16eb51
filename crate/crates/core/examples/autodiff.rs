//! Build a small graph on a tape, run backward and compare against central
//! differences.
//!
//! Usage: `cargo run --release --example autodiff`

use sen::autodiff::{finite_difference_check, Parameter, Tape, Tensor};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> sen::Result<()> {
    // loss = sum(log_softmax(x·W + b)[:, 0]) for a 2×3 batch
    let x = Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.7])?;
    let w = Parameter::new("w", Tensor::matrix(3, 2, vec![0.2, -0.4, 0.7, 0.1, -0.3, 0.5])?);
    let b = Parameter::new("b", Tensor::vector(vec![0.05, -0.05]));

    let build = |tape: &mut Tape, v: &[sen::autodiff::Var]| {
        let x = tape.constant(x.clone());
        let logits = tape.linear(x, v[0], v[1])?;
        let lp = tape.log_softmax(logits)?;
        let pick = tape.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 1.0, 0.0])?);
        let first = tape.mul(lp, pick)?;
        tape.sum(first)
    };

    let mut tape = Tape::new();
    let vars = [tape.param(0, w.value().clone()), tape.param(1, b.value().clone())];
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    println!("loss {:.6} over {} tape nodes", tape.value(loss).item()?, tape.len());
    println!("dL/dw {:?}", grads.wrt(vars[0]).unwrap_or_default());
    println!("dL/db {:?}", grads.wrt(vars[1]).unwrap_or_default());

    let report = finite_difference_check(build, &[w, b], 1e-5, 1e-4)?;
    for p in &report.params {
        println!("{:<2} checked {} max rel err {:.2e}", p.name, p.checked, p.max_rel_err);
    }
    println!("{}", if report.passed() { "gradients agree" } else { "gradient mismatch" });
    Ok(())
}
