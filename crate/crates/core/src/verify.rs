//! Finite-difference verification of every autodiff primitive and of the
//! joint objective on a tiny network.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{GradCheck, GradCheckReport, Parameter, Primitive, Tape, Tensor, Var, LEAKY_SLOPE};
use crate::error::Result;
use crate::geometry::PointCloud;
use crate::loss::{total_loss, DomainBatch, LossTerms, SourceLabels};
use crate::model::{Arch, ModelParams, Task};
use crate::rng;

/// Random cases per primitive.
pub const CASES_PER_PRIMITIVE: usize = 50;

/// Aggregate of all random cases of one primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveCheck {
    pub primitive: &'static str,
    pub cases: usize,
    pub checked: usize,
    pub skipped: usize,
    pub below_noise: usize,
    pub failures: usize,
    pub max_rel_err: f64,
}

/// No failures, and the checked entries outnumber the uncheckable ones
/// (kinks, rounding floor) at least four to one.
fn sound(checked: usize, unchecked: usize, failures: usize) -> bool {
    failures == 0 && checked > 0 && checked >= 4 * unchecked
}

impl PrimitiveCheck {
    pub fn passed(&self) -> bool {
        sound(self.checked, self.skipped + self.below_noise, self.failures)
    }
}

impl LossCheck {
    pub fn passed(&self) -> bool {
        let r = &self.report;
        let failures = r.params.iter().map(|p| p.failures).sum();
        sound(r.checked(), r.skipped() + r.below_noise(), failures)
    }
}

/// Gradient check of the joint objective for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct LossCheck {
    pub task: Task,
    pub report: GradCheckReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub tol: f64,
    pub primitives: Vec<PrimitiveCheck>,
    pub losses: Vec<LossCheck>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.primitives.iter().all(PrimitiveCheck::passed) && self.losses.iter().all(LossCheck::passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        let prim = self.primitives.iter().map(|p| p.max_rel_err);
        let loss = self.losses.iter().map(|l| l.report.max_rel_err());
        prim.chain(loss).fold(0.0, f64::max)
    }

    /// One human-readable line per primitive and per objective.
    pub fn lines(&self) -> Vec<String> {
        let mark = |ok: bool| if ok { "ok  " } else { "FAIL" };
        let mut out: Vec<String> = self
            .primitives
            .iter()
            .map(|p| {
                format!(
                    "{} {:<26} cases {:>3}  checked {:>5}  kinks {:>3}  below noise {:>3}  max rel err {:.2e}",
                    mark(p.passed()),
                    p.primitive,
                    p.cases,
                    p.checked,
                    p.skipped,
                    p.below_noise,
                    p.max_rel_err
                )
            })
            .collect();
        for l in &self.losses {
            let r = &l.report;
            out.push(format!(
                "{} {:<26} tensors {:>2}  checked {:>5}  kinks {:>3}  below noise {:>3}  max rel err {:.2e}",
                mark(l.passed()),
                format!("total_loss/{}", l.task.as_str()),
                r.params.len(),
                r.checked(),
                r.skipped(),
                r.below_noise(),
                r.max_rel_err()
            ));
        }
        out
    }
}

/// Names of every primitive the suite covers.
pub fn primitive_names() -> Vec<&'static str> {
    kinds().iter().map(|k| k.name()).collect()
}

// Parameters here are placeholders; each case draws its own.
fn kinds() -> Vec<Primitive> {
    vec![
        Primitive::MatMul,
        Primitive::Add,
        Primitive::Sub,
        Primitive::MulElementwise,
        Primitive::ScalarMul(1.0),
        Primitive::Relu,
        Primitive::LeakyRelu(LEAKY_SLOPE),
        Primitive::ConcatLastAxis,
        Primitive::ReduceMaxOverAxis(0),
        Primitive::ReduceMeanOverAxis(0),
        Primitive::ReduceSum,
        Primitive::Square,
        Primitive::LogSoftmax,
        Primitive::GatherRows(Arc::from(vec![0])),
        Primitive::BroadcastRows(1),
        Primitive::Reshape(vec![1]),
    ]
}

fn random_tensor(shape: Vec<usize>, r: &mut rng::Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).expect("consistent shape")
}

fn random_shape(r: &mut rng::Rng) -> Vec<usize> {
    let rank = r.random_range(1..=3);
    (0..rank).map(|_| r.random_range(1..=4)).collect()
}

/// Concrete primitive and input tensors for one random case of `kind`.
fn random_case(kind: &Primitive, r: &mut rng::Rng) -> (Primitive, Vec<Tensor>) {
    let dim = |lo: usize, hi: usize, r: &mut rng::Rng| r.random_range(lo..=hi);
    match kind {
        Primitive::MatMul => {
            let (n, k, m) = (dim(1, 5, r), dim(1, 5, r), dim(1, 5, r));
            (Primitive::MatMul, vec![random_tensor(vec![n, k], r), random_tensor(vec![k, m], r)])
        }
        Primitive::Add | Primitive::Sub | Primitive::MulElementwise => {
            let s = random_shape(r);
            (kind.clone(), vec![random_tensor(s.clone(), r), random_tensor(s, r)])
        }
        Primitive::ScalarMul(_) => {
            let s = r.random_range(-2.0..2.0);
            let shape = random_shape(r);
            (Primitive::ScalarMul(s), vec![random_tensor(shape, r)])
        }
        Primitive::ConcatLastAxis => {
            let mut lead = random_shape(r);
            lead.pop();
            let (p, q) = (dim(1, 4, r), dim(1, 4, r));
            let a = random_tensor([lead.clone(), vec![p]].concat(), r);
            let b = random_tensor([lead, vec![q]].concat(), r);
            (Primitive::ConcatLastAxis, vec![a, b])
        }
        Primitive::ReduceMaxOverAxis(_) | Primitive::ReduceMeanOverAxis(_) => {
            let shape = random_shape(r);
            let axis = r.random_range(0..shape.len());
            let prim = match kind {
                Primitive::ReduceMaxOverAxis(_) => Primitive::ReduceMaxOverAxis(axis),
                _ => Primitive::ReduceMeanOverAxis(axis),
            };
            (prim, vec![random_tensor(shape, r)])
        }
        Primitive::LogSoftmax => {
            let (n, c) = (dim(1, 4, r), dim(2, 6, r));
            // wider logits exercise the max shift
            let mut t = random_tensor(vec![n, c], r);
            t.data_mut().iter_mut().for_each(|v| *v *= 3.0);
            (Primitive::LogSoftmax, vec![t])
        }
        Primitive::GatherRows(_) => {
            let (rows, w, n) = (dim(1, 5, r), dim(1, 4, r), dim(1, 8, r));
            let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..rows)).collect();
            (Primitive::GatherRows(Arc::from(idx)), vec![random_tensor(vec![rows, w], r)])
        }
        Primitive::BroadcastRows(_) => {
            let w = dim(1, 5, r);
            let shape = if r.random_bool(0.5) { vec![w] } else { vec![1, w] };
            (Primitive::BroadcastRows(dim(1, 5, r)), vec![random_tensor(shape, r)])
        }
        Primitive::Reshape(_) => {
            let shape = random_shape(r);
            let n: usize = shape.iter().product();
            let target = if shape.len() > 1 { vec![n] } else { vec![1, n] };
            (Primitive::Reshape(target), vec![random_tensor(shape, r)])
        }
        // unary elementwise and reduce_sum
        _ => (kind.clone(), vec![random_tensor(random_shape(r), r)]),
    }
}

/// `sum(op(inputs) ⊙ w)` for a fixed random `w`, so every output entry
/// carries a distinct adjoint.
fn check_case(prim: &Primitive, inputs: &[Tensor], r: &mut rng::Rng, settings: &GradCheck) -> Result<GradCheckReport> {
    let refs: Vec<&Tensor> = inputs.iter().collect();
    let out_shape = prim.forward(&refs)?.shape().to_vec();
    let weights = random_tensor(out_shape, r);
    let params: Vec<Parameter> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| Parameter::new(format!("x{i}"), t.clone()))
        .collect();
    settings.run(
        |tape: &mut Tape, vars: &[Var]| {
            let y = tape.apply(prim.clone(), vars)?;
            let w = tape.constant(weights.clone());
            let yw = tape.mul(y, w)?;
            tape.sum(yw)
        },
        &params,
    )
}

/// Runs `cases` random cases for every primitive.
pub fn check_primitives(cases: usize, seed: u64, settings: &GradCheck) -> Result<Vec<PrimitiveCheck>> {
    let mut out = Vec::new();
    for (i, kind) in kinds().iter().enumerate() {
        let mut r = rng::seeded(rng::derive(seed, i as u64));
        let mut check = PrimitiveCheck {
            primitive: kind.name(),
            cases,
            checked: 0,
            skipped: 0,
            below_noise: 0,
            failures: 0,
            max_rel_err: 0.0,
        };
        for _ in 0..cases {
            let (prim, inputs) = random_case(kind, &mut r);
            let report = check_case(&prim, &inputs, &mut r, settings)?;
            check.checked += report.checked();
            check.skipped += report.skipped();
            check.below_noise += report.below_noise();
            check.failures += report.params.iter().map(|p| p.failures).sum::<usize>();
            check.max_rel_err = check.max_rel_err.max(report.max_rel_err());
        }
        out.push(check);
    }
    Ok(out)
}

fn random_cloud(m: usize, r: &mut rng::Rng) -> PointCloud {
    let coords: Vec<f64> = (0..3 * m).map(|_| r.random_range(-1.0..1.0)).collect();
    PointCloud::from_flat(&coords).expect("3·m coordinates")
}

/// Gradient of the full joint objective with respect to every student
/// parameter of a tiny network (M = 16, k = 4, F = 16, C = 3), two clouds
/// per domain and a teacher that differs from the student.
pub fn check_total_loss(task: Task, seed: u64, settings: &GradCheck) -> Result<LossCheck> {
    const M: usize = 16;
    const C: usize = 3;
    let arch = Arch::tiny(task, C, M);
    let student = ModelParams::init(arch.clone(), rng::derive(seed, 0))?;
    let teacher = ModelParams::init(arch, rng::derive(seed, 1))?;
    let mut r = rng::seeded(rng::derive(seed, 2));
    let source: Vec<PointCloud> = (0..2).map(|_| random_cloud(M, &mut r)).collect();
    let target: Vec<PointCloud> = (0..2).map(|_| random_cloud(M, &mut r)).collect();
    let (labels, lambda) = match task {
        // soft labels cover the mixed-sample branch as well
        Task::Classification => (SourceLabels::Mixed(vec![vec![0.7, 0.3, 0.0], vec![0.0, 0.0, 1.0]]), 0.2),
        Task::Segmentation => {
            let parts = (0..2).map(|_| (0..M).map(|_| r.random_range(0..C)).collect()).collect();
            (SourceLabels::Parts(parts), 0.05)
        }
    };
    let batch = DomainBatch::new(source, labels, target);
    let report = settings.run(
        |tape: &mut Tape, vars: &[Var]| {
            let net = student.bind_vars(vars.to_vec())?;
            total_loss(tape, &batch, &net, &teacher, lambda, LossTerms::ALL).map(|(v, _)| v)
        },
        student.as_slice(),
    )?;
    Ok(LossCheck { task, report })
}

/// The complete suite: every primitive plus the joint objective in both modes.
pub fn run_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let settings = GradCheck::default();
    let primitives = check_primitives(cases, seed, &settings)?;
    let losses = [Task::Classification, Task::Segmentation]
        .into_iter()
        .map(|task| check_total_loss(task, seed, &settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport {
        tol: settings.tol,
        primitives,
        losses,
    })
}
