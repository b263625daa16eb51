//! Training objectives and their joint composition.
//!
//! Classification: `λ·(L_s + L_soft) + L_t + L_cons`. Segmentation replaces
//! the soft term with a per-point consistency term on the source domain:
//! `λ·(L_s + L_cons_src) + L_t + L_cons_tgt`.

use std::sync::Arc;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{chamfer_on_tape, PointCloud};
use crate::model::{self, clouds_tensor, Bound, FeatureMode, ModelParams, Task};

/// Mean negative log-likelihood of `labels` under the rows of `log_probs`.
pub fn ce_loss(tape: &mut Tape, log_probs: Var, labels: &[usize]) -> Result<Var> {
    let shape = tape.shape(log_probs).to_vec();
    let (n, c) = match shape.as_slice() {
        [n, c] => (*n, *c),
        _ => return Err(Error::shape("ce_loss", &shape, &[labels.len()])),
    };
    if labels.len() != n {
        return Err(Error::shape("ce_loss", &shape, &[labels.len()]));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::invalid(format!("ce_loss: label {bad} out of range for {c} classes")));
    }
    let flat = tape.reshape(log_probs, vec![n * c, 1])?;
    let picks: Arc<[usize]> = labels.iter().enumerate().map(|(i, &y)| i * c + y).collect();
    let picked = tape.gather_rows(flat, picks)?;
    let s = tape.sum(picked)?;
    tape.scale(s, -1.0 / n as f64)
}

/// Mean cross-entropy against soft target distributions (one row per sample).
pub fn soft_ce_loss(tape: &mut Tape, log_probs: Var, targets: &Tensor) -> Result<Var> {
    let shape = tape.shape(log_probs).to_vec();
    if shape.len() != 2 || targets.shape() != shape.as_slice() {
        return Err(Error::shape("soft_ce_loss", &shape, targets.shape()));
    }
    for row in targets.data().chunks(shape[1]) {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&t| !(t >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "soft_ce_loss: target row {row:?} is not a probability distribution"
            )));
        }
    }
    let t = tape.constant(targets.clone());
    let prod = tape.mul(t, log_probs)?;
    let s = tape.sum(prod)?;
    tape.scale(s, -1.0 / shape[0] as f64)
}

/// Squared L2 distance between student and (detached) teacher features,
/// averaged over rows: samples for global features, points for per-point ones.
pub fn consistency_loss(tape: &mut Tape, student: Var, teacher: &Tensor) -> Result<Var> {
    let shape = tape.shape(student).to_vec();
    if shape.as_slice() != teacher.shape() {
        return Err(Error::shape("consistency_loss", &shape, teacher.shape()));
    }
    let t = tape.constant(teacher.clone());
    let d = tape.sub(student, t)?;
    let sq = tape.square(d)?;
    let s = tape.sum(sq)?;
    tape.scale(s, 1.0 / shape[0] as f64)
}

/// Chamfer distance between decoded clouds and their inputs, averaged over the batch.
pub fn recon_loss(tape: &mut Tape, decoded: Var, originals: &[PointCloud]) -> Result<Var> {
    if originals.is_empty() {
        return Err(Error::invalid("recon_loss: empty batch"));
    }
    let m = originals[0].len();
    let target = tape.constant(clouds_tensor(originals, m)?);
    let total = chamfer_on_tape(tape, decoded, target, originals.len())?;
    tape.scale(total, 1.0 / originals.len() as f64)
}

/// Per-component loss values of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_s: f64,
    /// Soft classification term (classification) or source consistency (segmentation).
    pub l_soft: f64,
    pub l_t: f64,
    pub l_cons: f64,
    pub total: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    /// `λ·(l_s + l_soft) + l_t + l_cons`, evaluated in the same order as the tape.
    pub fn recompose(&self) -> f64 {
        self.lambda * (self.l_s + self.l_soft) + self.l_t + self.l_cons
    }

    /// Name of the first non-finite component, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("l_s", self.l_s),
            ("l_soft", self.l_soft),
            ("l_t", self.l_t),
            ("l_cons", self.l_cons),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Which terms of the joint objective are active.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    pub supervised: bool,
    pub soft: bool,
    pub recon: bool,
    pub consistency: bool,
}

impl LossTerms {
    pub const ALL: LossTerms = LossTerms {
        supervised: true,
        soft: true,
        recon: true,
        consistency: true,
    };

    pub const SOURCE_ONLY: LossTerms = LossTerms {
        supervised: true,
        soft: false,
        recon: false,
        consistency: false,
    };

    fn needs_teacher(&self) -> bool {
        self.soft || self.consistency
    }

    fn needs_target(&self) -> bool {
        self.recon || self.consistency
    }
}

/// Source-domain supervision.
#[derive(Clone, Debug, PartialEq)]
pub enum SourceLabels {
    Classes(Vec<usize>),
    /// Soft labels from PointMixup, one distribution per sample.
    Mixed(Vec<Vec<f64>>),
    /// Per-point part labels.
    Parts(Vec<Vec<usize>>),
}

impl SourceLabels {
    pub fn len(&self) -> usize {
        match self {
            SourceLabels::Classes(v) => v.len(),
            SourceLabels::Mixed(v) => v.len(),
            SourceLabels::Parts(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One paired step's worth of data: labelled source and unlabelled target.
#[derive(Clone, Debug)]
pub struct DomainBatch {
    pub source: Vec<PointCloud>,
    pub labels: SourceLabels,
    pub target: Vec<PointCloud>,
    /// Separate views for the teacher; the student's inputs are reused when absent.
    pub teacher_source: Option<Vec<PointCloud>>,
    pub teacher_target: Option<Vec<PointCloud>>,
}

impl DomainBatch {
    pub fn new(source: Vec<PointCloud>, labels: SourceLabels, target: Vec<PointCloud>) -> Self {
        DomainBatch {
            source,
            labels,
            target,
            teacher_source: None,
            teacher_target: None,
        }
    }
}

/// Teacher outputs, computed without gradient tracking.
struct TeacherView {
    /// Class probabilities on the source batch (classification).
    source_probs: Option<Tensor>,
    /// Per-point features on the source batch (segmentation).
    source_features: Option<Tensor>,
    /// Global (classification) or per-point (segmentation) target features.
    target_features: Option<Tensor>,
}

fn teacher_view(teacher: &ModelParams, batch: &DomainBatch, terms: LossTerms) -> Result<TeacherView> {
    let mut tape = Tape::new();
    let net = teacher.bind(&mut tape, false);
    let task = teacher.arch().task;
    let src = batch.teacher_source.as_ref().unwrap_or(&batch.source);
    let tgt = batch.teacher_target.as_ref().unwrap_or(&batch.target);
    let mut view = TeacherView {
        source_probs: None,
        source_features: None,
        target_features: None,
    };
    if terms.soft {
        match task {
            Task::Classification => {
                let enc = model::encode(&mut tape, &net, src, FeatureMode::Global)?;
                let logits = model::classify(&mut tape, &net, enc.global)?;
                let lp = tape.log_softmax(logits)?;
                let v = tape.value(lp);
                let probs: Vec<f64> = v.data().iter().map(|x| x.exp()).collect();
                view.source_probs = Some(Tensor::new(v.shape().to_vec(), probs)?);
            }
            Task::Segmentation => {
                let enc = model::encode(&mut tape, &net, src, FeatureMode::PerPoint)?;
                view.source_features = Some(tape.value(enc.per_point.expect("per-point")).clone());
            }
        }
    }
    if terms.consistency {
        let enc = model::encode(&mut tape, &net, tgt, feature_mode(task))?;
        let f = match task {
            Task::Classification => enc.global,
            Task::Segmentation => enc.per_point.expect("per-point"),
        };
        view.target_features = Some(tape.value(f).clone());
    }
    Ok(view)
}

fn feature_mode(task: Task) -> FeatureMode {
    match task {
        Task::Classification => FeatureMode::Global,
        Task::Segmentation => FeatureMode::PerPoint,
    }
}

/// Builds the joint objective on `tape` for the bound student.
///
/// The teacher is evaluated on its own tape and enters only as constants,
/// so no gradient can reach its parameters. Returns the scalar total and
/// the per-term values.
pub fn total_loss(
    tape: &mut Tape,
    batch: &DomainBatch,
    student: &Bound,
    teacher: &ModelParams,
    lambda: f64,
    terms: LossTerms,
) -> Result<(Var, LossBreakdown)> {
    let task = student.arch().task;
    if batch.labels.len() != batch.source.len() {
        return Err(Error::invalid("total_loss: source labels and clouds differ in length"));
    }
    if terms.needs_target() && batch.target.len() != batch.source.len() {
        return Err(Error::invalid("total_loss: source and target batch sizes differ"));
    }
    if terms.needs_teacher() && !teacher.same_layout(student.params()) {
        return Err(Error::invalid("total_loss: teacher and student layouts differ"));
    }
    let view = if terms.needs_teacher() {
        Some(teacher_view(teacher, batch, terms)?)
    } else {
        None
    };
    let zero = tape.constant(Tensor::scalar(0.0));

    // source branch
    let mut l_s = zero;
    let mut l_soft = zero;
    if terms.supervised || terms.soft {
        let enc = model::encode(tape, student, &batch.source, feature_mode(task))?;
        match task {
            Task::Classification => {
                let logits = model::classify(tape, student, enc.global)?;
                let lp = tape.log_softmax(logits)?;
                if terms.supervised {
                    l_s = match &batch.labels {
                        SourceLabels::Classes(y) => ce_loss(tape, lp, y)?,
                        SourceLabels::Mixed(soft) => {
                            let c = soft.first().map_or(0, Vec::len);
                            let t = Tensor::new(vec![soft.len(), c], soft.concat())?;
                            soft_ce_loss(tape, lp, &t)?
                        }
                        SourceLabels::Parts(_) => {
                            return Err(Error::invalid("part labels given to a classification model"))
                        }
                    };
                }
                if let Some(p) = view.as_ref().and_then(|v| v.source_probs.as_ref()) {
                    l_soft = soft_ce_loss(tape, lp, p)?;
                }
            }
            Task::Segmentation => {
                let feats = enc.per_point.expect("per-point");
                if terms.supervised {
                    let SourceLabels::Parts(parts) = &batch.labels else {
                        return Err(Error::invalid("segmentation needs per-point part labels"));
                    };
                    let logits = model::segment(tape, student, feats)?;
                    let lp = tape.log_softmax(logits)?;
                    l_s = ce_loss(tape, lp, &parts.concat())?;
                }
                if let Some(f) = view.as_ref().and_then(|v| v.source_features.as_ref()) {
                    l_soft = consistency_loss(tape, feats, f)?;
                }
            }
        }
    }

    // target branch
    let mut l_t = zero;
    let mut l_cons = zero;
    if terms.needs_target() {
        let enc = model::encode(tape, student, &batch.target, feature_mode(task))?;
        if terms.recon {
            let decoded = model::decode(tape, student, enc.global)?;
            l_t = recon_loss(tape, decoded, &batch.target)?;
        }
        if let Some(f) = view.as_ref().and_then(|v| v.target_features.as_ref()) {
            let s = match task {
                Task::Classification => enc.global,
                Task::Segmentation => enc.per_point.expect("per-point"),
            };
            l_cons = consistency_loss(tape, s, f)?;
        }
    }

    let src = tape.add(l_s, l_soft)?;
    let src = tape.scale(src, lambda)?;
    let total = tape.add(src, l_t)?;
    let total = tape.add(total, l_cons)?;
    let value = |v: Var| tape.value(v).data()[0];
    let breakdown = LossBreakdown {
        l_s: value(l_s),
        l_soft: value(l_soft),
        l_t: value(l_t),
        l_cons: value(l_cons),
        total: value(total),
        lambda,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_rows(rows: &[&[f64]]) -> Tensor {
        let c = rows[0].len();
        Tensor::new(vec![rows.len(), c], rows.iter().flat_map(|r| r.iter().map(|p| p.ln())).collect()).unwrap()
    }

    #[test]
    fn ce_uniform_over_ten_classes() {
        let mut tape = Tape::new();
        let lp = tape.constant(log_rows(&[&[0.1; 10]]));
        let l = ce_loss(&mut tape, lp, &[3]).unwrap();
        assert!((tape.value(l).item().unwrap() - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_of_confident_correct_predictions_is_zero() {
        let mut tape = Tape::new();
        let lp = tape.constant(log_rows(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let l = ce_loss(&mut tape, lp, &[0, 1]).unwrap();
        assert_eq!(tape.value(l).item().unwrap(), 0.0);
    }

    #[test]
    fn ce_two_rows() {
        let mut tape = Tape::new();
        let lp = tape.constant(log_rows(&[&[0.8, 0.2], &[0.6, 0.4]]));
        let l = ce_loss(&mut tape, lp, &[0, 1]).unwrap();
        let expect = -(0.8f64.ln() + 0.4f64.ln()) / 2.0;
        assert!((tape.value(l).item().unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.569_716_8).abs() < 1e-6);
    }

    #[test]
    fn ce_rejects_out_of_range_label() {
        let mut tape = Tape::new();
        let lp = tape.constant(log_rows(&[&[0.5, 0.5]]));
        assert!(ce_loss(&mut tape, lp, &[2]).is_err());
    }

    #[test]
    fn soft_ce_against_a_certain_teacher() {
        let mut tape = Tape::new();
        let lp = tape.constant(log_rows(&[&[0.5, 0.5]]));
        let t = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let l = soft_ce_loss(&mut tape, lp, &t).unwrap();
        assert!((tape.value(l).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn soft_ce_rejects_invalid_targets() {
        let mut tape = Tape::new();
        let lp = tape.constant(log_rows(&[&[0.5, 0.5]]));
        let bad = Tensor::matrix(1, 2, vec![0.7, 0.7]).unwrap();
        assert!(soft_ce_loss(&mut tape, lp, &bad).is_err());
        let neg = Tensor::matrix(1, 2, vec![1.5, -0.5]).unwrap();
        assert!(soft_ce_loss(&mut tape, lp, &neg).is_err());
    }

    #[test]
    fn soft_ce_at_the_teacher_is_its_entropy() {
        let p: [f64; 3] = [0.2, 0.5, 0.3];
        let entropy: f64 = -p.iter().map(|x| x * x.ln()).sum::<f64>();
        let mut tape = Tape::new();
        let lp = tape.constant(log_rows(&[&p]));
        let t = Tensor::matrix(1, 3, p.to_vec()).unwrap();
        let l = soft_ce_loss(&mut tape, lp, &t).unwrap();
        assert!((tape.value(l).item().unwrap() - entropy).abs() < 1e-12);
    }

    #[test]
    fn consistency_values_and_gradient() {
        let mut tape = Tape::new();
        let fs = tape.leaf(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
        let ft = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
        let l = consistency_loss(&mut tape, fs, &ft).unwrap();
        assert_eq!(tape.value(l).item().unwrap(), 2.0);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(fs).unwrap(), &[2.0, -2.0]);

        let mut tape = Tape::new();
        let f = Tensor::matrix(2, 2, vec![0.3, -0.1, 0.5, 0.9]).unwrap();
        let fs = tape.leaf(f.clone());
        let l = consistency_loss(&mut tape, fs, &f).unwrap();
        assert_eq!(tape.value(l).item().unwrap(), 0.0);
    }

    #[test]
    fn consistency_gradient_is_scaled_by_batch() {
        let mut tape = Tape::new();
        let fs = tape.leaf(Tensor::matrix(2, 1, vec![3.0, 1.0]).unwrap());
        let ft = Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap();
        let l = consistency_loss(&mut tape, fs, &ft).unwrap();
        // 2(f_s − f_t) / 2
        assert_eq!(tape.backward(l).unwrap().wrt(fs).unwrap(), &[2.0, 0.0]);
    }

    #[test]
    fn recon_loss_is_the_batch_mean() {
        let a = PointCloud::new(vec![[0.0, 0.0, 0.0]]).unwrap();
        let b1 = PointCloud::new(vec![[1.0, 0.0, 0.0]]).unwrap();
        let b2 = PointCloud::new(vec![[2f64.sqrt(), 0.0, 0.0]]).unwrap();
        let mut tape = Tape::new();
        let dec = tape.constant(clouds_tensor(&[a.clone(), a.clone()], 1).unwrap());
        let l = recon_loss(&mut tape, dec, &[b1, b2]).unwrap();
        assert!((tape.value(l).item().unwrap() - 3.0).abs() < 1e-12);

        let mut tape = Tape::new();
        let dec = tape.constant(a.to_tensor());
        let l = recon_loss(&mut tape, dec, &[a]).unwrap();
        assert_eq!(tape.value(l).item().unwrap(), 0.0);
    }
}
