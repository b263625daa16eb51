//! Joint source/target training: Adam with a cosine schedule, the teacher
//! EMA after every step, per-epoch evaluation and checkpoints.

mod checkpoint;
mod config;
mod metrics;
mod optim;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    FORMAT_VERSION as CHECKPOINT_VERSION, MAGIC as CHECKPOINT_MAGIC,
};
pub use config::{parse_pairs, Method, ModelSize, TrainConfig};
pub use metrics::{accuracy, evaluate, mean_iou, sample_iou};
pub use optim::{cosine_lr, AdamState};

use rand::seq::SliceRandom;

use crate::augment::mix_batch;
use crate::autodiff::Tape;
use crate::data::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::geometry::{jitter_with, PointCloud};
use crate::loss::{total_loss, DomainBatch, LossBreakdown, SourceLabels};
use crate::model::{ModelParams, Task};
use crate::rng;
use crate::teacher::{init_teacher, EmaState};

/// Mean losses, learning rate and target metrics of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub lr: f64,
    pub student_metric: f64,
    pub teacher_metric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub student: ModelParams,
    pub teacher: ModelParams,
    pub ema: EmaState,
    pub adam: AdamState,
}

impl TrainReport {
    pub fn metric_name(&self) -> &'static str {
        match self.config.task {
            Task::Classification => "acc",
            Task::Segmentation => "miou",
        }
    }

    pub fn metrics_csv(&self) -> String {
        let m = self.metric_name();
        let mut out = format!("epoch,l_s,l_soft,l_t,l_cons,total,lr,student_{m},teacher_{m}\n");
        for r in &self.epochs {
            let l = &r.losses;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.epoch, l.l_s, l.l_soft, l.l_t, l.l_cons, l.total, r.lr, r.student_metric, r.teacher_metric
            ));
        }
        out
    }

    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn student_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.student.clone(),
            ema: None,
            adam: Some(self.adam.clone()),
            config_digest: self.config.digest(),
        }
    }

    pub fn teacher_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.teacher.clone(),
            ema: Some(self.ema),
            adam: None,
            config_digest: self.config.digest(),
        }
    }
}

/// Fixed-seed jitter of every cloud of a batch.
fn jittered(clouds: &[&PointCloud], cfg: &TrainConfig, r: &mut rng::Rng) -> Vec<PointCloud> {
    clouds
        .iter()
        .map(|c| jitter_with(c, cfg.jitter_sigma, cfg.jitter_clip, r))
        .collect()
}

fn check_inputs(cfg: &TrainConfig, source: &Dataset, target: &[PointCloud], eval: &Dataset) -> Result<()> {
    cfg.validate()?;
    if source.task != cfg.task || eval.task != cfg.task {
        return Err(Error::invalid("train: dataset task does not match the configured mode"));
    }
    if source.num_classes != eval.num_classes {
        return Err(Error::invalid("train: source and evaluation datasets have different class counts"));
    }
    let sizes_ok = source.points == cfg.points
        && eval.points == cfg.points
        && target.iter().all(|c| c.len() == cfg.points);
    if !sizes_ok {
        return Err(Error::invalid(format!("train: every cloud must have {} points", cfg.points)));
    }
    let pairs = source.len().min(target.len());
    if pairs < cfg.batch_size {
        return Err(Error::invalid(format!(
            "train: {} source and {} target clouds cannot fill one batch of {}",
            source.len(),
            target.len(),
            cfg.batch_size
        )));
    }
    if eval.is_empty() {
        return Err(Error::invalid("train: empty evaluation dataset"));
    }
    Ok(())
}

/// Trains student and teacher on labelled `source` and unlabelled `target`
/// clouds, evaluating both on `eval` (labelled target data) after each epoch.
pub fn train(cfg: &TrainConfig, source: &Dataset, target: &[PointCloud], eval: &Dataset) -> Result<TrainReport> {
    train_with_progress(cfg, source, target, eval, |_| {})
}

pub fn train_with_progress(
    cfg: &TrainConfig,
    source: &Dataset,
    target: &[PointCloud],
    eval: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    check_inputs(cfg, source, target, eval)?;
    let arch = cfg.arch(source.num_classes);
    let mut student = ModelParams::init(arch, rng::derive(cfg.seed, 0))?;
    let mut teacher = init_teacher(&student);
    let mut ema = EmaState::new(cfg.ema_momentum)?;
    let mut adam = AdamState::new(&student);
    let terms = cfg.terms();
    let steps = source.len().min(target.len()) / cfg.batch_size;
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut r = rng::seeded(rng::derive(cfg.seed, 1 + epoch as u64));
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr0, cfg.lr_min);
        let mut src_order: Vec<usize> = (0..source.len()).collect();
        let mut tgt_order: Vec<usize> = (0..target.len()).collect();
        src_order.shuffle(&mut r);
        tgt_order.shuffle(&mut r);

        let mut sums = [0.0f64; 5];
        for step in 0..steps {
            let rows = step * cfg.batch_size..(step + 1) * cfg.batch_size;
            let src_idx = &src_order[rows.clone()];
            let src_raw: Vec<&PointCloud> = src_idx.iter().map(|&i| &source.clouds[i]).collect();
            let tgt_raw: Vec<&PointCloud> = tgt_order[rows].iter().map(|&i| &target[i]).collect();
            let mut src = jittered(&src_raw, cfg, &mut r);
            let labels = match &source.labels {
                Labels::Classes(y) => {
                    let y: Vec<usize> = src_idx.iter().map(|&i| y[i]).collect();
                    if cfg.use_pm {
                        let mixed = mix_batch(&src, &y, cfg.pm_alpha, source.num_classes, &mut r)?;
                        let (clouds, soft) = mixed.into_iter().map(|m| (m.cloud, m.soft_label)).unzip();
                        src = clouds;
                        SourceLabels::Mixed(soft)
                    } else {
                        SourceLabels::Classes(y)
                    }
                }
                Labels::Parts(y) => SourceLabels::Parts(src_idx.iter().map(|&i| y[i].clone()).collect()),
            };
            let tgt = jittered(&tgt_raw, cfg, &mut r);
            let mut batch = DomainBatch::new(src, labels, tgt);
            if cfg.teacher_jitter {
                batch.teacher_source = Some(jittered(&src_raw, cfg, &mut r));
                batch.teacher_target = Some(jittered(&tgt_raw, cfg, &mut r));
            }

            let mut tape = Tape::new();
            let (grads, losses) = {
                let net = student.bind(&mut tape, true);
                let (total, losses) = total_loss(&mut tape, &batch, &net, &teacher, cfg.lambda, terms)?;
                if let Some(component) = losses.first_non_finite() {
                    return Err(Error::NonFinite {
                        component: format!("{component} (epoch {}, step {})", epoch + 1, step + 1),
                    });
                }
                (tape.backward(total)?, losses)
            };
            student.zero_grad();
            student.accumulate(&grads);
            adam.step(&mut student, lr)?;
            if !cfg.freeze_teacher {
                ema.update(&mut teacher, &student)?;
            }
            for (s, v) in sums.iter_mut().zip([losses.l_s, losses.l_soft, losses.l_t, losses.l_cons, losses.total]) {
                *s += v;
            }
        }
        let n = steps as f64;
        let losses = LossBreakdown {
            l_s: sums[0] / n,
            l_soft: sums[1] / n,
            l_t: sums[2] / n,
            l_cons: sums[3] / n,
            total: sums[4] / n,
            lambda: cfg.lambda,
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            losses,
            lr,
            student_metric: evaluate(&student, eval, cfg.eval_batch)?,
            teacher_metric: evaluate(&teacher, eval, cfg.eval_batch)?,
        };
        on_epoch(&record);
        epochs.push(record);
    }
    student.zero_grad();
    Ok(TrainReport {
        config: cfg.clone(),
        epochs,
        student,
        teacher,
        ema,
        adam,
    })
}
