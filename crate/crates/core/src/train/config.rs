use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::loss::LossTerms;
use crate::model::{Arch, Task};

/// Which objective the trainer optimises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Joint self-ensembling objective.
    Sen,
    /// Supervised source loss only: the non-adapted baseline.
    SourceOnly,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sen => "sen",
            Method::SourceOnly => "source-only",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sen" => Ok(Method::Sen),
            "source-only" => Ok(Method::SourceOnly),
            _ => Err(Error::invalid(format!("unknown method '{s}' (expected sen or source-only)"))),
        }
    }
}

/// Network width preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelSize {
    Desk,
    Tiny,
}

impl ModelSize {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelSize::Desk => "desk",
            ModelSize::Tiny => "tiny",
        }
    }
}

impl std::str::FromStr for ModelSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(ModelSize::Desk),
            "tiny" => Ok(ModelSize::Tiny),
            _ => Err(Error::invalid(format!("unknown model size '{s}' (expected desk or tiny)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub method: Method,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub lambda: f64,
    pub ema_momentum: f64,
    pub pm_alpha: f64,
    pub use_pm: bool,
    pub k: usize,
    pub points: usize,
    pub seed: u64,
    pub jitter_sigma: f64,
    pub jitter_clip: f64,
    /// Include the target reconstruction term.
    pub recon: bool,
    /// Include the target consistency term.
    pub consistency: bool,
    /// Include the teacher's soft source supervision (source consistency in
    /// segmentation mode).
    pub soft: bool,
    /// Give the teacher its own jittered view instead of the student's input.
    pub teacher_jitter: bool,
    /// Skip EMA updates, keeping the teacher at its initial weights.
    pub freeze_teacher: bool,
    pub model: ModelSize,
    pub eval_batch: usize,
}

impl TrainConfig {
    pub fn classification() -> Self {
        TrainConfig {
            task: Task::Classification,
            method: Method::Sen,
            batch_size: 32,
            epochs: 150,
            lr0: 1e-3,
            lr_min: 0.0,
            lambda: 0.2,
            ema_momentum: 0.99,
            pm_alpha: 0.2,
            use_pm: false,
            k: 8,
            points: 64,
            seed: 0,
            jitter_sigma: 0.01,
            jitter_clip: 0.02,
            recon: true,
            consistency: true,
            soft: true,
            teacher_jitter: false,
            freeze_teacher: false,
            model: ModelSize::Desk,
            eval_batch: 64,
        }
    }

    pub fn segmentation() -> Self {
        TrainConfig {
            task: Task::Segmentation,
            batch_size: 16,
            epochs: 200,
            lambda: 0.05,
            ..Self::classification()
        }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classification => Self::classification(),
            Task::Segmentation => Self::segmentation(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("invalid training config: {msg}")));
        if self.batch_size == 0 || self.epochs == 0 || self.eval_batch == 0 {
            return bad("batch_size, epochs and eval_batch must be positive");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) || !(0.0..=self.lr0).contains(&self.lr_min) {
            return bad("need lr > 0 and 0 <= lr_min <= lr");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.ema_momentum) {
            return bad("ema_momentum must be in [0, 1)");
        }
        if !(self.pm_alpha > 0.0 && self.pm_alpha.is_finite()) {
            return bad("pm_alpha must be positive");
        }
        if self.k == 0 || self.k >= self.points {
            return bad("k must be in 1..points");
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_clip >= 0.0) {
            return bad("jitter sigma and clip must be non-negative");
        }
        Ok(())
    }

    /// Network shape for `num_classes` labels.
    pub fn arch(&self, num_classes: usize) -> Arch {
        let mut arch = match self.model {
            ModelSize::Desk => Arch::desk(self.task, num_classes, self.points),
            ModelSize::Tiny => Arch::tiny(self.task, num_classes, self.points),
        };
        arch.k = self.k;
        arch
    }

    /// Active loss terms.
    pub fn terms(&self) -> LossTerms {
        match self.method {
            Method::SourceOnly => LossTerms::SOURCE_ONLY,
            Method::Sen => LossTerms {
                supervised: true,
                soft: self.soft,
                recon: self.recon,
                consistency: self.consistency,
            },
        }
    }

    /// Flat `key=value` lines, one per field, in a fixed order.
    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("mode", self.task.as_str().to_string()),
            ("method", self.method.as_str().to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr0.to_string()),
            ("lr_min", self.lr_min.to_string()),
            ("lambda", self.lambda.to_string()),
            ("ema_momentum", self.ema_momentum.to_string()),
            ("pm_alpha", self.pm_alpha.to_string()),
            ("use_pm", self.use_pm.to_string()),
            ("k", self.k.to_string()),
            ("points", self.points.to_string()),
            ("seed", self.seed.to_string()),
            ("jitter_sigma", self.jitter_sigma.to_string()),
            ("jitter_clip", self.jitter_clip.to_string()),
            ("recon", self.recon.to_string()),
            ("consistency", self.consistency.to_string()),
            ("soft", self.soft.to_string()),
            ("teacher_jitter", self.teacher_jitter.to_string()),
            ("freeze_teacher", self.freeze_teacher.to_string()),
            ("model", self.model.as_str().to_string()),
            ("eval_batch", self.eval_batch.to_string()),
        ]
    }

    /// Sets one field from its text form. `mode` is not settable here because
    /// it selects the defaults; use [`TrainConfig::from_text`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .trim()
                .parse()
                .map_err(|e| Error::invalid(format!("config key '{key}': cannot parse '{value}': {e}")))
        }
        match key {
            "mode" => {
                let task: Task = value.trim().parse()?;
                if task != self.task {
                    return Err(Error::invalid("config key 'mode' conflicts with the selected mode"));
                }
            }
            "method" => self.method = value.trim().parse()?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr0 = parse(key, value)?,
            "lr_min" => self.lr_min = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "ema_momentum" => self.ema_momentum = parse(key, value)?,
            "pm_alpha" => self.pm_alpha = parse(key, value)?,
            "use_pm" => self.use_pm = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "points" => self.points = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "jitter_sigma" => self.jitter_sigma = parse(key, value)?,
            "jitter_clip" => self.jitter_clip = parse(key, value)?,
            "recon" => self.recon = parse(key, value)?,
            "consistency" => self.consistency = parse(key, value)?,
            "soft" => self.soft = parse(key, value)?,
            "teacher_jitter" => self.teacher_jitter = parse(key, value)?,
            "freeze_teacher" => self.freeze_teacher = parse(key, value)?,
            "model" => self.model = value.trim().parse()?,
            "eval_batch" => self.eval_batch = parse(key, value)?,
            _ => return Err(Error::invalid(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines (blank lines and `#` comments ignored) on top
    /// of the defaults for the listed `mode` (classification if absent).
    pub fn from_text(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let task = match pairs.iter().find(|(k, _)| k == "mode") {
            Some((_, v)) => v.parse()?,
            None => Task::Classification,
        };
        let mut cfg = Self::for_task(task);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of [`TrainConfig::to_text`].
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }
}

/// Splits `key=value` lines, skipping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("config line '{l}' is not key=value")))?;
            Ok((k.trim().replace('-', "_"), v.trim().to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_defaults() {
        let c = TrainConfig::classification();
        assert_eq!((c.batch_size, c.epochs, c.lr0, c.lambda), (32, 150, 1e-3, 0.2));
        let s = TrainConfig::segmentation();
        assert_eq!((s.batch_size, s.epochs, s.lr0, s.lambda), (16, 200, 1e-3, 0.05));
        for c in [c, s] {
            assert_eq!((c.jitter_sigma, c.jitter_clip, c.pm_alpha, c.ema_momentum), (0.01, 0.02, 0.2, 0.99));
            assert_eq!((c.k, c.points, c.lr_min), (8, 64, 0.0));
            assert!(c.validate().is_ok());
        }
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::segmentation();
        c.seed = 42;
        c.use_pm = true;
        c.lr0 = 3.5e-4;
        c.method = Method::SourceOnly;
        let back = TrainConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        c.seed = 43;
        assert_ne!(back.digest(), c.digest());
    }

    #[test]
    fn bad_text_is_rejected() {
        assert!(TrainConfig::from_text("bogus=1").is_err());
        assert!(TrainConfig::from_text("epochs=ten").is_err());
        assert!(TrainConfig::from_text("just a line").is_err());
        assert!(TrainConfig::from_text("ema_momentum=1").is_err());
        let c = TrainConfig::from_text("# comment\n\nmode=segmentation\nepochs=3").unwrap();
        assert_eq!((c.task, c.epochs, c.batch_size), (Task::Segmentation, 3, 16));
    }

    #[test]
    fn source_only_uses_only_supervision() {
        let mut c = TrainConfig::classification();
        c.method = Method::SourceOnly;
        assert_eq!(c.terms(), LossTerms::SOURCE_ONLY);
        c.method = Method::Sen;
        c.consistency = false;
        assert!(!c.terms().consistency && c.terms().recon);
    }
}
