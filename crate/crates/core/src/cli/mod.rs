//! The `sen` command line: `gen-data`, `train`, `eval`, `gradcheck` and
//! `report`.
//!
//! Exit codes: 0 success, 1 usage, 2 data or format error, 3 numeric
//! failure (a non-finite loss or a failed gradient check).

mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};

pub use report::{mean_sem, read_metrics, render_svg, MetricsTable, RunGroup};

use crate::data::{build_dataset, Dataset, DatasetSpec, DomainProfile, Splits};
use crate::error::Error;
use crate::model::Task;
use crate::train::{
    evaluate, load_checkpoint, parse_pairs, save_checkpoint, train_with_progress, TrainConfig,
};
use crate::verify::{run_suite, CASES_PER_PRIMITIVE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sen", version, about = "Self-ensembling domain adaptation for point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (train/val/test PCDS files).
    GenData(GenDataArgs),
    /// Train on labelled source and unlabelled target data.
    Train(TrainArgs),
    /// Accuracy or mean IoU of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Finite-difference check of every primitive and the joint objective.
    Gradcheck(GradcheckArgs),
    /// Learning-curve SVG and mean ± SEM summary over metrics CSVs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output directory for train.pcds, val.pcds and test.pcds.
    #[arg(long)]
    pub out: PathBuf,
    /// classification or segmentation.
    #[arg(long, default_value = "classification")]
    pub mode: Task,
    /// clean, shifted, or explicit noise,occlusion,density_bias,dropout.
    #[arg(long, default_value = "clean")]
    pub domain: DomainProfile,
    /// Samples per shape class.
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Points per cloud after subsampling.
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    /// Points sampled on each raw surface [default: 16 × points].
    #[arg(long)]
    pub raw_points: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write <split>.csv dumps (sample_id,x,y,z,label).
    #[arg(long)]
    pub export_csv: bool,
}

/// Every training flag is optional so that a `--config` file can supply it;
/// flags given on the command line win over the file.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with the labelled source splits.
    #[arg(long)]
    pub source: PathBuf,
    /// Directory with the target splits; train clouds are used without labels.
    #[arg(long)]
    pub target: PathBuf,
    /// Run directory for config.txt, metrics.csv, student.senc and teacher.senc.
    #[arg(long)]
    pub out: PathBuf,
    /// Target split evaluated after every epoch (train, val or test).
    #[arg(long, default_value = "test")]
    pub eval_split: String,
    /// key=value file; its values apply before the command-line flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,

    /// classification or segmentation [default: classification]
    #[arg(long)]
    pub mode: Option<Task>,
    /// sen or source-only [default: sen]
    #[arg(long)]
    pub method: Option<String>,
    /// Batch size of each domain [default: 32 classification, 16 segmentation]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// [default: 150 classification, 200 segmentation]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Initial learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Final cosine learning rate [default: 0]
    #[arg(long)]
    pub lr_min: Option<f64>,
    /// Weight of the source terms [default: 0.2 classification, 0.05 segmentation]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Teacher EMA momentum [default: 0.99]
    #[arg(long)]
    pub ema_momentum: Option<f64>,
    /// Beta shape of the PointMixup weight [default: 0.2]
    #[arg(long)]
    pub pm_alpha: Option<f64>,
    /// Mix source samples with PointMixup [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub use_pm: Option<bool>,
    /// Neighbours per point [default: 8]
    #[arg(long)]
    pub k: Option<usize>,
    /// Points per cloud [default: 64]
    #[arg(long)]
    pub points: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-coordinate jitter std dev [default: 0.01]
    #[arg(long)]
    pub jitter_sigma: Option<f64>,
    /// Jitter clip bound [default: 0.02]
    #[arg(long)]
    pub jitter_clip: Option<f64>,
    /// Target reconstruction term [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub recon: Option<bool>,
    /// Target consistency term [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub consistency: Option<bool>,
    /// Teacher soft labels on source data [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub soft: Option<bool>,
    /// Separate jittered view for the teacher [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub teacher_jitter: Option<bool>,
    /// Keep the teacher at its initial weights [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub freeze_teacher: Option<bool>,
    /// desk or tiny [default: desk]
    #[arg(long)]
    pub model: Option<String>,
    /// Batch size for evaluation [default: 64]
    #[arg(long)]
    pub eval_batch: Option<usize>,
}

impl TrainArgs {
    /// Config keys set on the command line, excluding `mode`.
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(ToString::to_string)
        }
        [
            ("method", s(&self.method)),
            ("batch_size", s(&self.batch_size)),
            ("epochs", s(&self.epochs)),
            ("lr", s(&self.lr)),
            ("lr_min", s(&self.lr_min)),
            ("lambda", s(&self.lambda)),
            ("ema_momentum", s(&self.ema_momentum)),
            ("pm_alpha", s(&self.pm_alpha)),
            ("use_pm", s(&self.use_pm)),
            ("k", s(&self.k)),
            ("points", s(&self.points)),
            ("seed", s(&self.seed)),
            ("jitter_sigma", s(&self.jitter_sigma)),
            ("jitter_clip", s(&self.jitter_clip)),
            ("recon", s(&self.recon)),
            ("consistency", s(&self.consistency)),
            ("soft", s(&self.soft)),
            ("teacher_jitter", s(&self.teacher_jitter)),
            ("freeze_teacher", s(&self.freeze_teacher)),
            ("model", s(&self.model)),
            ("eval_batch", s(&self.eval_batch)),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    /// Defaults for the mode, then the config file, then the flags.
    pub fn resolve(&self) -> crate::Result<TrainConfig> {
        let file = match &self.config {
            Some(path) => parse_pairs(&std::fs::read_to_string(path)?)?,
            None => Vec::new(),
        };
        let file_mode = file.iter().rev().find(|(k, _)| k == "mode");
        let task = match (self.mode, file_mode) {
            (Some(t), _) => t,
            (None, Some((_, v))) => v.parse()?,
            (None, None) => Task::Classification,
        };
        let mut cfg = TrainConfig::for_task(task);
        for (k, v) in file.iter().filter(|(k, _)| k != "mode") {
            cfg.set(k, v)?;
        }
        for (k, v) in self.overrides() {
            cfg.set(k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// A PCDS file, or a dataset directory (its test split is used).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random cases per primitive.
    #[arg(long, default_value_t = CASES_PER_PRIMITIVE)]
    pub cases: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// metrics.csv files; runs are grouped by the method in a sibling config.txt.
    #[arg(required = true)]
    pub csv: Vec<PathBuf>,
    /// Directory for learning_curve.svg and summary.txt.
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure of one command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFinite { .. } => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

pub fn execute(command: &Command) -> Result<(), Failure> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn gen_data(a: &GenDataArgs) -> Result<(), Failure> {
    a.domain.validate().map_err(Failure::usage)?;
    let mut spec = match a.mode {
        Task::Classification => DatasetSpec::classification(a.per_class, a.domain, a.points, a.seed),
        Task::Segmentation => DatasetSpec::segmentation(a.per_class, a.domain, a.points, a.seed),
    };
    if let Some(raw) = a.raw_points {
        spec.raw_points = raw;
    }
    let splits = build_dataset(&spec)?;
    std::fs::create_dir_all(&a.out).map_err(Error::from)?;
    splits.write(&a.out)?;
    if a.export_csv {
        for (name, d) in Splits::NAMES.iter().zip([&splits.train, &splits.val, &splits.test]) {
            let f = std::fs::File::create(a.out.join(format!("{name}.csv"))).map_err(Error::from)?;
            d.export_csv(std::io::BufWriter::new(f))?;
        }
    }
    println!(
        "{} {}: {} train / {} val / {} test clouds of {} points in {}",
        a.mode,
        a.domain,
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        a.points,
        a.out.display()
    );
    Ok(())
}

fn split_of(splits: Splits, name: &str) -> Result<Dataset, Failure> {
    match name {
        "train" => Ok(splits.train),
        "val" => Ok(splits.val),
        "test" => Ok(splits.test),
        _ => Err(Failure::usage(format!("unknown split '{name}' (expected train, val or test)"))),
    }
}

fn train_cmd(a: &TrainArgs) -> Result<(), Failure> {
    let cfg = a.resolve().map_err(|e| match e {
        Error::Io(_) => Failure::from(e),
        other => Failure::usage(other),
    })?;
    let source = Splits::read(&a.source)?;
    let target = Splits::read(&a.target)?;
    let eval = split_of(target.clone(), &a.eval_split)?;
    std::fs::create_dir_all(&a.out).map_err(Error::from)?;
    std::fs::write(a.out.join("config.txt"), cfg.to_text()).map_err(Error::from)?;

    let started = Instant::now();
    let quiet = a.quiet;
    let report = train_with_progress(&cfg, &source.train, &target.train.clouds, &eval, |r| {
        if !quiet {
            println!(
                "epoch {:>4}  total {:.4}  l_s {:.4}  l_t {:.4}  l_cons {:.4}  lr {:.2e}  student {:.4}  teacher {:.4}",
                r.epoch, r.losses.total, r.losses.l_s, r.losses.l_t, r.losses.l_cons, r.lr, r.student_metric, r.teacher_metric
            );
        }
    })?;
    std::fs::write(a.out.join("metrics.csv"), report.metrics_csv()).map_err(Error::from)?;
    save_checkpoint(&report.student_checkpoint(), &a.out.join("student.senc"))?;
    save_checkpoint(&report.teacher_checkpoint(), &a.out.join("teacher.senc"))?;
    if let Some(last) = report.final_record() {
        println!(
            "{} after {} epochs: student {} {:.4}, teacher {:.4} ({:.1}s) -> {}",
            cfg.method.as_str(),
            last.epoch,
            report.metric_name(),
            last.student_metric,
            last.teacher_metric,
            started.elapsed().as_secs_f64(),
            a.out.display()
        );
    }
    Ok(())
}

fn load_data(path: &Path) -> crate::Result<Dataset> {
    if path.is_dir() {
        Ok(Splits::read(path)?.test)
    } else {
        crate::data::read_dataset(path)
    }
}

fn eval_cmd(a: &EvalArgs) -> Result<(), Failure> {
    if a.batch == 0 {
        return Err(Failure::usage("--batch must be positive"));
    }
    let ck = load_checkpoint(&a.checkpoint)?;
    let data = load_data(&a.data)?;
    let metric = evaluate(&ck.params, &data, a.batch)?;
    let name = match data.task {
        Task::Classification => "acc",
        Task::Segmentation => "miou",
    };
    println!("{name} {metric:.6} ({} samples)", data.len());
    Ok(())
}

fn gradcheck_cmd(a: &GradcheckArgs) -> Result<(), Failure> {
    if a.cases == 0 {
        return Err(Failure::usage("--cases must be positive"));
    }
    let started = Instant::now();
    let report = run_suite(a.cases, a.seed)?;
    for line in report.lines() {
        println!("{line}");
    }
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!(
        "{verdict}: max relative error {:.3e} (tol {:.0e}) in {:.1}s",
        report.max_rel_err(),
        report.tol,
        started.elapsed().as_secs_f64()
    );
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_NUMERIC,
            message: "gradient check failed".into(),
        })
    }
}

fn report_cmd(a: &ReportArgs) -> Result<(), Failure> {
    let groups = report::group_runs(&a.csv)?;
    std::fs::create_dir_all(&a.out).map_err(Error::from)?;
    let svg = render_svg(&groups);
    std::fs::write(a.out.join("learning_curve.svg"), svg).map_err(Error::from)?;
    let summary = report::summary(&groups);
    std::fs::write(a.out.join("summary.txt"), &summary).map_err(Error::from)?;
    print!("{summary}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    fn help_of(sub: &str) -> String {
        let mut cmd = Cli::command();
        cmd.find_subcommand_mut(sub).expect("subcommand").render_long_help().to_string()
    }

    /// Text of the `[default: ...]` note following `--flag` in the help.
    fn documented_default(help: &str, flag: &str) -> String {
        let start = help.find(&format!("--{flag} ")).or_else(|| help.find(&format!("--{flag}\n")));
        let start = start.unwrap_or_else(|| panic!("--{flag} missing from help"));
        let rest = &help[start..];
        let d = rest.find("[default: ").expect("default note") + "[default: ".len();
        rest[d..d + rest[d..].find(']').unwrap()].to_string()
    }

    #[test]
    fn train_help_defaults_match_the_config() {
        let help = help_of("train");
        let c = TrainConfig::classification();
        let s = TrainConfig::segmentation();
        for (key, value) in c.pairs() {
            let flag = key.replace('_', "-");
            let doc = documented_default(&help, &flag);
            let seg = s.pairs().into_iter().find(|(k, _)| *k == key).unwrap().1;
            if seg == value || key == "mode" {
                assert_eq!(doc, value, "--{flag}");
            } else {
                assert_eq!(doc, format!("{value} classification, {seg} segmentation"), "--{flag}");
            }
        }
    }

    #[test]
    fn gen_data_help_lists_every_flag() {
        let help = help_of("gen-data");
        for flag in ["out", "mode", "domain", "per-class", "points", "raw-points", "seed", "export-csv"] {
            assert!(help.contains(&format!("--{flag}")), "--{flag}");
        }
        assert_eq!(documented_default(&help, "points"), "64");
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "mode=segmentation\nepochs=7\nseed=3\nuse_pm=true\n").unwrap();
        let argv = ["sen", "train", "--source", "s", "--target", "t", "--out", "o", "--config"];
        let mut argv: Vec<String> = argv.iter().map(|s| s.to_string()).collect();
        argv.push(path.display().to_string());
        argv.extend(["--seed", "9", "--use-pm=false", "--soft"].map(String::from));
        let Command::Train(a) = Cli::try_parse_from(&argv).unwrap().command else {
            panic!("not train")
        };
        let cfg = a.resolve().unwrap();
        assert_eq!(cfg.task, Task::Segmentation);
        assert_eq!((cfg.epochs, cfg.seed, cfg.use_pm, cfg.soft), (7, 9, false, true));
        assert_eq!((cfg.batch_size, cfg.lambda), (16, 0.05));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["sen", "--help"]), EXIT_OK);
        assert_eq!(run(["sen", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["sen", "train", "--bogus"]), EXIT_USAGE);
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nothing.senc");
        let m = missing.to_str().unwrap();
        assert_eq!(run(["sen", "eval", "--checkpoint", m, "--data", m]), EXIT_DATA);
        let bad = dir.path().join("bad.senc");
        std::fs::write(&bad, b"not a checkpoint").unwrap();
        let b = bad.to_str().unwrap();
        assert_eq!(run(["sen", "eval", "--checkpoint", b, "--data", b]), EXIT_DATA);
    }
}
