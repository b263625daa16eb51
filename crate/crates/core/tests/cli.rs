//! The `sen` binary end to end: generate data, train, evaluate, report.

use std::path::Path;
use std::process::Command;

fn sen(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sen")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_train_evaluate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let (src, tgt, run) = (dir.path().join("src"), dir.path().join("tgt"), dir.path().join("run"));
    let gen = |out: &Path, domain: &str, seed: &str| {
        sen(&["gen-data", "--out", p(out), "--domain", domain, "--per-class", "4", "--points", "32", "--seed", seed])
    };
    assert_eq!(gen(&src, "clean", "1").0, 0);
    assert_eq!(gen(&tgt, "shifted", "2").0, 0);

    let (code, text) = sen(&[
        "train", "--source", p(&src), "--target", p(&tgt), "--out", p(&run),
        "--epochs", "2", "--batch-size", "4", "--points", "32", "--use-pm", "--quiet",
    ]);
    assert_eq!(code, 0, "{text}");
    for file in ["config.txt", "metrics.csv", "student.senc", "teacher.senc"] {
        assert!(run.join(file).exists(), "missing {file}");
    }
    assert_eq!(std::fs::read_to_string(run.join("metrics.csv")).unwrap().lines().count(), 3);

    let (code, text) = sen(&["eval", "--checkpoint", p(&run.join("student.senc")), "--data", p(&tgt)]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("acc"), "{text}");

    let report = dir.path().join("report");
    let (code, text) = sen(&["report", p(&run.join("metrics.csv")), "--out", p(&report)]);
    assert_eq!(code, 0, "{text}");
    assert!(report.join("learning_curve.svg").exists() && report.join("summary.txt").exists());
}

#[test]
fn bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sen(&["train", "--bogus"]).0, 1);
    let missing = dir.path().join("nope");
    assert_eq!(sen(&["eval", "--checkpoint", p(&missing), "--data", p(&missing)]).0, 2);
    assert_eq!(sen(&["--help"]).0, 0);
}

#[test]
fn gradcheck_subcommand_passes() {
    let (code, text) = sen(&["gradcheck", "--cases", "3", "--seed", "1"]);
    assert_eq!(code, 0, "{text}");
}
