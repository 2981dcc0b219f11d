//! End-to-end runs of the `qdrank` binary on a small generated corpus.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qdrank_cli::{read_sweep_csv, EXIT_CONFIG, EXIT_DATA};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qdrank"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qdrank-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    if !out.status.success() {
        panic!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

const SMALL_MODEL: &[&str] = &["--epochs", "2", "--hidden", "8,4", "--embedding-dim", "4"];

fn generate_small(dir: &Path) {
    run(
        dir,
        &["generate", "--out", "data", "--train-queries", "600", "--dev-queries", "100", "--test-queries", "150", "--seed", "5"],
    );
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn pipeline_writes_artifacts_with_manifests() {
    let dir = scratch("pipeline");
    generate_small(&dir);
    run(&dir, &["cluster", "--data", "data", "--out", "tree.json", "--report", "report.tsv", "--depth", "2", "--branch", "2", "--seed", "5"]);
    let mut train = vec!["train", "--data", "data", "--out", "dprm.json", "--log", "dprm.log", "--seed", "5"];
    train.extend_from_slice(SMALL_MODEL);
    run(&dir, &train);
    let mut train = vec!["train", "--data", "data", "--tree", "tree.json", "--variant", "QC-MTLRM", "--out", "mtl.json", "--seed", "5"];
    train.extend_from_slice(SMALL_MODEL);
    run(&dir, &train);
    let out = run(
        &dir,
        &["eval", "--data", "data", "--model", "dprm.json", "--model", "mtl.json", "--tree", "tree.json", "--out", "eval", "--export-scores", "--seed", "5"],
    );
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("model\tmrr\tsuccess@1\tsuccess@5"), "{table}");
    assert!(table.lines().nth(1).unwrap().starts_with("DPRM\t"));
    assert!(table.contains("+0.00%"));

    for f in ["report.tsv", "dprm.log", "eval/DPRM.summary.tsv", "eval/QC-MTLRM.detail.tsv", "eval/comparison.tsv", "eval/DPRM.scores.tsv"] {
        let line = first_line(&dir.join(f));
        assert!(line.starts_with("# {"), "{f}: {line}");
        assert!(line.contains("\"seed\":5"), "{f}: {line}");
    }
    for f in ["data/train.jsonl", "tree.json", "mtl.json"] {
        let text = std::fs::read_to_string(dir.join(f)).unwrap();
        assert!(text.lines().next().unwrap().contains("\"manifest\":{"), "{f}");
    }
    let report = std::fs::read_to_string(dir.join("report.tsv")).unwrap();
    assert!(report.lines().skip(2).all(|l| l.split('\t').nth(3).unwrap().starts_with("ngram:")));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn mix_rate_sweep_csv_parses() {
    let dir = scratch("sweep");
    generate_small(&dir);
    run(&dir, &["cluster", "--data", "data", "--out", "tree.json", "--depth", "1", "--branch", "4", "--seed", "5"]);
    let mut args = vec!["sweep", "--data", "data", "--tree", "tree.json", "--out", "sweep.csv", "--grid", "0.9,0,0.3", "--seed", "5"];
    args.extend_from_slice(SMALL_MODEL);
    run(&dir, &args);
    let text = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert!(text.starts_with("# run {"));
    let rows = read_sweep_csv(&text).unwrap();
    let grid: Vec<f64> = rows.iter().map(|r| r.value).collect();
    assert_eq!(grid, [0.0, 0.3, 0.9]);
    // QC-MTLRM at mix_rate 0 trains exactly like the DPRM baseline.
    assert_eq!(rows[0].improvement_pct, 0.0);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn reruns_are_byte_identical() {
    let dir = scratch("determinism");
    for run_dir in ["a", "b"] {
        let d = dir.join(run_dir);
        std::fs::create_dir_all(&d).unwrap();
        generate_small(&d);
        run(&d, &["cluster", "--data", "data", "--out", "tree.json", "--depth", "2", "--branch", "2"]);
        let mut args = vec!["train", "--data", "data", "--tree", "tree.json", "--variant", "QC-WDPRM", "--out", "m.json", "--log", "m.log"];
        args.extend_from_slice(SMALL_MODEL);
        run(&d, &args);
        run(&d, &["eval", "--data", "data", "--model", "m.json", "--tree", "tree.json", "--out", "eval", "--export-scores"]);
    }
    for f in ["data/train.jsonl", "data/test.jsonl", "data/truth.json", "tree.json", "m.json", "m.log", "eval/QC-WDPRM.scores.tsv", "eval/comparison.tsv"] {
        let a = std::fs::read(dir.join("a").join(f)).unwrap();
        let b = std::fs::read(dir.join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between reruns");
    }
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = scratch("exit");
    generate_small(&dir);
    let code = |args: &[&str]| bin().current_dir(&dir).args(args).output().unwrap().status.code();

    assert_eq!(code(&["train", "--data", "data", "--variant", "QC-DPRM", "--out", "m.json"]), Some(EXIT_CONFIG));
    assert_eq!(code(&["train", "--data", "data", "--mix-rate", "-1", "--out", "m.json"]), Some(EXIT_CONFIG));
    std::fs::write(dir.join("bad.toml"), "[model]\nunknown_key = 3\n").unwrap();
    assert_eq!(code(&["--config", "bad.toml", "train", "--data", "data", "--out", "m.json"]), Some(EXIT_CONFIG));
    assert_eq!(code(&["train", "--data", "missing", "--out", "m.json"]), Some(EXIT_DATA));

    let train = dir.join("data/train.jsonl");
    let mut text = std::fs::read_to_string(&train).unwrap();
    text.push_str("{broken\n");
    std::fs::write(&train, text).unwrap();
    assert_eq!(code(&["cluster", "--data", "data", "--out", "t.json"]), Some(EXIT_DATA));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn config_file_values_are_used_and_flags_win() {
    let dir = scratch("config");
    std::fs::write(
        dir.join("run.toml"),
        "seed = 9\n[synth]\ntrain_queries = 300\ndev_queries = 50\ntest_queries = 60\n",
    )
    .unwrap();
    let out = run(&dir, &["--config", "run.toml", "generate", "--out", "data", "--dev-queries", "40"]);
    let msg = String::from_utf8(out.stdout).unwrap();
    assert!(msg.contains("300 train, 40 dev and 60 test"), "{msg}");
    assert!(first_line(&dir.join("data/dev.jsonl")).contains("\"seed\":9"));
    std::fs::remove_dir_all(dir).ok();
}
