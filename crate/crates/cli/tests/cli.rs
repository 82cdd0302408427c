use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

/// sha256 of `samples.jsonl` for the fixture at seed 7, chunk size 5.
/// Frozen; any change to sampling or serialization shows up here.
const GOLDEN_SAMPLES_SHA256: &str = "cd2395e4f3b450808effefe0e4dba21112f7429091be6880893f6551c8d7dbf9";

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/demo_trajectories.jsonl")
}

fn dopamine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dopamine"))
        .args(args)
        .env_remove("DOPAMINE_SEED")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn sha256_file(p: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(p).unwrap()))
}

fn label_into(dir: &Path, extra: &[&str]) -> Output {
    let input = fixture();
    let mut args = vec![
        "label",
        "--input",
        input.to_str().unwrap(),
        "--chunk-size",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    dopamine(&args)
}

#[test]
fn label_matches_golden_checksum() {
    let tmp = TempDir::new().unwrap();
    let o = label_into(tmp.path(), &["--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(sha256_file(&tmp.path().join("samples.jsonl")), GOLDEN_SAMPLES_SHA256);
    for f in ["bin_occupancy.csv", "diagnostics.json", "manifest.json"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn label_is_byte_identical_across_runs_and_job_counts() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(code(&label_into(a.path(), &["--seed", "11"])), 0);
    assert_eq!(code(&label_into(b.path(), &["--seed", "11", "--jobs", "1"])), 0);
    for f in ["samples.jsonl", "bin_occupancy.csv", "diagnostics.json"] {
        assert_eq!(sha256_file(&a.path().join(f)), sha256_file(&b.path().join(f)), "{f}");
    }
}

#[test]
fn seed_falls_back_to_environment() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(code(&label_into(a.path(), &["--seed", "5"])), 0);
    let input = fixture();
    let o = Command::new(env!("CARGO_BIN_EXE_dopamine"))
        .args(["label", "--input", input.to_str().unwrap(), "--chunk-size", "5", "--out"])
        .arg(b.path())
        .env("DOPAMINE_SEED", "5")
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(
        sha256_file(&a.path().join("samples.jsonl")),
        sha256_file(&b.path().join("samples.jsonl"))
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(b.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
}

#[test]
fn label_missing_input_is_io_error() {
    let tmp = TempDir::new().unwrap();
    let o = dopamine(&["label", "--input", "/definitely/not/here.jsonl", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn label_chunk_larger_than_trajectory_names_it() {
    let tmp = TempDir::new().unwrap();
    let input = fixture();
    let o = dopamine(&[
        "label",
        "--input",
        input.to_str().unwrap(),
        "--chunk-size",
        "100",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("open_drawer_02"));
}

#[test]
fn config_file_is_read_and_flags_win() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        format!("seed = 7\nchunk_size = 100\ninput = {:?}\n", fixture().to_str().unwrap()),
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = dopamine(&[
        "label",
        "--config",
        cfg.to_str().unwrap(),
        "--chunk-size",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(sha256_file(&out.join("samples.jsonl")), GOLDEN_SAMPLES_SHA256);

    fs::write(&cfg, "chunk = 5\n").unwrap();
    let o = dopamine(&["trap", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_defaults_pass() {
    let tmp = TempDir::new().unwrap();
    let o = dopamine(&["verify", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    for s in ["boundedness", "telescoping", "q_shift", "invariance", "trap", "euler"] {
        assert!(stdout.lines().any(|l| l.starts_with(s) && l.contains("PASS")), "{s}: {stdout}");
    }
}

#[test]
fn verify_naive_mutation_fails_invariance_on_trap() {
    let tmp = TempDir::new().unwrap();
    let o = dopamine(&[
        "verify",
        "--suite",
        "invariance",
        "--mutation",
        "naive",
        "--mdp-cases",
        "5",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL") && stdout.contains("trap MDP fails"), "{stdout}");
}

#[test]
fn verify_single_suite() {
    let tmp = TempDir::new().unwrap();
    let o = dopamine(&["verify", "--suite", "telescoping", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("telescoping"));
    assert_eq!(code(&dopamine(&["verify", "--suite", "nope", "--out", tmp.path().to_str().unwrap()])), 2);
}

#[test]
fn train_writes_reports_and_summary() {
    let tmp = TempDir::new().unwrap();
    let o = dopamine(&["train", "--seeds", "20", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["gold_report.csv", "grm_report.csv", "summary.json", "manifest.json"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let rows = fs::read_to_string(tmp.path().join("grm_report.csv")).unwrap();
    assert_eq!(rows.lines().count(), 21);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["grm_vs_gold"]["p_value"].as_f64().unwrap() < 0.05);
}

#[test]
fn train_single_seed_and_bad_variant() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let o = dopamine(&["train", "--seeds", "1", "--variant", "sparse", "--out", dir]);
    assert_eq!(code(&o), 0);
    let rows = fs::read_to_string(tmp.path().join("gold_report.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2);
    assert_eq!(code(&dopamine(&["train", "--variant", "shiny", "--out", dir])), 2);
}

#[test]
fn train_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = |d: &TempDir| {
        dopamine(&["train", "--seeds", "4", "--seed", "3", "--out", d.path().to_str().unwrap()])
    };
    assert_eq!(code(&args(&a)), 0);
    assert_eq!(code(&args(&b)), 0);
    for f in ["gold_report.csv", "grm_curves.csv", "summary.json"] {
        assert_eq!(sha256_file(&a.path().join(f)), sha256_file(&b.path().join(f)), "{f}");
    }
    let hash = |d: &TempDir| {
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.path().join("manifest.json")).unwrap()).unwrap();
        m["config_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash(&a), hash(&b));
}

#[test]
fn eval_oracle_on_fixtures() {
    let tmp = TempDir::new().unwrap();
    let input = fixture();
    let o = dopamine(&[
        "eval",
        "--input",
        input.to_str().unwrap(),
        "--density",
        "sparse,medium,dense",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(tmp.path().join("voc_summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r.contains(",1.000000,"), "{r}");
    }
    let voc = fs::read_to_string(tmp.path().join("voc.csv")).unwrap();
    assert_eq!(voc.lines().next().unwrap(), "trajectory_id,density,voc");
    assert_eq!(voc.lines().count(), 1 + 3 * 3);
    let confusion = fs::read_to_string(tmp.path().join("confusion.csv")).unwrap();
    assert!(confusion.lines().last().unwrap().ends_with("1.000000"));
}

#[test]
fn eval_rejects_bad_xi_and_density() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_eq!(code(&dopamine(&["eval", "--xi", "1.5", "--out", dir])), 2);
    assert_eq!(code(&dopamine(&["eval", "--density", "thick", "--out", dir])), 2);
}

#[test]
fn trap_demo_separates() {
    let tmp = TempDir::new().unwrap();
    let o = dopamine(&["trap", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("trap.json")).unwrap()).unwrap();
    assert_eq!(report["separated"], true);
    assert_eq!(code(&dopamine(&["trap", "--honeypot-potential", "1.0", "--out", tmp.path().to_str().unwrap()])), 2);
}

#[test]
fn unwritable_output_is_io_error() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = dopamine(&["trap", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}
