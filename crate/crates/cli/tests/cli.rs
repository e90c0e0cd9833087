//! End-to-end runs of the `specmer` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MSA: &str = ">s1\nMKV-LAAGIWWQE\n>s2\nMKTLLAG-VWWEE\n>s3\nMRVLSAGLWFQ-E\n>s4\nMKVLAAGLWWQEE\n>s5\nMKTLSAGIWFEQE\n";

fn specmer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specmer")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let msa = dir.path().join("family.fasta");
    fs::write(&msa, MSA).unwrap();
    (dir, msa)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn speedup_at_zero_acceptance() {
    let o = specmer(&["speedup", "--alpha", "0", "--gamma", "5", "--ce", "0.425", "--mode", "vanilla"]);
    assert!(o.status.success());
    let v: f64 = stdout(&o).split_whitespace().last().unwrap().parse().unwrap();
    assert!((v - 0.32).abs() < 1e-12);
    let o = specmer(&["--json", "speedup", "--alpha", "0.8", "--gamma", "5", "--ce", "0.425"]);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 3);
    assert!((rows[0]["speedup"].as_f64().unwrap() - 1.1806).abs() < 1e-4);
}

#[test]
fn exit_codes() {
    assert_eq!(specmer(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(specmer(&["speedup", "--alpha", "2", "--gamma", "5", "--ce", "0.4"]).status.code(), Some(1));
    assert_eq!(specmer(&["index", "stats", "/nonexistent/index.json"]).status.code(), Some(2));
    assert_eq!(specmer(&["--help"]).status.code(), Some(0));
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let remote = format!("remote:http://127.0.0.1:{port},model=x");
    let o = specmer(&["generate", "--draft", &remote, "--target", &remote, "--method", "target", "--max-len", "5", "--out", "/tmp/never.fasta"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn index_build_and_stats() {
    let (dir, msa) = fixture();
    let ix = dir.path().join("ix.json");
    let o = specmer(&["--json", "index", "build", "--msa", s(&msa), "--k", "1,3", "--out", s(&ix)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let built: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(built["k_values"], serde_json::json!([1, 3]));
    assert_eq!(built["tables"][0]["total"], 3 * 12 + 2 * 13);
    assert!(dir.path().join("ix.json.manifest.json").exists());
    let o = specmer(&["--json", "index", "stats", s(&ix)]);
    let stats: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats, built);
}

fn generate(dir: &Path, msa: &Path, name: &str, extra: &[&str]) -> Vec<u8> {
    let out = dir.join(name);
    let mut args = vec!["generate", "--msa", s(msa), "--n", "12", "--max-len", "14", "--context", "MK", "--seed", "7"];
    args.extend_from_slice(&["--out", s(&out)]);
    args.extend_from_slice(extra);
    let o = specmer(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::read(out).unwrap()
}

#[test]
fn generate_is_deterministic() {
    let (dir, msa) = fixture();
    let a = generate(dir.path(), &msa, "a.fasta", &["--candidates", "3", "--k", "1,3"]);
    let b = generate(dir.path(), &msa, "b.fasta", &["--candidates", "3", "--k", "1,3"]);
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.matches('>').count(), 12);
    assert!(text.lines().filter(|l| !l.starts_with('>')).all(|l| l.starts_with("MK")));
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a.fasta.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
    assert!(m["outputs"][0]["content_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn single_candidate_specmer_matches_speculative() {
    let (dir, msa) = fixture();
    let a = generate(dir.path(), &msa, "a.fasta", &["--method", "specmer", "--candidates", "1"]);
    let b = generate(dir.path(), &msa, "b.fasta", &["--method", "speculative"]);
    assert_eq!(a, b);
}

#[test]
fn config_file_and_overrides() {
    let (dir, msa) = fixture();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"gamma": 2, "candidates": 2, "temp": 0.7, "n": 4}"#).unwrap();
    let a = generate(dir.path(), &msa, "a.fasta", &["--config", s(&cfg)]);
    let b = generate(dir.path(), &msa, "b.fasta", &["--gamma", "2", "--candidates", "2", "--temp", "0.7"]);
    assert_eq!(a, b);
    fs::write(&cfg, r#"{"gama": 2}"#).unwrap();
    let o = specmer(&["generate", "--config", s(&cfg), "--msa", s(&msa), "--max-len", "5", "--out", "/tmp/x.fasta"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_reads_traces() {
    let (dir, msa) = fixture();
    let trace = dir.path().join("t.jsonl");
    generate(dir.path(), &msa, "lib.fasta", &["--trace", s(&trace)]);
    let report = dir.path().join("report.json");
    let o = specmer(&[
        "--json",
        "analyze",
        "--seqs",
        s(&dir.path().join("lib.fasta")),
        "--trace",
        s(&trace),
        "--msa",
        s(&msa),
        "--wild-type",
        "MKVLAAGIWWQE",
        "--out",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["stats"]["size"], 12);
    assert!(v["stats"]["mean_nll"].as_f64().unwrap() > 0.0);
    assert!(v["stats"]["acceptance_ratio"].as_f64().is_some());
    assert!(v["diversity"]["wt_hamming"]["mean"].as_f64().is_some());
    assert!(report.exists() && dir.path().join("report.json.manifest.json").exists());
}

#[test]
fn verify_coupling_passes() {
    let o = specmer(&["verify", "coupling", "--trials", "200000", "--pairs", "3", "--seed", "1"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("[ok]").count(), 3);
}

#[test]
fn verify_sequence_reports_tv() {
    let o = specmer(&["--json", "verify", "sequence", "--samples", "50000", "--len", "3", "--seed", "3"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["tv"].as_f64().unwrap() < 0.05);
    assert!(v["chi2_p"].as_f64().is_some());
}

#[test]
fn small_sweep() {
    let (dir, msa) = fixture();
    let out = dir.path().join("sweep");
    let o = specmer(&[
        "--json", "sweep", "--msa", s(&msa), "--max-len", "12", "--context", "MK", "--n", "4", "--gammas", "2,3",
        "--temps", "1", "--k-sets", "1;1,3", "--candidates", "1,2", "--out-dir", s(&out), "--workers", "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["cells"], 8);
    assert_eq!(v["failed_cells"], 0);
    assert_eq!(v["inconsistent_accounting"], serde_json::json!([]));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    let nll: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(6).unwrap().parse().unwrap()).collect();
    assert!(nll.windows(2).all(|w| w[0] <= w[1]));
    assert!(out.join("sweep.json.manifest.json").exists());
}
