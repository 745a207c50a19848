//! Runs the `fastmks` binary with its in-process server.

use std::path::Path;
use std::process::{Command, Output};

fn fastmks(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastmks"))
        .args(args)
        .current_dir(dir)
        .env_remove("FASTMKS_SERVER")
        .output()
        .expect("run fastmks")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn generate(dir: &Path, corpus: &str, n: &str, file: &str) {
    let out = fastmks(dir, &["generate", "--corpus", corpus, "--dim", "3", "-n", n, "--out", file]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verified_query_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "cube", "400", "ref.csv");
    generate(dir.path(), "cube", "30", "q.csv");
    let out = fastmks(dir.path(), &["query", "-r", "ref.csv", "-q", "q.csv", "-k", "5", "--verify", "--csv", "s.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["passed"], true);
    assert_eq!(report["results"].as_array().unwrap().len(), 30);
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(csv.starts_with("n,k,queries,mean_kernel_evals,speedup\n400,5,30,"));
}

#[test]
fn k_larger_than_n_fails() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "cube", "5", "small.csv");
    let out = fastmks(dir.path(), &["query", "-r", "small.csv", "-k", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k exceeds n"));
}

#[test]
fn approximate_mode_reports_its_guarantee() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "cube", "300", "ref.csv");
    let out = fastmks(dir.path(), &["query", "-r", "ref.csv", "-m", "ava:eps=0.1", "-k", "2", "--verify"]);
    assert_eq!(out.status.code(), Some(0));
    let guarantee = json(&out)["config"]["guarantee"].as_str().unwrap().to_string();
    assert!(guarantee.contains("0.1"), "{guarantee}");
}

#[test]
fn built_index_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "sequences", "120", "seqs.fasta");
    let out = fastmks(dir.path(), &["build", "-r", "seqs.fasta", "-K", "pspectrum:p=3", "--out", "idx.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["validation"].as_array().unwrap().iter().all(|c| c["passed"] == true));

    let out = fastmks(
        dir.path(),
        &["query", "-r", "seqs.fasta", "-K", "pspectrum:p=3", "--index", "idx.json", "-k", "3", "--verify", "--output", "r.json"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["indexLoaded"], true);
    assert_eq!(report["passed"], true);
}

#[test]
fn diagnose_and_bench_emit_reports() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "mixture", "200", "mix.csv");
    let out = fastmks(dir.path(), &["diagnose", "-r", "mix.csv", "--direction-samples", "4"]);
    assert!(out.status.success());
    assert!(json(&out)["expansionConstant"].as_f64().unwrap() >= 2.0);

    let out = fastmks(
        dir.path(),
        &["bench", "--corpus", "cube", "--dim", "3", "--sizes", "200,400", "--queries", "10", "--ks", "1,3", "--csv", "b.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn unreachable_server_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fastmks(dir.path(), &["--server", "http://127.0.0.1:1", "query", "-r", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}
