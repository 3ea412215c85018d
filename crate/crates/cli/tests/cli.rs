use std::path::Path;
use std::process::{Command, Output};

fn lqr_ioc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lqr-ioc"))
        .arg("--quiet")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(lqr_ioc(&a, &["--seed", "7", "gen", "-n", "3", "-m", "2"]).status.success());
    assert!(lqr_ioc(&b, &["--seed", "7", "gen", "-n", "3", "-m", "2"]).status.success());
    let first = std::fs::read(a.join("system.json")).unwrap();
    assert_eq!(first, std::fs::read(b.join("system.json")).unwrap());

    let c = dir.path().join("c");
    assert!(lqr_ioc(&c, &["--seed", "8", "gen", "-n", "3", "-m", "2"]).status.success());
    assert_ne!(first, std::fs::read(c.join("system.json")).unwrap());
}

#[test]
fn gen_rejects_zero_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let out = lqr_ioc(dir.path(), &["gen", "-n", "0", "-m", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generated_system_solves() {
    let dir = tempfile::tempdir().unwrap();
    assert!(lqr_ioc(dir.path(), &["--seed", "11", "gen", "-n", "3", "-m", "2"]).status.success());
    let system = dir.path().join("system.json");
    let run = dir.path().join("run");
    let out = lqr_ioc(&run, &["solve", "--system", system.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&run.join("report.json"));
    assert_eq!(report["status"], "converged");
    assert_eq!(report["passed"], true);
    for f in ["trace.csv", "expert.csv", "reconstructed.csv", "model.json"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let check = dir.path().join("check");
    let model = run.join("model.json");
    let out = lqr_ioc(&check, &["verify", "--system", system.to_str().unwrap(), "--model", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&check.join("verify.json"))["passed"], true);
}

#[test]
fn short_horizon_maps_to_excitation_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"horizon": 0.2}"#).unwrap();
    let out = lqr_ioc(dir.path(), &["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(3));
    let record = json(&dir.path().join("error.json"));
    assert_eq!(record["error"], "insufficient-excitation");
    let stderr: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(stderr, record);
}

#[test]
fn paper_sign_records_degenerate_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = lqr_ioc(dir.path(), &["--sign", "paper", "solve"]);
    assert_eq!(out.status.code(), Some(8));
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["status"], "degenerate-zero");
    assert_eq!(report["passed"], false);
    assert!(report["recovery_error"].is_string());
}

#[test]
fn repro_paper_writes_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = lqr_ioc(dir.path(), &["repro-paper"]);
    assert_eq!(out.status.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert!(table.starts_with("metric,ours,published\n"));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.lines().count() >= 3);
    let expert = std::fs::read_to_string(dir.path().join("expert.csv")).unwrap();
    let recon = std::fs::read_to_string(dir.path().join("reconstructed.csv")).unwrap();
    assert_eq!(expert.lines().count(), recon.lines().count());
    assert_eq!(expert.lines().next(), recon.lines().next());
}

#[test]
fn montecarlo_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(lqr_ioc(&a, &["--seed", "300", "montecarlo", "--trials", "6"]).status.success());
    assert!(lqr_ioc(&b, &["--seed", "300", "montecarlo", "--trials", "6", "--sequential"]).status.success());
    let csv = std::fs::read_to_string(a.join("montecarlo.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(b.join("montecarlo.csv")).unwrap());
    assert_eq!(csv.lines().count(), 7);
    assert_eq!(json(&a.join("montecarlo_stats.json"))["trials"], 6);
}

#[test]
fn malformed_config_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"horizon": "long"}"#).unwrap();
    let out = lqr_ioc(dir.path(), &["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(9));
}
