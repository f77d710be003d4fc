//! End-to-end tests of the command-line interface: exit codes, artifact
//! determinism, and the audit/verify flows.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_safepd")
}

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("safepd-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const QUICK_CONFIG: &str = r#"
problem = "quadratic"
dim = 2
sigma = 0.05
sigma_hat = 0.05
algo = "scsa"
eps_p = 0.1
eps_c = 0.1
delta = 0.01
max_oracle_calls = 60000
seed = 7
feedback = "first_order"
"#;

#[test]
fn run_writes_artifacts_and_reports_outcome() {
    let dir = temp_dir("run");
    let config = write_config(&dir, QUICK_CONFIG);
    let out = run(
        &["run", "--config", config.to_str().unwrap(), "--out", "art"],
        &dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("outcome Converged"), "stdout: {stdout}");
    assert!(dir.join("art/trace.json").exists());
    assert!(dir.join("art/ledger.csv").exists());
    let trace = std::fs::read_to_string(dir.join("art/trace.json")).unwrap();
    assert!(trace.contains("\"outcome\": \"Converged\""));
}

#[test]
fn missing_config_exits_with_usage_code() {
    let dir = temp_dir("missing");
    let out = run(&["run", "--config", "nope.toml"], &dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_with_usage_code() {
    let dir = temp_dir("badcfg");
    let config = write_config(&dir, "problem = \"quadratic\"\nbogus_key = 3\n");
    let out = run(&["run", "--config", config.to_str().unwrap()], &dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn budget_exhaustion_exits_with_distinct_code_and_writes_trace() {
    let dir = temp_dir("budget");
    let config = write_config(
        &dir,
        &QUICK_CONFIG.replace("max_oracle_calls = 60000", "max_oracle_calls = 500"),
    );
    let out = run(
        &["run", "--config", config.to_str().unwrap(), "--out", "art"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.join("art/trace.json").exists());
}

#[test]
fn repeated_seed_gives_byte_identical_trace() {
    let dir = temp_dir("determinism");
    let config = write_config(&dir, QUICK_CONFIG);
    for sub in ["a", "b"] {
        let out = run(
            &[
                "run",
                "--config",
                config.to_str().unwrap(),
                "--seed",
                "9",
                "--out",
                sub,
            ],
            &dir,
        );
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.join("a/trace.json")).unwrap();
    let b = std::fs::read(dir.join("b/trace.json")).unwrap();
    assert_eq!(a, b, "traces are not byte-identical");
    let la = std::fs::read(dir.join("a/ledger.csv")).unwrap();
    let lb = std::fs::read(dir.join("b/ledger.csv")).unwrap();
    assert_eq!(la, lb);
}

#[test]
fn audit_clean_run_exits_zero_and_tampered_ledger_fails() {
    let dir = temp_dir("audit");
    let config = write_config(&dir, QUICK_CONFIG);
    let out = run(
        &["run", "--config", config.to_str().unwrap(), "--out", "art"],
        &dir,
    );
    assert!(out.status.success());
    let audit = run(
        &[
            "audit",
            "--trace",
            "art/trace.json",
            "--ledger",
            "art/ledger.csv",
        ],
        &dir,
    );
    assert_eq!(audit.status.code(), Some(0), "{}", String::from_utf8_lossy(&audit.stderr));
    let report = String::from_utf8_lossy(&audit.stdout);
    assert!(report.contains("\"violations\": 0"));

    // inject an infeasible query: the auditor must flag it and exit 1
    let ledger_path = dir.join("art/ledger.csv");
    let mut text = std::fs::read_to_string(&ledger_path).unwrap();
    text.push_str("999999,0.0,5.0,0\n");
    std::fs::write(&ledger_path, text).unwrap();
    let audit = run(
        &[
            "audit",
            "--trace",
            "art/trace.json",
            "--ledger",
            "art/ledger.csv",
        ],
        &dir,
    );
    assert_eq!(audit.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&audit.stdout).contains("\"violations\": 1"));
}

#[test]
fn audit_missing_artifacts_exits_usage() {
    let dir = temp_dir("audit-missing");
    let out = run(&["audit", "--trace", "no.json", "--ledger", "no.csv"], &dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_dual_regularity_passes_on_quadratic() {
    let dir = temp_dir("verify");
    let out = run(
        &["verify", "--problem", "quadratic", "--check", "dual-regularity"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("dual-regularity: pass"));
}

#[test]
fn verify_gradient_consistency_both_benchmarks() {
    let dir = temp_dir("verify-grad");
    for (problem, extra) in [("quadratic", vec![]), ("nonconvex-gaussian", vec!["--r", "0.5"])] {
        let mut args = vec![
            "verify",
            "--problem",
            problem,
            "--check",
            "gradient-consistency",
        ];
        args.extend(extra);
        let out = run(&args, &dir);
        assert_eq!(out.status.code(), Some(0));
    }
}

#[test]
fn bench_writes_cross_product_summary() {
    let dir = temp_dir("bench");
    let config = write_config(
        &dir,
        &QUICK_CONFIG.replace("max_oracle_calls = 60000", "max_oracle_calls = 20000"),
    );
    let out = run(
        &[
            "bench",
            "--config",
            config.to_str().unwrap(),
            "--seeds",
            "2",
            "--algos",
            "scsa,lbsgd",
            "--out",
            "bench",
        ],
        &dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.join("bench/summary.csv")).unwrap();
    // header plus 2 algorithms x 2 seeds
    assert_eq!(summary.lines().count(), 5);
    assert!(summary.lines().nth(1).unwrap().starts_with("scsa,0,"));
    assert!(dir.join("bench/lbsgd-simplified-seed1/trace.json").exists());
    // zero seeds: empty summary, still success
    let out = run(
        &[
            "bench",
            "--config",
            config.to_str().unwrap(),
            "--seeds",
            "0",
            "--out",
            "bench0",
        ],
        &dir,
    );
    assert!(out.status.success());
    let summary = std::fs::read_to_string(dir.join("bench0/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1);
}
