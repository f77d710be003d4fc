//! `safepd` command-line front end.
//!
//! Subcommands: `run` (one solve, writes trace JSON and ledger CSV),
//! `bench` (algorithm x seed cross-product, writes per-run traces and a gap
//! summary CSV), `audit` (replay saved artifacts against ground truth) and
//! `verify` (numeric checks on a benchmark). `SAFEPD_LOG` controls log
//! verbosity. Exit codes: 0 success, 1 check failure, 2 usage or IO error,
//! 3 budget exceeded.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::warn;
use serde::Deserialize;

use safepd_core::bench::run_bench;
use safepd_core::oracle::QueryLedger;
use safepd_core::problem::problem_by_name;
use safepd_core::runner::execute_run;
use safepd_core::scsa::RunOutcome;
use safepd_core::trace::{Algo, FeedbackKind, RunConfig, RunTrace};
use safepd_core::verify::{audit_trace, check_dual_regularity, dual_opt_bisection, gradient_consistency};

const EXIT_CHECK_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(name = "safepd", version, about = "Safe black-box constrained optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one solve and write its artifacts
    Run {
        /// TOML run configuration
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config algorithm (scsa|convex|safepd|lbsgd)
        #[arg(long)]
        algo: Option<String>,
        /// Output directory (default: runs/<run_id>)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the algorithm x seed cross-product and write a summary CSV
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Number of seeds (0..n)
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Comma-separated algorithm list
        #[arg(long, default_value = "scsa,lbsgd")]
        algos: String,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
    /// Replay saved artifacts against analytic ground truth
    Audit {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        ledger: PathBuf,
    },
    /// Numeric verification checks on a benchmark
    Verify {
        /// Benchmark name (quadratic|nonconvex-gaussian)
        #[arg(long)]
        problem: String,
        /// Check to run: dual-regularity|gradient-consistency|all
        #[arg(long, default_value = "dual-regularity")]
        check: String,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Constraint radius of the non-convex benchmark
        #[arg(long)]
        r: Option<f64>,
    },
}

/// TOML-file view of a run configuration: every key optional with the
/// documented defaults, unknown keys rejected.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    problem: Option<String>,
    dim: Option<usize>,
    r: Option<f64>,
    sigma: Option<f64>,
    sigma_hat: Option<f64>,
    algo: Option<String>,
    eps_p: Option<f64>,
    eps_c: Option<f64>,
    eps: Option<f64>,
    delta: Option<f64>,
    max_oracle_calls: Option<u64>,
    seed: Option<u64>,
    feedback: Option<String>,
    fd_h: Option<f64>,
    barrier_eta: Option<f64>,
    lbsgd_step: Option<f64>,
    rho_f: Option<f64>,
    rho_g: Option<f64>,
}

impl FileConfig {
    fn into_run_config(self) -> anyhow::Result<RunConfig> {
        let feedback = match self.feedback.as_deref() {
            None | Some("first_order") => FeedbackKind::FirstOrder,
            Some("zeroth_order") => FeedbackKind::ZerothOrder,
            Some(other) => anyhow::bail!("unknown feedback mode '{other}'"),
        };
        let config = RunConfig {
            problem: self.problem.unwrap_or_else(|| "quadratic".into()),
            dim: self.dim.unwrap_or(2),
            r: self.r,
            sigma: self.sigma.unwrap_or(0.0),
            sigma_hat: self.sigma_hat.unwrap_or(0.0),
            algo: Algo::parse(self.algo.as_deref().unwrap_or("scsa"))?,
            eps_p: self.eps_p.unwrap_or(0.05),
            eps_c: self.eps_c.unwrap_or(0.05),
            eps: self.eps,
            delta: self.delta.unwrap_or(0.01),
            max_oracle_calls: self.max_oracle_calls.unwrap_or(1_000_000),
            seed: self.seed.unwrap_or(0),
            feedback,
            fd_h: self.fd_h,
            barrier_eta: self.barrier_eta,
            lbsgd_step: self.lbsgd_step,
            rho_f: self.rho_f,
            rho_g: self.rho_g,
        };
        config.validate()?;
        Ok(config)
    }
}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    let file: FileConfig = toml::from_str(&text)
        .map_err(|e| anyhow::anyhow!("cannot parse config {}: {e}", path.display()))?;
    file.into_run_config()
}

fn cmd_run(
    config_path: &Path,
    seed: Option<u64>,
    algo: Option<String>,
    out: Option<PathBuf>,
) -> anyhow::Result<u8> {
    let mut config = load_config(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(algo) = algo {
        config.algo = Algo::parse(&algo)?;
    }
    let artifacts = execute_run(&config)?;
    let trace = &artifacts.trace;
    let out_dir = out.unwrap_or_else(|| PathBuf::from("runs").join(&trace.run_id));
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("trace.json"), trace.to_json())?;
    std::fs::write(
        out_dir.join("ledger.csv"),
        artifacts.ledger.to_csv(config.dim, &trace.run_id),
    )?;

    let spec = problem_by_name(&config.problem, config.dim, config.r)?;
    let gap = spec
        .f_star
        .map(|fs| spec.eval_true(&trace.final_x).map(|(f, _)| f.value - fs))
        .transpose()?;
    let kkt = trace
        .final_kkt
        .as_ref()
        .map(|k| format!("grad {:.4} slack {:.4}", k.grad_norm, k.comp_slack))
        .unwrap_or_else(|| "n/a".into());
    println!(
        "{} seed {}: outcome {:?}, gap {}, kkt {}, calls {}, violations deferred-to-audit -> {}",
        config.algo.name(),
        config.seed,
        trace.outcome,
        gap.map_or("n/a".to_string(), |g| format!("{g:.5}")),
        kkt,
        trace.total_oracle_calls,
        out_dir.display()
    );
    Ok(match trace.outcome {
        RunOutcome::BudgetExceeded => EXIT_BUDGET,
        RunOutcome::SafetyAbort => EXIT_CHECK_FAILURE,
        _ => 0,
    })
}

fn cmd_bench(config_path: &Path, seeds: u64, algos: &str, out: &Path) -> anyhow::Result<u8> {
    let base = load_config(config_path)?;
    let algos = algos
        .split(',')
        .map(|s| Algo::parse(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let seed_list: Vec<u64> = (0..seeds).collect();
    if seed_list.is_empty() {
        warn!("bench with zero seeds produces an empty summary");
    }
    std::fs::create_dir_all(out)?;
    // per-run artifacts for later auditing
    for &algo in &algos {
        for &seed in &seed_list {
            let mut config = base.clone();
            config.algo = algo;
            config.seed = seed;
            let artifacts = execute_run(&config)?;
            let dir = out.join(format!("{}-seed{}", algo.name(), seed));
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("trace.json"), artifacts.trace.to_json())?;
            std::fs::write(
                dir.join("ledger.csv"),
                artifacts.ledger.to_csv(config.dim, &artifacts.trace.run_id),
            )?;
        }
    }
    let output = run_bench(&base, &algos, &seed_list)?;
    std::fs::write(out.join("summary.csv"), output.to_csv())?;
    println!(
        "bench wrote {} rows over {} checkpoints -> {}",
        output.rows.len(),
        output.checkpoints.len(),
        out.join("summary.csv").display()
    );
    Ok(0)
}

fn cmd_audit(trace_path: &Path, ledger_path: &Path) -> anyhow::Result<u8> {
    let trace_text = std::fs::read_to_string(trace_path)
        .map_err(|e| anyhow::anyhow!("cannot read trace {}: {e}", trace_path.display()))?;
    let trace = RunTrace::from_json(&trace_text)?;
    let ledger_text = std::fs::read_to_string(ledger_path)
        .map_err(|e| anyhow::anyhow!("cannot read ledger {}: {e}", ledger_path.display()))?;
    let (ledger, ledger_id) = QueryLedger::from_csv(&ledger_text)?;
    if !ledger_id.is_empty() && ledger_id != trace.run_id {
        anyhow::bail!(
            "run identifiers disagree: trace {} vs ledger {ledger_id}",
            trace.run_id
        );
    }
    let spec = problem_by_name(&trace.config.problem, trace.config.dim, trace.config.r)?;
    let report = audit_trace(&trace, &ledger, &spec)?;
    print!("{}", report.to_json());
    Ok(if report.violations > 0 || report.safety_ball_breaches > 0 || !report.lambda_monotone {
        EXIT_CHECK_FAILURE
    } else {
        0
    })
}

fn cmd_verify(problem: &str, check: &str, dim: usize, r: Option<f64>) -> anyhow::Result<u8> {
    let spec = problem_by_name(problem, dim, r)?;
    let mut all_ok = true;
    if check == "gradient-consistency" || check == "all" {
        let worst = gradient_consistency(&spec, 100, 11)?;
        let ok = worst <= 1e-5;
        all_ok &= ok;
        println!(
            "gradient-consistency: worst relative error {worst:.3e} {}",
            if ok { "(pass)" } else { "(fail)" }
        );
    }
    if check == "dual-regularity" || check == "all" {
        if spec.constants.mu_f <= 0.0 {
            anyhow::bail!("dual-regularity needs a strongly convex problem");
        }
        let lambda_check = spec.constants.delta_f / spec.constants.alpha;
        let lambda_star = dual_opt_bisection(&spec, lambda_check, 1e-8)?;
        let report = check_dual_regularity(&spec, lambda_star.max(1e-9), lambda_check, 64)?;
        print!("{}", report.to_json());
        all_ok &= report.pass();
        println!("dual-regularity: {}", if report.pass() { "pass" } else { "fail" });
    }
    if check != "gradient-consistency" && check != "dual-regularity" && check != "all" {
        anyhow::bail!("unknown check '{check}'");
    }
    Ok(if all_ok { 0 } else { EXIT_CHECK_FAILURE })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SAFEPD_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            algo,
            out,
        } => cmd_run(&config, seed, algo, out),
        Command::Bench {
            config,
            seeds,
            algos,
            out,
        } => cmd_bench(&config, seeds, &algos, &out),
        Command::Audit { trace, ledger } => cmd_audit(&trace, &ledger),
        Command::Verify {
            problem,
            check,
            dim,
            r,
        } => cmd_verify(&problem, &check, dim, r),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
