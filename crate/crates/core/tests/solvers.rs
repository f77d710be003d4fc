//! Integration tests for solver behaviors beyond the acceptance criteria:
//! the interior-optimum path, the proximal loop on convex inputs, and
//! cross-checks between solver output and the duality oracles.

use safepd_core::inner::{psgd_solve, Ball};
use safepd_core::linalg::dist;
use safepd_core::oracle::{NoiseModel, Oracle, QueryOracle};
use safepd_core::problem::{make_quadratic_benchmark, quadratic_with_target};
use safepd_core::runner::execute_run;
use safepd_core::safepd::{convex_solve, safepd_solve};
use safepd_core::scsa::{scsa_solve, RunOutcome, ScsaConfig};
use safepd_core::trace::{Algo, FeedbackKind, RunConfig};
use safepd_core::verify::audit_trace;
use safepd_core::{problem, run_rng};

#[test]
fn interior_optimum_ends_with_zero_multiplier() {
    // Shifting the target to (0, 0.6) puts the unconstrained minimum inside
    // the feasible set, so the multiplier must walk to exactly zero and the
    // final solve lands near the unconstrained optimum.
    let spec = quadratic_with_target(2, 0.6).unwrap();
    let mut oracle = Oracle::new(&spec, NoiseModel::noiseless());
    let mut rng = run_rng(7);
    let cfg = ScsaConfig::new(0.05, 1e-3, 0.01, 10_000_000);
    let result = scsa_solve(&spec.constants, &mut oracle, &cfg, &mut rng).unwrap();
    assert_eq!(result.outcome, RunOutcome::Converged);
    assert_eq!(result.lambda, 0.0);
    let eta = result.final_eta;
    let tol = (2.0 * eta / spec.constants.mu_f).sqrt();
    assert!(
        dist(&result.x, &[0.0, 0.6]) <= tol + 1e-9,
        "final point {:?} not within {tol} of the interior optimum",
        result.x
    );
}

#[test]
fn safepd_on_strongly_convex_problem_matches_scsa_optimum() {
    let spec = make_quadratic_benchmark(2).unwrap();
    let mut oracle = Oracle::new(&spec, NoiseModel::noiseless());
    let mut rng = run_rng(7);
    let cfg = ScsaConfig::new(0.05, 0.05, 0.01, 100_000_000);
    let result = safepd_solve(&spec.constants, &mut oracle, &cfg, 4.0, 16.0, &mut rng).unwrap();
    assert_eq!(result.outcome, RunOutcome::Converged);
    let f = spec.eval_true(&result.x).unwrap().0.value;
    assert!(f - 12.25 <= 0.15, "proximal fixed point gap {}", f - 12.25);
    // warm starts dominate the returned multipliers round by round
    for s in &result.rounds {
        assert!(
            s.lambda_check >= s.lambda - 1e-9,
            "round {}: warm start {} below returned multiplier {}",
            s.k,
            s.lambda_check,
            s.lambda
        );
    }
}

#[test]
fn safepd_stops_immediately_at_a_fixed_point() {
    // target = x_start makes the start an exact KKT point of its own
    // subproblem: one round, zero recentering step
    let spec = quadratic_with_target(2, 0.5).unwrap();
    let mut oracle = Oracle::new(&spec, NoiseModel::noiseless());
    let mut rng = run_rng(7);
    let cfg = ScsaConfig::new(0.05, 0.05, 0.01, 10_000_000);
    let result = safepd_solve(&spec.constants, &mut oracle, &cfg, 4.0, 16.0, &mut rng).unwrap();
    assert_eq!(result.outcome, RunOutcome::Converged);
    assert_eq!(result.rounds.len(), 1);
    assert!(result.rounds[0].step_norm <= 1e-6);
}

#[test]
fn convex_wrapper_with_huge_eps_still_returns_feasible_point() {
    let spec = make_quadratic_benchmark(2).unwrap();
    let mut consts = spec.constants.clone();
    consts.convexity = problem::ConvexityClass::Convex;
    consts.mu_f = 0.0;
    let mut oracle = Oracle::new(&spec, NoiseModel::noiseless());
    let mut rng = run_rng(7);
    let cfg = ScsaConfig::new(0.1, 0.1, 0.01, 10_000_000);
    let eps = 20.0;
    let result = convex_solve(&consts, &mut oracle, &cfg, eps, &mut rng).unwrap();
    let (f, g) = spec.eval_true(&result.x).unwrap();
    assert!(g.value <= 0.0);
    assert!(f.value - 12.25 <= eps);
}

#[test]
fn noiseless_dual_gradient_equals_estimate() {
    // with zero noise the confidence estimate collapses to the exact value,
    // so recorded g_hat values must equal the true constraint at the center
    let spec = make_quadratic_benchmark(2).unwrap();
    let mut oracle = Oracle::new(&spec, NoiseModel::noiseless());
    let mut rng = run_rng(3);
    let cfg = ScsaConfig::new(0.05, 0.05, 0.01, 10_000_000);
    let result = scsa_solve(&spec.constants, &mut oracle, &cfg, &mut rng).unwrap();
    for s in &result.states {
        let g = spec.eval_true(&s.x).unwrap().1.value;
        assert_eq!(s.g_hat, g);
    }
}

#[test]
fn inner_reports_match_ledger_accounting() {
    let spec = make_quadratic_benchmark(2).unwrap();
    let mut oracle = Oracle::new(&spec, NoiseModel::gaussian(0.05, 0.05).unwrap());
    let mut rng = run_rng(9);
    let before = oracle.total_calls();
    let ball = Ball::new(vec![0.0, 0.5], 0.25).unwrap();
    let rep = psgd_solve(
        &mut oracle,
        4.5,
        &ball,
        &[0.0, 0.5],
        1e-3,
        &spec.constants,
        100_000,
        &mut rng,
    )
    .unwrap();
    assert_eq!(rep.oracle_calls, oracle.total_calls() - before);
    assert_eq!(oracle.ledger().total_samples(), oracle.total_calls());
}

#[test]
fn audit_of_executed_runs_is_clean_for_all_algorithms() {
    for algo in [Algo::Scsa, Algo::Convex, Algo::Lbsgd] {
        let config = RunConfig {
            problem: "quadratic".into(),
            dim: 2,
            r: None,
            sigma: 0.05,
            sigma_hat: 0.05,
            algo,
            eps_p: 0.1,
            eps_c: 0.1,
            eps: Some(0.4),
            delta: 0.01,
            max_oracle_calls: 60_000,
            seed: 5,
            feedback: FeedbackKind::FirstOrder,
            fd_h: None,
            barrier_eta: None,
            lbsgd_step: None,
            rho_f: None,
            rho_g: None,
        };
        let artifacts = execute_run(&config).unwrap();
        let spec = problem::problem_by_name("quadratic", 2, None).unwrap();
        let report = audit_trace(&artifacts.trace, &artifacts.ledger, &spec).unwrap();
        assert_eq!(report.violations, 0, "{algo:?} run violated the constraint");
        assert!(report.lambda_monotone);
        assert_eq!(report.safety_ball_breaches, 0, "{algo:?} ball breach");
        assert_eq!(report.total_queries, artifacts.trace.total_oracle_calls);
    }
}

#[test]
fn audit_of_nonconvex_run_is_clean() {
    let config = RunConfig {
        problem: "nonconvex-gaussian".into(),
        dim: 2,
        r: Some(0.5),
        sigma: 0.0,
        sigma_hat: 0.0,
        algo: Algo::Safepd,
        eps_p: 0.05,
        eps_c: 0.05,
        eps: None,
        delta: 0.01,
        max_oracle_calls: 100_000_000,
        seed: 5,
        feedback: FeedbackKind::FirstOrder,
        fd_h: None,
        barrier_eta: None,
        lbsgd_step: None,
        rho_f: None,
        rho_g: None,
    };
    let artifacts = execute_run(&config).unwrap();
    let spec = problem::problem_by_name("nonconvex-gaussian", 2, Some(0.5)).unwrap();
    let report = audit_trace(&artifacts.trace, &artifacts.ledger, &spec).unwrap();
    assert_eq!(report.violations, 0);
    assert!(report.worst_g <= 0.0);
    assert_eq!(artifacts.trace.outcome, RunOutcome::Converged);
    // regularized feasibility implies original feasibility pointwise
    for rec in artifacts.ledger.records() {
        let g = spec.eval_true(&rec.x).unwrap().1.value;
        assert!(g <= 1e-12);
    }
}

#[test]
fn zeroth_order_run_audits_clean_with_probe_tolerance() {
    let config = RunConfig {
        problem: "quadratic".into(),
        dim: 2,
        r: None,
        sigma: 0.01,
        sigma_hat: 0.0,
        algo: Algo::Scsa,
        eps_p: 0.1,
        eps_c: 0.1,
        eps: None,
        delta: 0.01,
        max_oracle_calls: 100_000,
        seed: 2,
        feedback: FeedbackKind::ZerothOrder,
        fd_h: Some(1e-3),
        barrier_eta: None,
        lbsgd_step: None,
        rho_f: None,
        rho_g: None,
    };
    let artifacts = execute_run(&config).unwrap();
    let spec = problem::problem_by_name("quadratic", 2, None).unwrap();
    let report = audit_trace(&artifacts.trace, &artifacts.ledger, &spec).unwrap();
    assert_eq!(report.violations, 0);
    assert_eq!(report.safety_ball_breaches, 0);
}
