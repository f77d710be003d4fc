//! Brute-force, high-accuracy oracles and trace auditing.
//!
//! Everything here may read analytic ground truth. The dual-function
//! evaluator and the multiplier bisection ground the derived constants used
//! across the test suite; `check_dual_regularity` verifies the smoothness
//! and local-concavity envelopes of the dual function numerically; and
//! `audit_trace` replays a run's query ledger against the true constraint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::oracle::QueryLedger;
use crate::problem::{ConvexityClass, ProblemSpec};
use crate::trace::{Algo, RunTrace};

/// Effective strong convexity of `L(., lambda)`: for a non-convex
/// objective the smoothness bound acts as weak convexity, so the constraint
/// contribution must dominate it.
fn lagrangian_strong_convexity(spec: &ProblemSpec, lambda: f64) -> f64 {
    let c = &spec.constants;
    match c.convexity {
        ConvexityClass::NonConvex => lambda * c.mu_g - c.m_f,
        _ => c.mu_f + lambda * c.mu_g,
    }
}

/// High-accuracy evaluation of the dual function:
/// `d(lambda) = min_x L(x, lambda)` together with the minimizer.
///
/// Deterministic gradient descent on exact gradients, certified by the
/// gradient norm; fails when the Lagrangian is not strongly convex at this
/// multiplier.
pub fn dual_value(spec: &ProblemSpec, lambda: f64, tol: f64) -> Result<(f64, Vec<f64>)> {
    if lambda < 0.0 {
        return Err(Error::Input("lambda must be non-negative".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Input("tol must be positive".into()));
    }
    let mu = lagrangian_strong_convexity(spec, lambda);
    if mu <= 0.0 {
        return Err(Error::Input(format!(
            "Lagrangian is not strongly convex at lambda = {lambda}; dual minimizer undefined"
        )));
    }
    let m_l = spec.constants.m_f + lambda * spec.constants.m_g;
    let gamma = 1.0 / m_l;
    let grad_tol = (2.0 * mu * tol).sqrt().max(mu * 1e-13);
    let mut x = spec.constants.x_start.clone();
    for _ in 0..1_000_000 {
        let (f, g) = spec.eval_true(&x)?;
        let grad: Vec<f64> = f
            .gradient
            .iter()
            .zip(&g.gradient)
            .map(|(a, b)| a + lambda * b)
            .collect();
        if norm(&grad) <= grad_tol {
            return Ok((f.value + lambda * g.value, x));
        }
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi -= gamma * gi;
        }
    }
    Err(Error::Input(
        "dual_value did not reach its certificate within the iteration cap".into(),
    ))
}

/// Optimal multiplier by bisection on the sign of `g(x_lambda)`, which is
/// the dual gradient and non-increasing in `lambda`.
///
/// `lambda_hi` must bracket the optimum: its Lagrangian minimizer has to be
/// feasible, which the dual bound `delta_f / beta` guarantees.
pub fn dual_opt_bisection(spec: &ProblemSpec, lambda_hi: f64, tol: f64) -> Result<f64> {
    if !(lambda_hi > 0.0 && tol > 0.0) {
        return Err(Error::Input("lambda_hi and tol must be positive".into()));
    }
    let inner_tol = (tol * tol * 1e-4).max(1e-15);
    let g_at = |lam: f64| -> Result<f64> {
        let (_, x) = dual_value(spec, lam, inner_tol)?;
        Ok(spec.eval_true(&x)?.1.value)
    };
    if g_at(lambda_hi)? > 0.0 {
        return Err(Error::Input(format!(
            "lambda_hi = {lambda_hi} does not bracket the optimum: its Lagrangian minimizer is \
             infeasible; choose lambda_hi >= delta_f / beta"
        )));
    }
    let mut lo = 0.0;
    if g_at(lo)? <= 0.0 {
        // the unconstrained minimizer is already feasible
        return Ok(0.0);
    }
    let mut hi = lambda_hi;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g_at(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Finite-difference curvature of the dual function at `lambda`, using the
/// identity `d'(lambda) = g(x_lambda)`.
pub fn dual_curvature_at(spec: &ProblemSpec, lambda: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Input("h must be positive".into()));
    }
    let tol = 1e-15;
    let (_, xa) = dual_value(spec, lambda, tol)?;
    let (_, xb) = dual_value(spec, lambda + h, tol)?;
    let ga = spec.eval_true(&xa)?.1.value;
    let gb = spec.eval_true(&xb)?.1.value;
    Ok((gb - ga) / h)
}

/// Result of the dual-regularity checks over a multiplier grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularityReport {
    pub lambda_star: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    /// Smoothness envelope `2 L_g^2 / mu_f` that all slopes must respect.
    pub envelope: f64,
    pub max_slope: f64,
    pub min_slope: f64,
    pub smoothness_ok: bool,
    pub concavity_ok: bool,
    /// Curvature magnitude at least `||grad g(x_lambda)||^2 / M_L` on every
    /// grid cell.
    pub curvature_ok: bool,
    /// Pointwise `-g(x_lambda) >= mu_d/2 (lambda - lambda*)` with the
    /// convex-case lower bound for `mu_d`.
    pub depth_ok: bool,
    pub failures: Vec<String>,
}

impl RegularityReport {
    pub fn pass(&self) -> bool {
        self.smoothness_ok && self.concavity_ok && self.curvature_ok && self.depth_ok
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Verify the dual function's regularity on a grid over
/// `[lambda_lo, lambda_hi]`, which must sit inside `[lambda*, lambda_check]`
/// (outside it the Lagrangian minimizer leaves the feasible set and the
/// Lipschitz envelope no longer applies).
pub fn check_dual_regularity(
    spec: &ProblemSpec,
    lambda_lo: f64,
    lambda_hi: f64,
    grid_points: usize,
) -> Result<RegularityReport> {
    if grid_points < 3 {
        return Err(Error::Input("need at least 3 grid points".into()));
    }
    if !(lambda_hi > lambda_lo && lambda_lo >= 0.0) {
        return Err(Error::Input("invalid grid interval".into()));
    }
    let c = &spec.constants;
    if c.convexity != ConvexityClass::StronglyConvex {
        return Err(Error::Input(
            "dual regularity checks need a strongly convex problem".into(),
        ));
    }
    let lambda_check = c.delta_f / c.alpha;
    let lambda_star = dual_opt_bisection(spec, lambda_check.max(lambda_hi), 1e-9)?;
    if lambda_lo < lambda_star - 1e-6 {
        return Err(Error::Input(format!(
            "grid leaves the feasible dual region: lo = {lambda_lo} < lambda* = {lambda_star}"
        )));
    }
    if lambda_hi > lambda_check + 1e-9 {
        return Err(Error::Input(format!(
            "grid exceeds the initial multiplier {lambda_check}"
        )));
    }

    let tol = 1e-15;
    let mut lambdas = Vec::with_capacity(grid_points);
    let mut g_vals = Vec::with_capacity(grid_points);
    let mut grad_norms = Vec::with_capacity(grid_points);
    for i in 0..grid_points {
        let lam = lambda_lo + (lambda_hi - lambda_lo) * i as f64 / (grid_points - 1) as f64;
        let (_, x) = dual_value(spec, lam, tol)?;
        let g = spec.eval_true(&x)?.1;
        lambdas.push(lam);
        g_vals.push(g.value);
        grad_norms.push(norm(&g.gradient));
    }

    let envelope = 2.0 * c.l_g * c.l_g / c.mu_f;
    let mut failures = Vec::new();
    let mut max_slope = f64::NEG_INFINITY;
    let mut min_slope = f64::INFINITY;
    let mut smoothness_ok = true;
    let mut concavity_ok = true;
    let mut curvature_ok = true;
    for i in 0..grid_points - 1 {
        let slope = (g_vals[i + 1] - g_vals[i]) / (lambdas[i + 1] - lambdas[i]);
        max_slope = max_slope.max(slope);
        min_slope = min_slope.min(slope);
        if slope < -envelope * (1.0 + 1e-9) - 1e-12 {
            smoothness_ok = false;
            failures.push(format!(
                "slope {slope} below the smoothness envelope -{envelope} on cell {i}"
            ));
        }
        if slope > 1e-9 {
            concavity_ok = false;
            failures.push(format!("positive dual-gradient slope {slope} on cell {i}"));
        }
        // curvature magnitude must dominate ||grad g||^2 / M_L somewhere on
        // the cell; use the weakest endpoint bound with numerical slack
        let bound_at = |j: usize| {
            let m_l = c.m_f + lambdas[j] * c.m_g;
            grad_norms[j] * grad_norms[j] / m_l
        };
        let bound = bound_at(i).min(bound_at(i + 1));
        if slope.abs() < bound * (1.0 - 1e-6) - 1e-12 {
            curvature_ok = false;
            failures.push(format!(
                "curvature {} below its lower bound {bound} on cell {i}",
                slope.abs()
            ));
        }
    }
    let mut depth_ok = true;
    for i in 0..grid_points {
        let m_l = c.m_f + lambdas[i] * c.m_g;
        let mu_d = c.beta * c.beta / (4.0 * c.r_bound * c.r_bound * m_l);
        let lhs = -g_vals[i];
        let rhs = 0.5 * mu_d * (lambdas[i] - lambda_star);
        if lhs < rhs - 1e-9 {
            depth_ok = false;
            failures.push(format!(
                "-g(x_lambda) = {lhs} below the local-concavity bound {rhs} at lambda = {}",
                lambdas[i]
            ));
        }
    }

    Ok(RegularityReport {
        lambda_star,
        grid_lo: lambda_lo,
        grid_hi: lambda_hi,
        grid_points,
        envelope,
        max_slope,
        min_slope,
        smoothness_ok,
        concavity_ok,
        curvature_ok,
        depth_ok,
        failures,
    })
}

/// Interior depth of the proximally regularized constraint
/// `-min_x (g(x) + rho_g/2 ||x - center||^2)`, by exact gradient descent.
/// Diagnostic counterpart of the runtime proxy `-g_hat(x_{k-1})`.
pub fn subproblem_depth(spec: &ProblemSpec, center: &[f64], rho_g: f64, tol: f64) -> Result<f64> {
    let c = &spec.constants;
    // curvature lower bound of the raw constraint: its declared strong
    // convexity, or -M_g when non-convex with none declared
    let g_curv_lb = if c.convexity == ConvexityClass::NonConvex && c.mu_g == 0.0 {
        -c.m_g
    } else {
        c.mu_g
    };
    let mu = rho_g + g_curv_lb;
    if mu <= 0.0 {
        return Err(Error::Input(
            "regularized constraint is not strongly convex".into(),
        ));
    }
    let m = rho_g + c.m_g;
    let gamma = 1.0 / m;
    let grad_tol = (2.0 * mu * tol).sqrt().max(1e-12);
    let mut x = center.to_vec();
    for _ in 0..1_000_000 {
        let (_, g) = spec.eval_true(&x)?;
        let grad: Vec<f64> = g
            .gradient
            .iter()
            .zip(x.iter().zip(center))
            .map(|(gi, (xi, ci))| gi + rho_g * (xi - ci))
            .collect();
        if norm(&grad) <= grad_tol {
            let val = g.value + 0.5 * rho_g * dist(&x, center).powi(2);
            return Ok(-val);
        }
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi -= gamma * gi;
        }
    }
    Err(Error::Input("subproblem depth solve did not converge".into()))
}

/// Largest relative error between analytic gradients and central finite
/// differences of the values, over points sampled near the starting point
/// (which is interior for every benchmark).
pub fn gradient_consistency(spec: &ProblemSpec, points: usize, seed: u64) -> Result<f64> {
    use rand::Rng;
    let mut rng = crate::run_rng(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x: Vec<f64> = spec
            .constants
            .x_start
            .iter()
            .map(|v| v + rng.random_range(-0.05..0.05))
            .collect();
        let (f, g) = spec.eval_true(&x)?;
        for k in 0..spec.dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let (fp, gp) = spec.eval_true(&xp)?;
            let (fm, gm) = spec.eval_true(&xm)?;
            for (pair, vp, vm) in [(&f, fp.value, fm.value), (&g, gp.value, gm.value)] {
                let fd = (vp - vm) / (2.0 * h);
                let scale = pair.gradient[k].abs().max(1.0);
                worst = worst.max((fd - pair.gradient[k]).abs() / scale);
            }
        }
    }
    Ok(worst)
}

/// Outcome of replaying a run against analytic ground truth.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditReport {
    /// Total oracle calls (sum of per-record sample counts).
    pub total_queries: u64,
    /// Ledger rows whose true constraint value is positive.
    pub violations: u64,
    /// Largest true constraint value over all queried points.
    pub worst_g: f64,
    /// Multiplier non-increasing across the recorded rounds (checked for
    /// dual-loop traces; vacuously true otherwise).
    pub lambda_monotone: bool,
    /// Queries of round `t` outside the round-`t` safety ball.
    pub safety_ball_breaches: u64,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Replay `ledger` against the true constraint of `spec` and check the
/// trace invariants. The trace and ledger must come from the same run.
pub fn audit_trace(trace: &RunTrace, ledger: &QueryLedger, spec: &ProblemSpec) -> Result<AuditReport> {
    if ledger.total_samples() != trace.total_oracle_calls {
        return Err(Error::Mismatch(format!(
            "ledger reports {} calls, trace reports {}",
            ledger.total_samples(),
            trace.total_oracle_calls
        )));
    }
    let mut violations = 0u64;
    let mut worst_g = f64::NEG_INFINITY;
    for rec in ledger.records() {
        let g = spec.eval_true(&rec.x)?.1.value;
        worst_g = worst_g.max(g);
        if g > 1e-12 {
            violations += 1;
        }
    }
    if ledger.is_empty() {
        worst_g = f64::NAN;
    }

    let dual_loop = matches!(trace.config.algo, Algo::Scsa | Algo::Convex);
    let mut lambda_monotone = true;
    if dual_loop {
        let mut prev = f64::INFINITY;
        for r in &trace.records {
            if r.lambda > prev {
                lambda_monotone = false;
            }
            prev = r.lambda;
        }
        if trace.final_lambda > prev {
            lambda_monotone = false;
        }
    }

    // Ball containment: queries issued during round t (the window ending at
    // the round's cumulative count) must lie in the round's safety ball.
    // Finite-difference probes may poke out by the probe step.
    let mut safety_ball_breaches = 0u64;
    if dual_loop {
        let probe_tol = trace.config.fd_h.unwrap_or(0.0) + 1e-9;
        let mut window_start = trace.preliminary_calls;
        let mut consumed = 0u64;
        let mut rec_iter = ledger.records().iter().peekable();
        for state in &trace.records {
            // skip records before this window
            while let Some(r) = rec_iter.peek() {
                if consumed + r.samples <= window_start {
                    consumed += r.samples;
                    rec_iter.next();
                } else {
                    break;
                }
            }
            while let Some(r) = rec_iter.peek() {
                if consumed >= state.cumulative_calls {
                    break;
                }
                if state.safety_radius > 0.0
                    && dist(&r.x, &state.x) > state.safety_radius + probe_tol
                {
                    safety_ball_breaches += 1;
                }
                consumed += r.samples;
                rec_iter.next();
            }
            window_start = state.cumulative_calls;
        }
    }

    Ok(AuditReport {
        total_queries: ledger.total_samples(),
        violations,
        worst_g,
        lambda_monotone,
        safety_ball_breaches,
    })
}
