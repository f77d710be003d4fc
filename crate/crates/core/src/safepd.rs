//! Convex wrapper and the non-convex outer loop.
//!
//! `convex_solve` regularizes a merely convex objective into a strongly
//! convex one around the starting point and hands off to the dual-ascent
//! solver. `safepd_solve` handles non-convex problems with a moving
//! proximal center: each round solves the regularized subproblem
//! `min f + rho_f/2 ||x - c||^2 s.t. g + rho_g/2 ||x - c||^2 <= 0` to an
//! approximate KKT point with a warm-started multiplier that keeps the
//! descent initialization feasible, then recenters. Since the proximal term
//! is non-negative, feasibility for the regularized constraint implies
//! feasibility for the original one at every query.

use std::sync::Arc;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner::{descent_msgd, StopReason};
use crate::linalg::dist;
use crate::oracle::{estimate_constraint_ucb, ucb_batch_size, ProxOracle, QueryOracle};
use crate::problem::{ConvexityClass, EvalFn, ProblemConstants, ProblemSpec};
use crate::scsa::{scsa_solve_with_init, RunOutcome, ScsaConfig, ScsaInit};
use crate::RunRng;

/// Default cap on outer proximal rounds.
pub const OUTER_ROUND_CAP: u64 = 1000;

/// Horizon used inside the union bound of the outer loop's own constraint
/// estimates.
const OUTER_UCB_HORIZON: u64 = 1000;

/// One proximal round record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OuterState {
    pub k: u64,
    pub x: Vec<f64>,
    /// Multiplier returned by the round's subproblem solve.
    pub lambda: f64,
    /// Warm-started multiplier the round began with.
    pub lambda_check: f64,
    /// Primal accuracy reached by the subproblem solve.
    pub eta: f64,
    /// Accuracy of the round's descent initialization.
    pub eta_check: f64,
    /// Constraint estimate at the new center (drives the next warm start).
    pub g_hat: f64,
    pub step_norm: f64,
    pub cumulative_calls: u64,
}

/// Analytic view of one proximal subproblem together with its derived
/// constants; used by the verification oracles and tests. The solver side
/// works from [`prox_constants`] plus a [`ProxOracle`] instead.
#[derive(Clone)]
pub struct ProxSubproblem {
    pub spec: ProblemSpec,
    pub center: Vec<f64>,
    pub rho_f: f64,
    pub rho_g: f64,
}

/// Curvature lower bounds of the raw maps implied by the declared
/// constants: declared strong convexity, or minus the smoothness bound for
/// the non-convex class.
fn curvature_bounds(c: &ProblemConstants) -> (f64, f64) {
    match c.convexity {
        ConvexityClass::NonConvex => {
            let g_lb = if c.mu_g > 0.0 { c.mu_g } else { -c.m_g };
            (-c.m_f, g_lb)
        }
        _ => (c.mu_f, c.mu_g),
    }
}

/// Solver-visible constants of the proximal subproblem centered at a point
/// of interior depth `depth` (`-g` at the center).
pub fn prox_constants(
    base: &ProblemConstants,
    center: &[f64],
    rho_f: f64,
    rho_g: f64,
    depth: f64,
) -> Result<ProblemConstants> {
    if !(rho_f > base.m_f && rho_g > base.m_g) {
        return Err(Error::Input(
            "proximal weights must exceed the smoothness constants".into(),
        ));
    }
    if !(depth > 0.0) {
        return Err(Error::Input(
            "subproblem center must be strictly feasible".into(),
        ));
    }
    let (f_curv, g_curv) = curvature_bounds(base);
    let mu_f = rho_f + f_curv;
    let mu_g = rho_g + g_curv;
    // feasible-set diameter of the subproblem: R_k^2 <= 8 beta_k / mu_g
    let r_k = (8.0 * depth / mu_g).sqrt();
    Ok(ProblemConstants {
        dim: base.dim,
        mu_f,
        mu_g,
        m_f: rho_f + base.m_f,
        m_g: rho_g + base.m_g,
        l_g: base.l_g + rho_g * r_k,
        alpha: depth,
        beta: depth,
        delta_f: base.delta_f + 0.5 * rho_f * r_k * r_k,
        r_bound: r_k,
        g_f: base.g_f + rho_f * r_k,
        g_g: base.g_g + rho_g * r_k,
        x_start: center.to_vec(),
        convexity: ConvexityClass::StronglyConvex,
    })
}

/// Full analytic view of the proximal subproblem (maps with the proximal
/// terms added, constants from [`prox_constants`] with the exact depth at
/// the center).
pub fn build_subproblem(
    spec: &ProblemSpec,
    center: &[f64],
    rho_f: f64,
    rho_g: f64,
) -> Result<ProxSubproblem> {
    let depth = -spec.eval_true(center)?.1.value;
    let constants = prox_constants(&spec.constants, center, rho_f, rho_g, depth)?;
    let center_f = center.to_vec();
    let base_f = spec.objective_fn();
    let objective: EvalFn = Arc::new(move |x: &[f64]| {
        let (mut v, mut g) = base_f(x);
        for k in 0..x.len() {
            let d = x[k] - center_f[k];
            v += 0.5 * rho_f * d * d;
            g[k] += rho_f * d;
        }
        (v, g)
    });
    let center_g = center.to_vec();
    let base_g = spec.constraint_fn();
    let constraint: EvalFn = Arc::new(move |x: &[f64]| {
        let (mut v, mut g) = base_g(x);
        for k in 0..x.len() {
            let d = x[k] - center_g[k];
            v += 0.5 * rho_g * d * d;
            g[k] += rho_g * d;
        }
        (v, g)
    });
    let sub = ProblemSpec::new(
        format!("{}-prox", spec.name),
        objective,
        constraint,
        constants,
        None,
    )?;
    Ok(ProxSubproblem {
        spec: sub,
        center: center.to_vec(),
        rho_f,
        rho_g,
    })
}

/// Warm-started multiplier for the next proximal round:
/// `2 lambda_k + rho_f/rho_g + (eta_k + eta_check_next) / (-g_hat_k)`.
/// Large enough that descent on the next subproblem Lagrangian keeps its
/// iterates feasible.
pub fn warm_start_dual(
    lambda_k: f64,
    rho_f: f64,
    rho_g: f64,
    eta_k: f64,
    eta_check_next: f64,
    g_hat_k: f64,
) -> Result<f64> {
    if g_hat_k >= 0.0 {
        return Err(Error::Safety(format!(
            "warm start undefined at non-negative constraint estimate {g_hat_k}"
        )));
    }
    Ok(2.0 * lambda_k + rho_f / rho_g + (eta_k + eta_check_next) / (-g_hat_k))
}

/// Outer stopping rule: the recentering step is small enough that the
/// subproblem KKT point doubles as a KKT point of the original problem.
pub fn stopping_check(
    step_norm: f64,
    eps_p: f64,
    eps_c: f64,
    lambda_check_k: f64,
    rho_f: f64,
    rho_g: f64,
) -> bool {
    let threshold = (eps_p / (rho_f + lambda_check_k * rho_g))
        .min((2.0 * eps_c / (lambda_check_k * rho_g)).sqrt());
    step_norm <= threshold
}

#[derive(Clone, Debug)]
pub struct SafepdSolveResult {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub outcome: RunOutcome,
    pub rounds: Vec<OuterState>,
}

/// Non-convex safe solver: proximal outer loop around the dual-ascent
/// subproblem solver.
pub fn safepd_solve<O: QueryOracle>(
    consts: &ProblemConstants,
    oracle: &mut O,
    cfg: &ScsaConfig,
    rho_f: f64,
    rho_g: f64,
    rng: &mut RunRng,
) -> Result<SafepdSolveResult> {
    cfg.validate()?;
    if !(rho_f >= 2.0 * consts.m_f && rho_g >= 2.0 * consts.m_g) {
        return Err(Error::Input(
            "proximal weights must be at least twice the smoothness constants".into(),
        ));
    }
    let calls0 = oracle.total_calls();
    let spent = |o: &O| o.total_calls() - calls0;
    let eps_floor = cfg.eps_floor.unwrap_or(cfg.eps_c / 8.0);

    // depth and initial multiplier at the starting point
    let eps0 = (consts.alpha / 8.0).max(eps_floor);
    let (mut g_hat, _) = estimate_constraint_ucb(
        oracle,
        &consts.x_start.clone(),
        eps0,
        OUTER_UCB_HORIZON,
        cfg.delta,
        rng,
    )?;
    if g_hat >= 0.0 {
        return Err(Error::Safety(
            "starting point measured infeasible at initialization".into(),
        ));
    }
    let mut lambda_check = consts.delta_f / (-g_hat);
    let mut x = consts.x_start.clone();
    let mut lambda = lambda_check;
    let mut rounds: Vec<OuterState> = Vec::new();
    let mut outcome = RunOutcome::HorizonReached;

    for k in 1..=OUTER_ROUND_CAP {
        let depth = -g_hat;
        let sub = prox_constants(consts, &x, rho_f, rho_g, depth)?;
        // descent initialization accuracy, tightened by the same factor 4
        // as the strongly convex solver's preliminary phase
        let eta_check = sub.mu_f * depth * depth / (32.0 * sub.l_g * sub.l_g);
        let remaining = cfg.max_oracle_calls.saturating_sub(spent(oracle));
        let mut prox = ProxOracle::new(oracle, x.clone(), rho_f, rho_g);
        let init_rep =
            descent_msgd(&mut prox, lambda_check, &x.clone(), eta_check, &sub, remaining, rng)?;
        if init_rep.terminated_by == StopReason::Budget {
            outcome = RunOutcome::BudgetExceeded;
            x = init_rep.x_out;
            break;
        }
        let sub_budget = cfg
            .max_oracle_calls
            .saturating_sub(prox.total_calls() - calls0);
        let sub_cfg = ScsaConfig {
            eps_p: cfg.eps_p,
            eps_c: cfg.eps_c,
            delta: cfg.delta,
            max_oracle_calls: sub_budget,
            eps_floor: None,
        };
        let init = ScsaInit {
            x: init_rep.x_out,
            lambda: lambda_check,
            depth_seed: depth,
        };
        let sub_result = scsa_solve_with_init(&sub, &mut prox, &sub_cfg, rng, Some(init))?;
        let prev_center = x.clone();
        let x_k = sub_result.x.clone();
        let lambda_k = sub_result.lambda;
        let eta_k = sub_result.final_eta;
        let step_norm = dist(&x_k, &prev_center);
        debug!(
            "round {k}: lambda_check {lambda_check:.4}, lambda {lambda_k:.4}, step {step_norm:.3e}, \
             sub outcome {:?}",
            sub_result.outcome
        );
        x = x_k;
        lambda = lambda_k;
        let stopping = stopping_check(step_norm, cfg.eps_p, cfg.eps_c, lambda_check, rho_f, rho_g);

        // fresh estimate at the new center for the next warm start
        let eps_k = (depth / 8.0).max(eps_floor);
        let sigma = oracle.value_noise_std();
        let n_needed = ucb_batch_size(sigma, eps_k, OUTER_UCB_HORIZON, cfg.delta);
        if spent(oracle) + n_needed > cfg.max_oracle_calls {
            rounds.push(OuterState {
                k,
                x: x.clone(),
                lambda: lambda_k,
                lambda_check,
                eta: eta_k,
                eta_check,
                g_hat,
                step_norm,
                cumulative_calls: spent(oracle),
            });
            outcome = RunOutcome::BudgetExceeded;
            break;
        }
        let (g_hat_new, _) =
            estimate_constraint_ucb(oracle, &x, eps_k, OUTER_UCB_HORIZON, cfg.delta, rng)?;
        rounds.push(OuterState {
            k,
            x: x.clone(),
            lambda: lambda_k,
            lambda_check,
            eta: eta_k,
            eta_check,
            g_hat: g_hat_new,
            step_norm,
            cumulative_calls: spent(oracle),
        });
        if stopping {
            outcome = RunOutcome::Converged;
            break;
        }
        if sub_result.outcome == RunOutcome::BudgetExceeded
            || spent(oracle) >= cfg.max_oracle_calls
        {
            outcome = RunOutcome::BudgetExceeded;
            break;
        }
        if g_hat_new >= 0.0 {
            outcome = RunOutcome::SafetyAbort;
            break;
        }
        g_hat = g_hat_new;
        let depth_next = -g_hat_new;
        let sub_next = prox_constants(consts, &x, rho_f, rho_g, depth_next)?;
        let eta_check_next =
            sub_next.mu_f * depth_next * depth_next / (32.0 * sub_next.l_g * sub_next.l_g);
        lambda_check = warm_start_dual(lambda_k, rho_f, rho_g, eta_k, eta_check_next, g_hat_new)?;
    }

    Ok(SafepdSolveResult {
        x,
        lambda,
        outcome,
        rounds,
    })
}

/// Constants of the statically regularized problem the convex wrapper
/// solves: `f + eps/(2 R^2) ||x - x_start||^2` under the same constraint.
pub fn convex_regularization(base: &ProblemConstants, eps: f64) -> Result<ProblemConstants> {
    if !(eps > 0.0) {
        return Err(Error::Input("eps must be positive".into()));
    }
    if base.convexity == ConvexityClass::NonConvex {
        return Err(Error::Input(
            "the convex wrapper needs a convex problem".into(),
        ));
    }
    let mu = eps / (base.r_bound * base.r_bound);
    let mut c = base.clone();
    c.mu_f = base.mu_f + mu;
    c.m_f += mu;
    // the regularizer adds at most mu/2 (2R)^2 = 2 eps over the region of
    // interest and mu * 2R to gradient norms
    c.delta_f += 2.0 * eps;
    c.g_f += 2.0 * mu * base.r_bound;
    c.convexity = ConvexityClass::StronglyConvex;
    Ok(c)
}

#[derive(Clone, Debug)]
pub struct ConvexSolveResult {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub outcome: RunOutcome,
    pub states: Vec<crate::scsa::DualState>,
    pub preliminary_calls: u64,
    pub final_eta: f64,
    /// Strong-convexity modulus the wrapper added.
    pub regularization: f64,
}

/// Convex wrapper: solve the regularized problem with complementarity
/// target `eps/4` so that the regularized objective gap is at most `eps/2`,
/// which together with the `mu/2 R^2 = eps/2` regularization error yields
/// an `eps`-accurate feasible solution of the original problem.
pub fn convex_solve<O: QueryOracle>(
    consts: &ProblemConstants,
    oracle: &mut O,
    cfg: &ScsaConfig,
    eps: f64,
    rng: &mut RunRng,
) -> Result<ConvexSolveResult> {
    let reg = convex_regularization(consts, eps)?;
    let mu = eps / (consts.r_bound * consts.r_bound);
    let sub_cfg = ScsaConfig {
        eps_p: cfg.eps_p,
        eps_c: 0.25 * eps,
        delta: cfg.delta,
        max_oracle_calls: cfg.max_oracle_calls,
        eps_floor: cfg.eps_floor,
    };
    let mut prox = ProxOracle::new(oracle, reg.x_start.clone(), mu, 0.0);
    let result = crate::scsa::scsa_solve(&reg, &mut prox, &sub_cfg, rng)?;
    Ok(ConvexSolveResult {
        x: result.x,
        lambda: result.lambda,
        outcome: result.outcome,
        states: result.states,
        preliminary_calls: result.preliminary_calls,
        final_eta: result.final_eta,
        regularization: mu,
    })
}
