//! Safe dual-ascent solver for strongly convex problems.
//!
//! The loop alternates a confidence-bounded constraint estimate at the
//! current iterate, a conservative dual gradient-ascent step whose size
//! keeps the next Lagrangian minimizer inside the current safety ball, and
//! a ball-restricted primal solve. Because the starting multiplier
//! dominates the optimal one and steps only shrink it, every dual iterate
//! corresponds to a feasible primal minimizer, and because the primal
//! solver projects onto the safety ball, every oracle query along the way
//! is feasible with high probability.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner::{descent_msgd, psgd_solve, Ball, StopReason};
use crate::linalg::norm;
use crate::oracle::{estimate_constraint_ucb, ucb_batch_size, QueryOracle};
use crate::problem::{ConvexityClass, ProblemConstants, ProblemSpec};
use crate::RunRng;

/// Targets and budget of one solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScsaConfig {
    /// Target Lagrangian-gradient accuracy.
    pub eps_p: f64,
    /// Target complementarity-slackness accuracy.
    pub eps_c: f64,
    /// Confidence level for the constraint estimates.
    pub delta: f64,
    /// Total oracle-call budget.
    pub max_oracle_calls: u64,
    /// Minimum constraint-estimation accuracy; defaults to
    /// `eps_c / (8 lambda_check)`, which keeps minibatches finite near the
    /// stopping region without affecting the stopping test.
    pub eps_floor: Option<f64>,
}

impl ScsaConfig {
    pub fn new(eps_p: f64, eps_c: f64, delta: f64, max_oracle_calls: u64) -> Self {
        Self {
            eps_p,
            eps_c,
            delta,
            max_oracle_calls,
            eps_floor: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_p > 0.0 && self.eps_c > 0.0) {
            return Err(Error::Input("eps_p and eps_c must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Input("delta must lie in (0, 1)".into()));
        }
        if self.max_oracle_calls == 0 {
            return Err(Error::Input("oracle budget must be positive".into()));
        }
        if let Some(f) = self.eps_floor {
            if !(f > 0.0) {
                return Err(Error::Input("eps_floor must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One outer-iteration record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualState {
    pub t: u64,
    /// Iterate at the start of the round (the safety-ball center).
    pub x: Vec<f64>,
    /// Multiplier at the start of the round.
    pub lambda: f64,
    /// Upper-confidence constraint estimate at `x`.
    pub g_hat: f64,
    /// Primal accuracy requested from the inner solve of this round.
    pub eta: f64,
    /// Constraint-estimation accuracy of this round.
    pub eps: f64,
    /// Safety-ball radius of this round.
    pub safety_radius: f64,
    /// Oracle calls consumed by the run up to the end of this round.
    pub cumulative_calls: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunOutcome {
    Converged,
    HorizonReached,
    BudgetExceeded,
    /// A certified-safe estimate came back non-negative; the run aborted.
    SafetyAbort,
}

/// Approximate KKT residuals, evaluated with analytic ground truth.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KKTResidual {
    /// `|| grad f(x) + lambda grad g(x) ||`
    pub grad_norm: f64,
    /// `-g(x) * lambda`
    pub comp_slack: f64,
    pub lambda_nonneg: bool,
    pub feasible: bool,
}

#[derive(Clone, Debug)]
pub struct ScsaSolveResult {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub outcome: RunOutcome,
    pub states: Vec<DualState>,
    /// Oracle calls consumed before the first dual round (the safe
    /// initialization); audit windows start here.
    pub preliminary_calls: u64,
    /// Primal accuracy of the last inner solve.
    pub final_eta: f64,
}

/// Warm start for a solve embedded in an outer loop: the preliminary
/// descent phase is skipped and the loop starts directly from `(x, lambda)`.
#[derive(Clone, Debug)]
pub struct ScsaInit {
    pub x: Vec<f64>,
    pub lambda: f64,
    /// Stand-in for `-g_hat` of the previous round when sizing the first
    /// constraint estimate (the interior depth of the start).
    pub depth_seed: f64,
}

/// Safe initial multiplier `delta_f / alpha`, which dominates the optimal
/// one.
pub fn initial_dual(delta_f: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Input("alpha must be positive".into()));
    }
    if delta_f < 0.0 {
        return Err(Error::Input("delta_f must be non-negative".into()));
    }
    Ok(delta_f / alpha)
}

/// Dual gradient-ascent step `max(lambda + gamma g_hat, 0)` with the
/// safety-preserving step size `gamma = mu_f / (8 L_g^2)`. The estimate
/// must certify feasibility (`g_hat <= 0`), otherwise the certified region
/// was wrong and the run must abort.
pub fn dual_step(lambda_t: f64, g_hat_t: f64, mu_f: f64, l_g: f64) -> Result<f64> {
    if g_hat_t > 0.0 {
        return Err(Error::Safety(format!(
            "constraint estimate {g_hat_t} is positive at a certified-safe iterate"
        )));
    }
    let gamma = mu_f / (8.0 * l_g * l_g);
    Ok((lambda_t + gamma * g_hat_t).max(0.0))
}

/// Radius of the certified safety ball around an iterate with constraint
/// estimate `g_hat < 0`. The conservative factor-2 variant is used: every
/// point of the ball satisfies `g <= g_hat / 2` with high probability.
pub fn safety_radius(g_hat_t: f64, l_g: f64) -> Result<f64> {
    if g_hat_t >= 0.0 {
        return Err(Error::Safety(format!(
            "safety ball undefined for non-negative estimate {g_hat_t}"
        )));
    }
    Ok(-g_hat_t / (2.0 * l_g))
}

/// Primal accuracy of a running (non-terminal) round.
pub fn eta_running(g_hat_t: f64, consts: &ProblemConstants) -> f64 {
    consts.mu_f * g_hat_t * g_hat_t / (128.0 * consts.l_g * consts.l_g)
}

/// Primal accuracy of the terminal round.
pub fn eta_terminal(lambda_next: f64, cfg: &ScsaConfig, consts: &ProblemConstants) -> f64 {
    let m_l = consts.m_f + lambda_next * consts.m_g;
    (consts.mu_f * cfg.eps_p * cfg.eps_p / (m_l * m_l)).min(cfg.eps_c)
}

/// Primal-accuracy schedule: the running branch while
/// `-g_hat lambda_next > eps_c`, the terminal branch afterwards.
pub fn eta_schedule(
    g_hat_t: f64,
    lambda_next: f64,
    cfg: &ScsaConfig,
    consts: &ProblemConstants,
) -> f64 {
    if -g_hat_t * lambda_next > cfg.eps_c {
        eta_running(g_hat_t, consts)
    } else {
        eta_terminal(lambda_next, cfg, consts)
    }
}

/// Constraint-estimation accuracy `max(-g_hat_prev / 8, eps_floor)`. The
/// first round passes `-alpha` for `g_hat_prev`.
pub fn eps_schedule(g_hat_prev: f64, eps_floor: f64) -> f64 {
    (-g_hat_prev / 8.0).max(eps_floor)
}

/// The two terms of the outer-iteration bound: the constant-progress phase
/// `8 L_g^2 lambda_check / (beta mu_f)`, and the locally linear phase with
/// the local dual concavity replaced by its lower bound
/// `beta^2 / (4 R^2 (M_f + lambda_check M_g))` and the estimate bound
/// proxied by `2 beta` inside the logarithm.
pub fn horizon_terms(
    consts: &ProblemConstants,
    lambda_check: f64,
    eps_c: f64,
) -> Result<(f64, f64)> {
    if consts.convexity != ConvexityClass::StronglyConvex || !(consts.mu_f > 0.0) {
        return Err(Error::Input(
            "outer-iteration bound needs a strongly convex problem".into(),
        ));
    }
    let l2 = consts.l_g * consts.l_g;
    let phase1 = 8.0 * l2 * lambda_check / (consts.beta * consts.mu_f);
    let m_l = consts.m_f + lambda_check * consts.m_g;
    let mu_d = consts.beta * consts.beta / (4.0 * consts.r_bound * consts.r_bound * m_l);
    let g_bar = 2.0 * consts.beta;
    let log_arg =
        (g_bar * lambda_check).max(4.0 * l2 * lambda_check * lambda_check / consts.mu_f) / eps_c;
    let phase2 = 16.0 * l2 / (mu_d * consts.mu_f) * log_arg.max(1.0).ln();
    Ok((phase1, phase2))
}

/// Integer outer-iteration cap, also used as the horizon inside the
/// minibatch union bound.
pub fn horizon_bound(
    consts: &ProblemConstants,
    lambda_check: f64,
    cfg: &ScsaConfig,
) -> Result<u64> {
    let (p1, p2) = horizon_terms(consts, lambda_check, cfg.eps_c)?;
    Ok((p1 + p2).ceil().max(1.0) as u64)
}

/// Exact KKT residuals of a candidate pair, via analytic ground truth.
pub fn kkt_residual(spec: &ProblemSpec, x: &[f64], lambda: f64) -> Result<KKTResidual> {
    let (f, g) = spec.eval_true(x)?;
    let lag_grad: Vec<f64> = f
        .gradient
        .iter()
        .zip(&g.gradient)
        .map(|(a, b)| a + lambda * b)
        .collect();
    Ok(KKTResidual {
        grad_norm: norm(&lag_grad),
        comp_slack: -g.value * lambda,
        lambda_nonneg: lambda >= 0.0,
        feasible: g.value <= 0.0,
    })
}

pub fn scsa_solve<O: QueryOracle>(
    consts: &ProblemConstants,
    oracle: &mut O,
    cfg: &ScsaConfig,
    rng: &mut RunRng,
) -> Result<ScsaSolveResult> {
    scsa_solve_with_init(consts, oracle, cfg, rng, None)
}

/// Run the dual loop. With `init` given, the preliminary descent phase is
/// skipped and the loop starts from the provided primal-dual pair (used by
/// the non-convex outer loop, which warm-starts every subproblem).
pub fn scsa_solve_with_init<O: QueryOracle>(
    consts: &ProblemConstants,
    oracle: &mut O,
    cfg: &ScsaConfig,
    rng: &mut RunRng,
    init: Option<ScsaInit>,
) -> Result<ScsaSolveResult> {
    cfg.validate()?;
    if consts.convexity != ConvexityClass::StronglyConvex || !(consts.mu_f > 0.0) {
        return Err(Error::Input(
            "scsa_solve needs a strongly convex problem".into(),
        ));
    }
    let calls0 = oracle.total_calls();
    let spent = |o: &O| o.total_calls() - calls0;
    let l2 = consts.l_g * consts.l_g;

    let (mut x, lambda_check, depth_seed) = match init {
        Some(init) => (init.x, init.lambda, init.depth_seed),
        None => {
            let lambda_check = initial_dual(consts.delta_f, consts.alpha)?;
            // Tightened by a factor 4 over the minimum requirement
            // mu_f alpha^2 / (8 L_g^2): the extra margin keeps the first
            // safe-transit distance well inside the first safety ball.
            let eta_check = consts.mu_f * consts.alpha * consts.alpha / (32.0 * l2);
            let rep = descent_msgd(
                oracle,
                lambda_check,
                &consts.x_start.clone(),
                eta_check,
                consts,
                cfg.max_oracle_calls,
                rng,
            )?;
            if rep.terminated_by == StopReason::Budget {
                return Ok(ScsaSolveResult {
                    x: rep.x_out,
                    lambda: lambda_check,
                    outcome: RunOutcome::BudgetExceeded,
                    states: Vec::new(),
                    preliminary_calls: spent(oracle),
                    final_eta: eta_check,
                });
            }
            (rep.x_out, lambda_check, consts.alpha)
        }
    };
    let preliminary_calls = spent(oracle);
    let t_max = horizon_bound(consts, lambda_check, cfg)?;
    let eps_floor = cfg
        .eps_floor
        .unwrap_or(cfg.eps_c / (8.0 * lambda_check.max(1e-12)));

    let mut lambda = lambda_check;
    let mut states: Vec<DualState> = Vec::new();
    let mut g_hat_prev = -depth_seed;
    let mut final_eta = 0.0;
    let mut outcome = RunOutcome::HorizonReached;

    for t in 1..=t_max {
        let eps_t = eps_schedule(g_hat_prev, eps_floor);
        let sigma = oracle.value_noise_std();
        let n_needed = ucb_batch_size(sigma, eps_t, t_max, cfg.delta);
        if spent(oracle) + n_needed > cfg.max_oracle_calls {
            outcome = RunOutcome::BudgetExceeded;
            break;
        }
        let (g_hat, _n) = estimate_constraint_ucb(oracle, &x, eps_t, t_max, cfg.delta, rng)?;
        if g_hat >= 0.0 {
            warn!("round {t}: certified-safe iterate measured infeasible (g_hat = {g_hat})");
            states.push(DualState {
                t,
                x: x.clone(),
                lambda,
                g_hat,
                eta: 0.0,
                eps: eps_t,
                safety_radius: 0.0,
                cumulative_calls: spent(oracle),
            });
            outcome = RunOutcome::SafetyAbort;
            break;
        }
        let radius = safety_radius(g_hat, consts.l_g)?;
        let lambda_next = dual_step(lambda, g_hat, consts.mu_f, consts.l_g)?;
        let stopping = -g_hat * lambda_next <= cfg.eps_c || lambda_next == 0.0;
        let eta = if stopping {
            eta_terminal(lambda_next, cfg, consts)
        } else {
            eta_running(g_hat, consts)
        };
        let ball = Ball::new(x.clone(), radius)?;
        let remaining = cfg.max_oracle_calls.saturating_sub(spent(oracle));
        let rep = psgd_solve(oracle, lambda_next, &ball, &x, eta, consts, remaining, rng)?;
        debug!(
            "round {t}: lambda {lambda:.6} -> {lambda_next:.6}, g_hat {g_hat:.6}, \
             radius {radius:.6}, eta {eta:.3e}, inner {:?} in {} iters",
            rep.terminated_by, rep.iterations
        );
        states.push(DualState {
            t,
            x: x.clone(),
            lambda,
            g_hat,
            eta,
            eps: eps_t,
            safety_radius: radius,
            cumulative_calls: spent(oracle),
        });
        x = rep.x_out;
        lambda = lambda_next;
        g_hat_prev = g_hat;
        final_eta = eta;
        if stopping {
            // a terminal solve cut short by the budget did not certify its
            // accuracy target
            outcome = if rep.terminated_by == StopReason::Budget {
                RunOutcome::BudgetExceeded
            } else {
                RunOutcome::Converged
            };
            break;
        }
        if rep.terminated_by == StopReason::Budget || spent(oracle) >= cfg.max_oracle_calls {
            outcome = RunOutcome::BudgetExceeded;
            break;
        }
    }

    Ok(ScsaSolveResult {
        x,
        lambda,
        outcome,
        states,
        preliminary_calls,
        final_eta,
    })
}
