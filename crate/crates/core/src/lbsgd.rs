//! Simplified log-barrier SGD baseline.
//!
//! Stochastic gradient descent on the barrier surrogate
//! `f(x) - barrier_eta ln(-g(x))`, with the step capped so a single move
//! cannot cross the boundary under the constraint's Lipschitz bound. This
//! is a deliberately simplified stand-in for the log-barrier comparator
//! used in benchmark comparisons and is labeled `lbsgd-simplified` in every
//! output; it shares the confidence-bonus constraint estimator and the
//! trace format with the dual solver so call counts compare fairly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::oracle::{estimate_constraint_ucb, ucb_batch_size, QueryOracle};
use crate::problem::ProblemConstants;
use crate::scsa::{DualState, RunOutcome};
use crate::RunRng;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LbsgdConfig {
    /// Barrier weight.
    pub barrier_eta: f64,
    /// Fixed step size before the safety cap.
    pub step: f64,
    pub delta: f64,
    pub max_oracle_calls: u64,
    /// Boundary proximity below which the run stops early.
    pub depth_floor: f64,
    /// Re-estimate the constraint every this many gradient steps.
    pub estimate_every: u64,
}

impl LbsgdConfig {
    pub fn defaults(max_oracle_calls: u64) -> Self {
        Self {
            barrier_eta: 0.1,
            step: 0.25,
            delta: 0.01,
            max_oracle_calls,
            depth_floor: 1e-6,
            estimate_every: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbsgdResult {
    pub x: Vec<f64>,
    pub outcome: RunOutcome,
    pub states: Vec<DualState>,
}

/// Run the baseline. Trace records reuse the dual-state layout with the
/// multiplier column fixed at zero.
pub fn lbsgd_solve<O: QueryOracle>(
    consts: &ProblemConstants,
    oracle: &mut O,
    cfg: &LbsgdConfig,
    rng: &mut RunRng,
) -> Result<LbsgdResult> {
    if !(cfg.barrier_eta > 0.0 && cfg.step > 0.0) {
        return Err(Error::Input(
            "barrier weight and step size must be positive".into(),
        ));
    }
    if cfg.max_oracle_calls == 0 {
        return Err(Error::Input("budget must be positive".into()));
    }
    let calls0 = oracle.total_calls();
    let spent = |o: &O| o.total_calls() - calls0;
    let horizon = (cfg.max_oracle_calls / cfg.estimate_every.max(1)).max(1);
    let eps_floor = cfg.depth_floor.max(1e-9);

    let mut x = consts.x_start.clone();
    let mut states: Vec<DualState> = Vec::new();
    let mut outcome = RunOutcome::BudgetExceeded;
    let mut g_hat = -consts.alpha;
    let mut t = 0u64;
    'outer: loop {
        t += 1;
        // refresh the upper-confidence estimate at the current iterate
        let eps_t = ((-g_hat) / 4.0).max(eps_floor);
        let sigma = oracle.value_noise_std();
        let n_needed = ucb_batch_size(sigma, eps_t, horizon, cfg.delta);
        if spent(oracle) + n_needed > cfg.max_oracle_calls {
            break;
        }
        let (g_new, _) = estimate_constraint_ucb(oracle, &x, eps_t, horizon, cfg.delta, rng)?;
        g_hat = g_new;
        if g_hat >= -cfg.depth_floor {
            // barrier undefined this close to the boundary
            outcome = RunOutcome::SafetyAbort;
            states.push(state_record(t, &x, g_hat, &cfg, 0.0, spent(oracle)));
            break;
        }
        let radius = -g_hat / (2.0 * consts.l_g);
        // all steps of this window stay inside the ball certified at the
        // estimation point
        let anchor = crate::inner::Ball::new(x.clone(), radius)?;

        for _ in 0..cfg.estimate_every.max(1) {
            if spent(oracle) + oracle.query_cost() > cfg.max_oracle_calls {
                states.push(state_record(t, &x, g_hat, &cfg, radius, spent(oracle)));
                break 'outer;
            }
            let s = oracle.query(&x, rng);
            // barrier-surrogate gradient with the certified denominator
            let scale = cfg.barrier_eta / (-g_hat);
            let grad: Vec<f64> = s
                .f_grad
                .iter()
                .zip(&s.g_grad)
                .map(|(a, b)| a + scale * b)
                .collect();
            let gn = norm(&grad);
            if gn == 0.0 {
                continue;
            }
            // a single move cannot exceed the certified radius either
            let gamma = cfg.step.min(radius / gn);
            let candidate: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - gamma * g).collect();
            x = crate::inner::project_ball(&candidate, &anchor);
        }
        states.push(state_record(t, &x, g_hat, &cfg, radius, spent(oracle)));
        if spent(oracle) >= cfg.max_oracle_calls {
            break;
        }
    }
    Ok(LbsgdResult {
        x,
        outcome,
        states,
    })
}

fn state_record(
    t: u64,
    x: &[f64],
    g_hat: f64,
    cfg: &LbsgdConfig,
    radius: f64,
    cumulative_calls: u64,
) -> DualState {
    DualState {
        t,
        x: x.to_vec(),
        lambda: 0.0,
        g_hat,
        eta: cfg.barrier_eta,
        eps: (-g_hat / 4.0).max(cfg.depth_floor),
        safety_radius: radius,
        cumulative_calls,
    }
}
