//! Feasible inner solvers for ball-constrained Lagrangian minimization and
//! for the descent-enforcing preliminary phase.
//!
//! `psgd_solve` minimizes `L(., lambda)` over a Euclidean ball to a target
//! suboptimality `eta`. With exact gradients it runs projected gradient
//! descent with a gradient-mapping certificate; with stochastic gradients it
//! runs projected SGD for an a-priori step count with suffix averaging. In
//! both modes every iterate stays inside the ball, which is what makes the
//! outer loop safe.
//!
//! `descent_msgd` is the unconstrained minibatch-SGD variant used for safe
//! initialization: it only accepts steps that do not increase the (noisily
//! measured) Lagrangian, doubling the minibatch until the gradient estimate
//! is trustworthy, so the true Lagrangian decreases along the trajectory and
//! level-set feasibility arguments apply.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, norm};
use crate::oracle::QueryOracle;
use crate::problem::ProblemConstants;
use crate::RunRng;

/// Euclidean ball `{ x : ||x - center|| <= radius }`.
#[derive(Clone, Debug)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::Input("ball radius must be non-negative".into()));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        dist(x, &self.center) <= self.radius + tol
    }
}

/// Project `x` onto the ball.
pub fn project_ball(x: &[f64], ball: &Ball) -> Vec<f64> {
    let d = dist(x, &ball.center);
    if d <= ball.radius {
        return x.to_vec();
    }
    if d == 0.0 {
        return ball.center.clone();
    }
    let scale = ball.radius / d;
    ball.center
        .iter()
        .zip(x)
        .map(|(c, xi)| c + scale * (xi - c))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// A gradient-norm certificate established the target suboptimality.
    GradientCriterion,
    /// The a-priori stochastic iteration schedule completed.
    IterationSchedule,
    /// The oracle budget ran out first; `x_out` is the best iterate found.
    Budget,
}

#[derive(Clone, Debug)]
pub struct InnerReport {
    pub x_out: Vec<f64>,
    pub oracle_calls: u64,
    pub iterations: u64,
    pub target_eta: f64,
    pub terminated_by: StopReason,
}

/// Minimize `L(., lambda)` over `ball` starting from `x_init`, to target
/// suboptimality `eta` on the ball-constrained problem.
///
/// Exact-gradient mode stops once the gradient mapping
/// `G(x) = M_L (x - P(x - grad L / M_L))` satisfies
/// `||G(x)|| <= sqrt(mu_L eta)`, which certifies the gap of the projected
/// step. Stochastic mode runs a step count combining the smooth
/// linear-convergence term with the variance term
/// `16 sigma_grad^2 / (mu_L eta)`, never exceeding the worst-case
/// non-smooth budget `2 G_hat^2 / (mu_L eta)` with
/// `G_hat = G_f + lambda G_g + (1 + lambda) sigma_hat`, and returns the
/// suffix average.
pub fn psgd_solve<O: QueryOracle>(
    oracle: &mut O,
    lambda: f64,
    ball: &Ball,
    x_init: &[f64],
    eta: f64,
    consts: &ProblemConstants,
    max_calls: u64,
    rng: &mut RunRng,
) -> Result<InnerReport> {
    if !(eta > 0.0) {
        return Err(Error::Input("eta must be positive".into()));
    }
    if !ball.contains(x_init, 1e-9) {
        return Err(Error::Input("x_init must lie in the ball".into()));
    }
    if lambda < 0.0 {
        return Err(Error::Input("lambda must be non-negative".into()));
    }
    let (mu_l, m_l) = consts.lagrangian_moduli(lambda);
    if !(mu_l > 0.0) {
        return Err(Error::Input(
            "Lagrangian is not strongly convex at this lambda".into(),
        ));
    }
    let calls_start = oracle.total_calls();
    let spent = |o: &O| o.total_calls() - calls_start;
    if max_calls < oracle.query_cost() {
        return Ok(InnerReport {
            x_out: project_ball(x_init, ball),
            oracle_calls: 0,
            iterations: 0,
            target_eta: eta,
            terminated_by: StopReason::Budget,
        });
    }

    if oracle.grad_noise_std() == 0.0 {
        // exact gradients: certified projected gradient descent
        let gamma = 1.0 / m_l;
        let gm_tol = (mu_l * eta).sqrt();
        let mut x = project_ball(x_init, ball);
        let mut iterations = 0u64;
        loop {
            let sample = oracle.query(&x, rng);
            let (_, grad) = sample.lagrangian(lambda);
            let stepped: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - gamma * g).collect();
            let next = project_ball(&stepped, ball);
            let gm = m_l * dist(&x, &next);
            if iterations == 0 {
                // zero-step certificate for the starting point itself
                if gm * gm / mu_l + gm * norm(&grad) / m_l <= eta {
                    return Ok(InnerReport {
                        x_out: x,
                        oracle_calls: spent(oracle),
                        iterations: 0,
                        target_eta: eta,
                        terminated_by: StopReason::GradientCriterion,
                    });
                }
            }
            if gm <= gm_tol {
                return Ok(InnerReport {
                    x_out: next,
                    oracle_calls: spent(oracle),
                    iterations: iterations + 1,
                    target_eta: eta,
                    terminated_by: StopReason::GradientCriterion,
                });
            }
            x = next;
            iterations += 1;
            if spent(oracle) + oracle.query_cost() > max_calls {
                return Ok(InnerReport {
                    x_out: x,
                    oracle_calls: spent(oracle),
                    iterations,
                    target_eta: eta,
                    terminated_by: StopReason::Budget,
                });
            }
        }
    }

    // stochastic gradients: a-priori schedule with suffix averaging
    let sigma_grad = (1.0 + lambda) * oracle.grad_noise_std();
    let kappa = m_l / mu_l;
    let d0 = (2.0 * ball.radius).max(dist(x_init, &ball.center));
    let n_exp = 4.0 * kappa * ((2.0 * m_l * d0 * d0 / eta).max(std::f64::consts::E)).ln();
    let n_var = 6.0 * sigma_grad * sigma_grad / (mu_l * eta);
    let g_hat = consts.g_f + lambda * consts.g_g + sigma_grad;
    let n_worst_case = 2.0 * g_hat * g_hat / (mu_l * eta);
    let schedule = ((n_exp + n_var).min(n_worst_case).ceil() as u64).max(1);

    let tau0 = (4.0 * kappa).ceil().max(1.0);
    let mut x = project_ball(x_init, ball);
    // suffix average over the trailing half of the steps actually taken
    // (bounded window), so a budget cut mid-schedule still averages
    let window = ((schedule / 2).max(1) as usize).min(65_536);
    let mut ring: std::collections::VecDeque<Vec<f64>> = std::collections::VecDeque::new();
    let mut iterations = 0u64;
    let mut reason = StopReason::IterationSchedule;
    for tau in 0..schedule {
        if spent(oracle) + oracle.query_cost() > max_calls {
            reason = StopReason::Budget;
            break;
        }
        let sample = oracle.query(&x, rng);
        let (_, grad) = sample.lagrangian(lambda);
        let gamma = (1.0 / (2.0 * m_l)).min(2.0 / (mu_l * (tau0 + tau as f64)));
        let stepped: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - gamma * g).collect();
        x = project_ball(&stepped, ball);
        iterations += 1;
        if ring.len() == window {
            ring.pop_front();
        }
        ring.push_back(x.clone());
    }
    let x_out = if ring.is_empty() {
        x
    } else {
        let take = ((iterations / 2).max(1) as usize).min(ring.len());
        let suffix = ring.iter().rev().take(take);
        let mut avg = vec![0.0; x.len()];
        for p in suffix {
            for (a, v) in avg.iter_mut().zip(p) {
                *a += v;
            }
        }
        avg.into_iter().map(|v| v / take as f64).collect()
    };
    Ok(InnerReport {
        x_out,
        oracle_calls: spent(oracle),
        iterations,
        target_eta: eta,
        terminated_by: reason,
    })
}

/// Running minibatch statistics at one point.
struct BatchEstimate {
    m: u64,
    l_sum: f64,
    grad_sum: Vec<f64>,
}

impl BatchEstimate {
    fn new(dim: usize) -> Self {
        Self {
            m: 0,
            l_sum: 0.0,
            grad_sum: vec![0.0; dim],
        }
    }

    fn add<O: QueryOracle>(
        &mut self,
        oracle: &mut O,
        x: &[f64],
        lambda: f64,
        k: u64,
        rng: &mut RunRng,
    ) {
        for _ in 0..k {
            let s = oracle.query(x, rng);
            let (lv, lg) = s.lagrangian(lambda);
            self.l_sum += lv;
            for (a, g) in self.grad_sum.iter_mut().zip(&lg) {
                *a += g;
            }
        }
        self.m += k;
    }

    fn l_mean(&self) -> f64 {
        self.l_sum / self.m as f64
    }

    fn grad_mean(&self) -> Vec<f64> {
        self.grad_sum.iter().map(|v| v / self.m as f64).collect()
    }
}

/// Descent-enforcing minibatch SGD on the unconstrained Lagrangian
/// `L(., lambda_check)`, for safe initialization.
///
/// Step size `1 / (M_f + lambda_check M_g)`; the minibatch doubles until the
/// gradient estimate's confidence radius is at most half its norm, and with
/// noisy values a step is accepted only when a fresh estimate at the
/// candidate does not exceed the current estimate by more than the combined
/// confidence radius. Terminates once
/// `||grad L|| <= sqrt(mu_L eta_check)` is certified, or on budget
/// exhaustion with the current iterate.
pub fn descent_msgd<O: QueryOracle>(
    oracle: &mut O,
    lambda_check: f64,
    x0: &[f64],
    eta_check: f64,
    consts: &ProblemConstants,
    max_calls: u64,
    rng: &mut RunRng,
) -> Result<InnerReport> {
    if !(eta_check > 0.0) {
        return Err(Error::Input("eta_check must be positive".into()));
    }
    if lambda_check < 0.0 {
        return Err(Error::Input("lambda_check must be non-negative".into()));
    }
    let (mu_l, m_l) = consts.lagrangian_moduli(lambda_check);
    if !(mu_l > 0.0) {
        return Err(Error::Input(
            "Lagrangian is not strongly convex at this lambda".into(),
        ));
    }
    let gamma = 1.0 / m_l;
    let tol = (mu_l * eta_check).sqrt();
    let sigma_g = (1.0 + lambda_check) * oracle.grad_noise_std();
    let sigma_v = (1.0 + lambda_check) * oracle.value_noise_std();

    let calls_start = oracle.total_calls();
    let spent = |o: &O| o.total_calls() - calls_start;
    if max_calls < oracle.query_cost() {
        return Ok(InnerReport {
            x_out: x0.to_vec(),
            oracle_calls: 0,
            iterations: 0,
            target_eta: eta_check,
            terminated_by: StopReason::Budget,
        });
    }
    let out = |x: Vec<f64>, iters: u64, reason: StopReason, o: &O| InnerReport {
        x_out: x,
        oracle_calls: spent(o),
        iterations: iters,
        target_eta: eta_check,
        terminated_by: reason,
    };

    let mut m: u64 = 1;
    let mut x = x0.to_vec();
    let mut est = BatchEstimate::new(x.len());
    est.add(oracle, &x, lambda_check, m, rng);
    let mut iterations = 0u64;
    loop {
        let grad = est.grad_mean();
        let gn = norm(&grad);
        let conf_g = if est.m > 0 {
            2.0 * sigma_g / (est.m as f64).sqrt()
        } else {
            f64::INFINITY
        };
        if gn + conf_g <= tol {
            return Ok(out(x, iterations, StopReason::GradientCriterion, oracle));
        }
        if spent(oracle) >= max_calls {
            return Ok(out(x, iterations, StopReason::Budget, oracle));
        }
        let affordable = |o: &O, k: u64| {
            let left = max_calls.saturating_sub(spent(o));
            k.min(left / o.query_cost().max(1))
        };
        if conf_g > gn / 2.0 && conf_g > tol / 4.0 {
            // gradient estimate not trustworthy yet: double the batch
            let extra = affordable(oracle, est.m);
            if extra == 0 {
                return Ok(out(x, iterations, StopReason::Budget, oracle));
            }
            est.add(oracle, &x, lambda_check, extra, rng);
            m = est.m;
            continue;
        }
        let candidate: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - gamma * g).collect();
        let fit = affordable(oracle, m);
        if fit < m {
            return Ok(out(x, iterations, StopReason::Budget, oracle));
        }
        let mut cand_est = BatchEstimate::new(x.len());
        cand_est.add(oracle, &candidate, lambda_check, m, rng);
        let conf_v = 2.0 * sigma_v / (m as f64).sqrt() + 2.0 * sigma_v / (est.m as f64).sqrt();
        if cand_est.l_mean() > est.l_mean() + conf_v {
            // measured increase beyond the confidence radius: retry sharper
            let extra = affordable(oracle, est.m);
            if extra == 0 {
                return Ok(out(x, iterations, StopReason::Budget, oracle));
            }
            est.add(oracle, &x, lambda_check, extra, rng);
            m = est.m;
            continue;
        }
        x = candidate;
        est = cand_est;
        iterations += 1;
    }
}
