//! Stochastic oracle simulation and estimators built on top of it.
//!
//! The simulator answers queries with unbiased Gaussian noise (values get
//! variance `sigma^2`, gradients per-coordinate noise with total variance
//! `sigma_hat^2`), logs every query in an append-only ledger for the
//! auditor, and optionally runs in zeroth-order mode where gradients come
//! from central finite differences of noisy values.
//!
//! On top of the raw oracle sit the confidence-bonus constraint estimator
//! (minibatch mean plus a sub-Gaussian upper-confidence bonus), the
//! max-of-constraints reduction and the randomized-smoothing estimator used
//! by the multi-constraint extension.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::problem::{EvalFn, ProblemSpec, ValueFn};
use crate::RunRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseDistribution {
    Gaussian,
}

/// Sub-Gaussian noise parameters of the feedback.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Value-noise parameter (both `F` and `G`).
    pub sigma: f64,
    /// Gradient-noise parameter (both `grad F` and `grad G`).
    pub sigma_hat: f64,
    pub distribution: NoiseDistribution,
}

impl NoiseModel {
    pub fn gaussian(sigma: f64, sigma_hat: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite() && sigma_hat >= 0.0 && sigma_hat.is_finite()) {
            return Err(Error::Input(
                "noise parameters must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            sigma,
            sigma_hat,
            distribution: NoiseDistribution::Gaussian,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            sigma: 0.0,
            sigma_hat: 0.0,
            distribution: NoiseDistribution::Gaussian,
        }
    }
}

/// One noisy measurement bundle.
#[derive(Clone, Debug)]
pub struct OracleSample {
    pub f_value: f64,
    pub f_grad: Vec<f64>,
    pub g_value: f64,
    pub g_grad: Vec<f64>,
    pub query_index: u64,
}

impl OracleSample {
    /// Noisy Lagrangian value and gradient at multiplier `lambda`.
    pub fn lagrangian(&self, lambda: f64) -> (f64, Vec<f64>) {
        let v = self.f_value + lambda * self.g_value;
        let g = self
            .f_grad
            .iter()
            .zip(&self.g_grad)
            .map(|(a, b)| a + lambda * b)
            .collect();
        (v, g)
    }
}

/// One ledger row: a query location and how many samples were drawn there.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerRecord {
    pub query_index: u64,
    pub x: Vec<f64>,
    pub samples: u64,
}

/// Append-only log of every oracle access in a run.
#[derive(Clone, Debug, Default)]
pub struct QueryLedger {
    records: Vec<LedgerRecord>,
    total: u64,
}

impl QueryLedger {
    pub fn push(&mut self, record: LedgerRecord) {
        self.total += record.samples;
        self.records.push(record);
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Total oracle calls, i.e. the sum of per-record sample counts.
    pub fn total_samples(&self) -> u64 {
        self.total
    }

    /// CSV export: `query_index,x_0,..,x_{d-1},n_samples` with a run-id
    /// comment line so the auditor can match the ledger to its trace.
    pub fn to_csv(&self, dim: usize, run_id: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# run_id={run_id}\n"));
        out.push_str("query_index");
        for i in 0..dim {
            out.push_str(&format!(",x_{i}"));
        }
        out.push_str(",n_samples\n");
        for r in &self.records {
            out.push_str(&r.query_index.to_string());
            for v in &r.x {
                out.push(',');
                out.push_str(&format!("{v:.17e}"));
            }
            out.push(',');
            out.push_str(&r.samples.to_string());
            out.push('\n');
        }
        out
    }

    /// Parse a CSV produced by [`Self::to_csv`]; returns the ledger and the
    /// embedded run id (empty when absent).
    pub fn from_csv(text: &str) -> Result<(Self, String)> {
        let mut ledger = QueryLedger::default();
        let mut run_id = String::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(id) = rest.trim().strip_prefix("run_id=") {
                    run_id = id.to_string();
                }
                continue;
            }
            if line.starts_with("query_index") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 3 {
                return Err(Error::Parse(format!("ledger line {ln}: too few fields")));
            }
            let idx: u64 = fields[0]
                .parse()
                .map_err(|e| Error::Parse(format!("ledger line {ln}: {e}")))?;
            let samples: u64 = fields[fields.len() - 1]
                .parse()
                .map_err(|e| Error::Parse(format!("ledger line {ln}: {e}")))?;
            let x = fields[1..fields.len() - 1]
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse(format!("ledger line {ln}: {e}")))?;
            ledger.push(LedgerRecord {
                query_index: idx,
                x,
                samples,
            });
        }
        Ok((ledger, run_id))
    }
}

/// What the solvers see: noisy measurements, batched constraint values and
/// honest noise-level declarations for minibatch sizing.
pub trait QueryOracle {
    fn dim(&self) -> usize;

    /// One full measurement bundle at `x`.
    fn query(&mut self, x: &[f64], rng: &mut RunRng) -> OracleSample;

    /// Mean of `n` independent constraint-value draws at `x`.
    fn query_g_mean(&mut self, x: &[f64], n: u64, rng: &mut RunRng) -> f64;

    /// Per-sample standard deviation of a single constraint-value draw.
    fn value_noise_std(&self) -> f64;

    /// Standard deviation (vector norm) of the gradient noise in one
    /// [`Self::query`].
    fn grad_noise_std(&self) -> f64;

    /// Oracle calls consumed by one [`Self::query`] (more than one in
    /// zeroth-order or estimator-backed modes).
    fn query_cost(&self) -> u64 {
        1
    }

    /// Cumulative oracle calls so far.
    fn total_calls(&self) -> u64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Feedback {
    FirstOrder,
    /// Gradients via per-coordinate central differences of noisy values,
    /// `2 d` value queries per gradient.
    ZerothOrder {
        h: f64,
    },
}

/// Simulated oracle over an analytic problem.
pub struct Oracle {
    f: EvalFn,
    g: EvalFn,
    dim: usize,
    noise: NoiseModel,
    feedback: Feedback,
    ledger: QueryLedger,
    next_index: u64,
}

impl Oracle {
    pub fn new(spec: &ProblemSpec, noise: NoiseModel) -> Self {
        Self {
            f: spec.objective_fn(),
            g: spec.constraint_fn(),
            dim: spec.dim,
            noise,
            feedback: Feedback::FirstOrder,
            ledger: QueryLedger::default(),
            next_index: 0,
        }
    }

    /// Zeroth-order construction: wraps the value-only view of the problem
    /// into the first-order contract via central differences with step `h`.
    /// The ledger counts every underlying value query, probe points
    /// included.
    pub fn with_finite_differences(spec: &ProblemSpec, noise: NoiseModel, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Input("finite-difference step must be positive".into()));
        }
        let mut o = Self::new(spec, noise);
        o.feedback = Feedback::ZerothOrder { h };
        Ok(o)
    }

    pub fn feedback(&self) -> Feedback {
        self.feedback
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> QueryLedger {
        self.ledger
    }

    fn record(&mut self, x: &[f64], samples: u64) -> u64 {
        let idx = self.next_index;
        self.next_index += 1;
        self.ledger.push(LedgerRecord {
            query_index: idx,
            x: x.to_vec(),
            samples,
        });
        idx
    }

    fn value_noise(&self, rng: &mut RunRng) -> f64 {
        if self.noise.sigma == 0.0 {
            0.0
        } else {
            self.noise.sigma * rng.sample::<f64, _>(StandardNormal)
        }
    }

    fn grad_noise(&self, rng: &mut RunRng) -> Vec<f64> {
        if self.noise.sigma_hat == 0.0 {
            return vec![0.0; self.dim];
        }
        // independent per-coordinate noise with total variance sigma_hat^2
        let per = self.noise.sigma_hat / (self.dim as f64).sqrt();
        (0..self.dim)
            .map(|_| per * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

impl QueryOracle for Oracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn query(&mut self, x: &[f64], rng: &mut RunRng) -> OracleSample {
        debug_assert_eq!(x.len(), self.dim);
        match self.feedback {
            Feedback::FirstOrder => {
                let idx = self.record(x, 1);
                let (fv, fg) = (self.f)(x);
                let (gv, gg) = (self.g)(x);
                let fn_noise = self.grad_noise(rng);
                let gn_noise = self.grad_noise(rng);
                OracleSample {
                    f_value: fv + self.value_noise(rng),
                    f_grad: fg.iter().zip(&fn_noise).map(|(a, b)| a + b).collect(),
                    g_value: gv + self.value_noise(rng),
                    g_grad: gg.iter().zip(&gn_noise).map(|(a, b)| a + b).collect(),
                    query_index: idx,
                }
            }
            Feedback::ZerothOrder { h } => {
                // values at x: one f draw and one g draw
                let idx = self.record(x, 2);
                let f_value = (self.f)(x).0 + self.value_noise(rng);
                let g_value = (self.g)(x).0 + self.value_noise(rng);
                let mut f_grad = vec![0.0; self.dim];
                let mut g_grad = vec![0.0; self.dim];
                let mut xp = x.to_vec();
                for k in 0..self.dim {
                    let orig = xp[k];
                    xp[k] = orig + h;
                    self.record(&xp, 2);
                    let fp = (self.f)(&xp).0 + self.value_noise(rng);
                    let gp = (self.g)(&xp).0 + self.value_noise(rng);
                    xp[k] = orig - h;
                    self.record(&xp, 2);
                    let fm = (self.f)(&xp).0 + self.value_noise(rng);
                    let gm = (self.g)(&xp).0 + self.value_noise(rng);
                    xp[k] = orig;
                    f_grad[k] = (fp - fm) / (2.0 * h);
                    g_grad[k] = (gp - gm) / (2.0 * h);
                }
                OracleSample {
                    f_value,
                    f_grad,
                    g_value,
                    g_grad,
                    query_index: idx,
                }
            }
        }
    }

    fn query_g_mean(&mut self, x: &[f64], n: u64, rng: &mut RunRng) -> f64 {
        debug_assert!(n >= 1);
        self.record(x, n);
        let gv = (self.g)(x).0;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += gv + self.value_noise(rng);
        }
        acc / n as f64
    }

    fn value_noise_std(&self) -> f64 {
        self.noise.sigma
    }

    fn grad_noise_std(&self) -> f64 {
        match self.feedback {
            Feedback::FirstOrder => self.noise.sigma_hat,
            // per coordinate sqrt(2) sigma / (2h); vector norm scales by sqrt(d)
            Feedback::ZerothOrder { h } => {
                self.noise.sigma * (self.dim as f64 / 2.0).sqrt() / h
            }
        }
    }

    fn query_cost(&self) -> u64 {
        match self.feedback {
            Feedback::FirstOrder => 1,
            Feedback::ZerothOrder { .. } => 2 + 4 * self.dim as u64,
        }
    }

    fn total_calls(&self) -> u64 {
        self.ledger.total_samples()
    }
}

// ---------------------------------------------------------------------------
// Proximal view for the non-convex outer loop
// ---------------------------------------------------------------------------

/// Oracle view of the proximally regularized subproblem
/// `f + rho_f/2 ||x - c||^2` s.t. `g + rho_g/2 ||x - c||^2 <= 0`.
/// The proximal terms are known analytically, so they are added
/// deterministically on top of the base measurements; all accounting stays
/// in the base ledger.
pub struct ProxOracle<'a, O: QueryOracle> {
    base: &'a mut O,
    center: Vec<f64>,
    rho_f: f64,
    rho_g: f64,
}

impl<'a, O: QueryOracle> ProxOracle<'a, O> {
    pub fn new(base: &'a mut O, center: Vec<f64>, rho_f: f64, rho_g: f64) -> Self {
        Self {
            base,
            center,
            rho_f,
            rho_g,
        }
    }

    fn prox_terms(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d2 = dist(x, &self.center).powi(2);
        let diff: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        (d2, diff)
    }
}

impl<O: QueryOracle> QueryOracle for ProxOracle<'_, O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn query(&mut self, x: &[f64], rng: &mut RunRng) -> OracleSample {
        let mut s = self.base.query(x, rng);
        let (d2, diff) = self.prox_terms(x);
        s.f_value += 0.5 * self.rho_f * d2;
        s.g_value += 0.5 * self.rho_g * d2;
        for k in 0..diff.len() {
            s.f_grad[k] += self.rho_f * diff[k];
            s.g_grad[k] += self.rho_g * diff[k];
        }
        s
    }

    fn query_g_mean(&mut self, x: &[f64], n: u64, rng: &mut RunRng) -> f64 {
        let base = self.base.query_g_mean(x, n, rng);
        base + 0.5 * self.rho_g * dist(x, &self.center).powi(2)
    }

    fn value_noise_std(&self) -> f64 {
        self.base.value_noise_std()
    }

    fn grad_noise_std(&self) -> f64 {
        self.base.grad_noise_std()
    }

    fn query_cost(&self) -> u64 {
        self.base.query_cost()
    }

    fn total_calls(&self) -> u64 {
        self.base.total_calls()
    }
}

// ---------------------------------------------------------------------------
// Constraint estimation
// ---------------------------------------------------------------------------

/// Minibatch size of the upper-confidence constraint estimate:
/// `max(1, ceil(4 sigma^2 / eps_t^2 * ln(t_max / delta)))`. The formula
/// degenerates to zero when `sigma = 0` and is floored at one sample.
pub fn ucb_batch_size(sigma: f64, eps_t: f64, t_max: u64, delta: f64) -> u64 {
    let log_term = ((t_max as f64) / delta).ln().max(0.0);
    let n_raw = 4.0 * sigma * sigma / (eps_t * eps_t) * log_term;
    (n_raw.ceil() as u64).max(1)
}

/// Minibatch upper-confidence estimate of `g(x)`.
///
/// Draws [`ucb_batch_size`] samples and returns their mean plus the bonus
/// `sigma sqrt(ln(t_max/delta)/n)`, which upper-bounds `g(x)` with high
/// probability while staying within `eps_t` of it. The same quantity
/// doubles as the dual-gradient estimate.
pub fn estimate_constraint_ucb<O: QueryOracle>(
    oracle: &mut O,
    x: &[f64],
    eps_t: f64,
    t_max: u64,
    delta: f64,
    rng: &mut RunRng,
) -> Result<(f64, u64)> {
    if !(eps_t > 0.0) {
        return Err(Error::Input("eps_t must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Input("delta must lie in (0, 1)".into()));
    }
    if t_max == 0 {
        return Err(Error::Input("t_max must be positive".into()));
    }
    let sigma = oracle.value_noise_std();
    let log_term = ((t_max as f64) / delta).ln().max(0.0);
    let n = ucb_batch_size(sigma, eps_t, t_max, delta);
    let mean = oracle.query_g_mean(x, n, rng);
    let bonus = sigma * (log_term / n as f64).sqrt();
    Ok((mean + bonus, n))
}

// ---------------------------------------------------------------------------
// Multi-constraint reduction
// ---------------------------------------------------------------------------

/// Pointwise maximum of several constraint maps; value oracle only, the
/// result is non-smooth.
pub fn max_reduce(constraints: Vec<ValueFn>) -> Result<ValueFn> {
    if constraints.is_empty() {
        return Err(Error::Input("constraint list must be non-empty".into()));
    }
    Ok(Arc::new(move |x: &[f64]| {
        constraints
            .iter()
            .map(|g| g(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }))
}

/// Uniform draw from the unit sphere.
pub(crate) fn sample_unit_sphere(dim: usize, rng: &mut RunRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = crate::linalg::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform draw from the unit ball.
pub(crate) fn sample_unit_ball(dim: usize, rng: &mut RunRng) -> Vec<f64> {
    let s = sample_unit_sphere(dim, rng);
    let r: f64 = rng.random::<f64>().powf(1.0 / dim as f64);
    s.into_iter().map(|x| r * x).collect()
}

/// Monte Carlo estimator of the ball-uniform smoothing
/// `g_nu(x) = E_u[g(x + nu u)]`, with gradients from the two-point
/// sphere-sampling estimator `(d / 2 nu) E_s[(g(x + nu s) - g(x - nu s)) s]`.
/// Both estimators are unbiased for `g_nu`.
pub struct SmoothedConstraint {
    g: ValueFn,
    pub nu: f64,
    pub n_mc: u64,
    dim: usize,
}

impl SmoothedConstraint {
    pub fn new(g: ValueFn, dim: usize, nu: f64, n_mc: u64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::Input("smoothing radius nu must be positive".into()));
        }
        if n_mc < 1 {
            return Err(Error::Input("n_mc must be at least 1".into()));
        }
        Ok(Self { g, nu, n_mc, dim })
    }

    /// Monte Carlo estimate of `g_nu(x)` over `n` ball draws.
    pub fn value_mc(&self, x: &[f64], n: u64, rng: &mut RunRng) -> f64 {
        let mut acc = 0.0;
        let mut y = vec![0.0; self.dim];
        for _ in 0..n {
            let u = sample_unit_ball(self.dim, rng);
            for k in 0..self.dim {
                y[k] = x[k] + self.nu * u[k];
            }
            acc += (self.g)(&y);
        }
        acc / n as f64
    }

    pub fn value(&self, x: &[f64], rng: &mut RunRng) -> f64 {
        self.value_mc(x, self.n_mc, rng)
    }

    /// Two-point gradient estimate averaged over `n_mc` sphere pairs.
    pub fn grad(&self, x: &[f64], rng: &mut RunRng) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        let mut plus = vec![0.0; self.dim];
        let mut minus = vec![0.0; self.dim];
        let scale = self.dim as f64 / (2.0 * self.nu);
        for _ in 0..self.n_mc {
            let s = sample_unit_sphere(self.dim, rng);
            for k in 0..self.dim {
                plus[k] = x[k] + self.nu * s[k];
                minus[k] = x[k] - self.nu * s[k];
            }
            let diff = (self.g)(&plus) - (self.g)(&minus);
            for k in 0..self.dim {
                acc[k] += scale * diff * s[k];
            }
        }
        acc.iter_mut().for_each(|v| *v /= self.n_mc as f64);
        acc
    }
}

/// Oracle whose constraint feedback comes from a [`SmoothedConstraint`]
/// estimator while the objective stays analytic. Ledger rows log the
/// requested point; the Monte Carlo perturbations are part of the estimator
/// randomization, like noise, not separate queries.
pub struct SmoothedOracle {
    objective: EvalFn,
    smoothed: SmoothedConstraint,
    /// Declared per-draw deviation bound of one smoothing sample, used for
    /// confidence-bonus sizing (a Lipschitz bound of the raw constraint
    /// times the smoothing radius).
    value_std: f64,
    grad_std: f64,
    dim: usize,
    ledger: QueryLedger,
    next_index: u64,
}

impl SmoothedOracle {
    pub fn new(objective: EvalFn, smoothed: SmoothedConstraint, lip_bound: f64) -> Result<Self> {
        if !(lip_bound > 0.0) {
            return Err(Error::Input("Lipschitz bound must be positive".into()));
        }
        let dim = smoothed.dim;
        let value_std = lip_bound * smoothed.nu;
        let grad_std = dim as f64 * lip_bound / (smoothed.n_mc as f64).sqrt();
        Ok(Self {
            objective,
            smoothed,
            value_std,
            grad_std,
            dim,
            ledger: QueryLedger::default(),
            next_index: 0,
        })
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    fn record(&mut self, x: &[f64], samples: u64) -> u64 {
        let idx = self.next_index;
        self.next_index += 1;
        self.ledger.push(LedgerRecord {
            query_index: idx,
            x: x.to_vec(),
            samples,
        });
        idx
    }
}

impl QueryOracle for SmoothedOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn query(&mut self, x: &[f64], rng: &mut RunRng) -> OracleSample {
        let n = self.smoothed.n_mc;
        let idx = self.record(x, 1 + 3 * n);
        let (fv, fg) = (self.objective)(x);
        OracleSample {
            f_value: fv,
            f_grad: fg,
            g_value: self.smoothed.value(x, rng),
            g_grad: self.smoothed.grad(x, rng),
            query_index: idx,
        }
    }

    fn query_g_mean(&mut self, x: &[f64], n: u64, rng: &mut RunRng) -> f64 {
        self.record(x, n);
        self.smoothed.value_mc(x, n, rng)
    }

    fn value_noise_std(&self) -> f64 {
        self.value_std
    }

    fn grad_noise_std(&self) -> f64 {
        self.grad_std
    }

    fn query_cost(&self) -> u64 {
        1 + 3 * self.smoothed.n_mc
    }

    fn total_calls(&self) -> u64 {
        self.ledger.total_samples()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_nonconvex_benchmark, make_quadratic_benchmark};
    use crate::run_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn noiseless_query_is_exact() {
        let spec = make_quadratic_benchmark(2).unwrap();
        let mut oracle = Oracle::new(&spec, NoiseModel::noiseless());
        let mut rng = run_rng(0);
        let s = oracle.query(&[0.3, 0.9], &mut rng);
        let (f, g) = spec.eval_true(&[0.3, 0.9]).unwrap();
        assert_eq!(s.f_value, f.value);
        assert_eq!(s.f_grad, f.gradient);
        assert_eq!(s.g_value, g.value);
        assert_eq!(s.g_grad, g.gradient);
    }

    #[test]
    fn repeated_queries_draw_independent_noise() {
        let spec = make_quadratic_benchmark(2).unwrap();
        let mut oracle = Oracle::new(&spec, NoiseModel::gaussian(0.1, 0.1).unwrap());
        let mut rng = run_rng(1);
        let a = oracle.query(&[0.0, 0.5], &mut rng);
        let b = oracle.query(&[0.0, 0.5], &mut rng);
        assert_ne!(a.g_value, b.g_value);
        assert!(b.query_index > a.query_index);
    }

    #[test]
    fn empirical_mean_matches_value() {
        let spec = make_quadratic_benchmark(2).unwrap();
        let sigma = 0.1;
        let mut oracle = Oracle::new(&spec, NoiseModel::gaussian(sigma, 0.0).unwrap());
        let mut rng = run_rng(2);
        let n = 100_000u64;
        let mean = oracle.query_g_mean(&[0.0, 0.5], n, &mut rng);
        let g = spec.eval_true(&[0.0, 0.5]).unwrap().1.value;
        assert!((mean - g).abs() <= 3.0 * sigma / (n as f64).sqrt());
        assert_eq!(oracle.total_calls(), n);
    }

    #[test]
    fn ucb_zero_noise_is_exact() {
        let spec = make_quadratic_benchmark(2).unwrap();
        let mut oracle = Oracle::new(&spec, NoiseModel::noiseless());
        let mut rng = run_rng(3);
        let (g_hat, n) = estimate_constraint_ucb(&mut oracle, &[0.1, 0.7], 0.5, 100, 0.01, &mut rng)
            .unwrap();
        assert_eq!(n, 1);
        let g = spec.eval_true(&[0.1, 0.7]).unwrap().1.value;
        assert_eq!(g_hat, g);
    }

    #[test]
    fn ucb_batch_size_and_bonus_arithmetic() {
        let spec = make_quadratic_benchmark(2).unwrap();
        let mut oracle = Oracle::new(&spec, NoiseModel::gaussian(0.1, 0.0).unwrap());
        let mut rng = run_rng(4);
        // 4 (0.1)^2 / (0.5)^2 * ln(100/0.01) = 0.16 * 9.2103 = 1.4737 -> 2
        let (_, n) =
            estimate_constraint_ucb(&mut oracle, &[0.0, 0.5], 0.5, 100, 0.01, &mut rng).unwrap();
        assert_eq!(n, 2);
        let bonus = 0.1 * ((100.0f64 / 0.01).ln() / 2.0).sqrt();
        assert_abs_diff_eq!(bonus, 0.2146, epsilon = 1e-3);
        assert!(bonus <= 0.5 / 2.0 + 1e-12);
    }

    #[test]
    fn ucb_coverage_monte_carlo() {
        // For the printed bonus sigma sqrt(ln(T/delta)/n), the sub-Gaussian
        // failure probability of one estimate is exp(-ln(T/delta)/2)
        // = sqrt(delta/T). Check the observed miss rate against that level.
        let spec = make_quadratic_benchmark(2).unwrap();
        let sigma = 0.1;
        let (t_max, delta) = (100u64, 0.01);
        let g_true = spec.eval_true(&[0.0, 0.5]).unwrap().1.value;
        let mut oracle = Oracle::new(&spec, NoiseModel::gaussian(sigma, 0.0).unwrap());
        let mut rng = run_rng(5);
        let reps = 10_000;
        let mut misses = 0;
        for _ in 0..reps {
            let (g_hat, _) =
                estimate_constraint_ucb(&mut oracle, &[0.0, 0.5], 0.5, t_max, delta, &mut rng)
                    .unwrap();
            if g_hat < g_true {
                misses += 1;
            }
        }
        let bound = (delta / t_max as f64).sqrt();
        let slack = 4.0 * (bound / reps as f64).sqrt();
        assert!(
            (misses as f64 / reps as f64) <= bound + slack,
            "miss rate {} above {}",
            misses as f64 / reps as f64,
            bound + slack
        );
    }

    #[test]
    fn ucb_rejects_bad_inputs() {
        let spec = make_quadratic_benchmark(2).unwrap();
        let mut oracle = Oracle::new(&spec, NoiseModel::noiseless());
        let mut rng = run_rng(6);
        assert!(
            estimate_constraint_ucb(&mut oracle, &[0.0, 0.5], 0.0, 100, 0.01, &mut rng).is_err()
        );
        assert!(
            estimate_constraint_ucb(&mut oracle, &[0.0, 0.5], 0.5, 100, 1.5, &mut rng).is_err()
        );
    }

    #[test]
    fn fd_adapter_exact_on_quadratics() {
        // Central differences are exact on quadratics in the noiseless case.
        let spec = make_quadratic_benchmark(2).unwrap();
        let mut oracle =
            Oracle::with_finite_differences(&spec, NoiseModel::noiseless(), 0.05).unwrap();
        let mut rng = run_rng(7);
        let s = oracle.query(&[1.0, 1.0], &mut rng);
        assert_abs_diff_eq!(s.f_grad[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.f_grad[1], -8.0, epsilon = 1e-9);
        // ledger: 1 record at x plus 2 per coordinate, 2 value draws each
        assert_eq!(oracle.ledger().len(), 5);
        assert_eq!(oracle.total_calls(), 10);
    }

    #[test]
    fn fd_adapter_symmetric_gradient_at_origin() {
        let spec = make_nonconvex_benchmark(2, 0.5).unwrap();
        let mut oracle =
            Oracle::with_finite_differences(&spec, NoiseModel::noiseless(), 1e-4).unwrap();
        let mut rng = run_rng(8);
        let s = oracle.query(&[0.0, 0.0], &mut rng);
        assert_abs_diff_eq!(s.f_grad[0], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.f_grad[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn fd_adapter_noise_std() {
        // Per-coordinate std of the adapter gradient is sigma sqrt(2)/(2h).
        let spec = make_quadratic_benchmark(2).unwrap();
        let (sigma, h) = (0.1, 0.1);
        let mut oracle =
            Oracle::with_finite_differences(&spec, NoiseModel::gaussian(sigma, 0.0).unwrap(), h)
                .unwrap();
        let mut rng = run_rng(9);
        let expected = sigma * 2.0f64.sqrt() / (2.0 * h);
        let n = 20_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let s = oracle.query(&[0.3, 0.8], &mut rng);
            sum += s.g_grad[0];
            sumsq += s.g_grad[0] * s.g_grad[0];
        }
        let mean = sum / n as f64;
        let std = (sumsq / n as f64 - mean * mean).sqrt();
        assert_abs_diff_eq!(std, expected, epsilon = 0.03);
        assert_abs_diff_eq!(
            oracle.grad_noise_std(),
            expected * 2.0f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn fd_rejects_nonpositive_h() {
        let spec = make_quadratic_benchmark(2).unwrap();
        assert!(Oracle::with_finite_differences(&spec, NoiseModel::noiseless(), 0.0).is_err());
    }

    #[test]
    fn max_reduce_basics() {
        let gs = crate::problem::two_halfspace_constraints();
        let g = max_reduce(gs).unwrap();
        assert_eq!(g(&[0.0, 0.0]), -1.0);
        let single = max_reduce(vec![Arc::new(|x: &[f64]| x[0]) as ValueFn]).unwrap();
        assert_eq!(single(&[0.7, 0.0]), 0.7);
        let twin = max_reduce(vec![
            Arc::new(|x: &[f64]| x[0] * 2.0) as ValueFn,
            Arc::new(|x: &[f64]| x[0] * 2.0) as ValueFn,
        ])
        .unwrap();
        let mut rng = run_rng(10);
        for _ in 0..100 {
            let x = [rng.random_range(-3.0..3.0), 0.0];
            assert_eq!(twin(&x), 2.0 * x[0]);
        }
        assert!(max_reduce(vec![]).is_err());
    }

    #[test]
    fn smoothing_exact_on_linear_functions() {
        let g: ValueFn = Arc::new(|x: &[f64]| 3.0 * x[0] - 2.0 * x[1] + 1.0);
        let sc = SmoothedConstraint::new(g.clone(), 2, 0.2, 1).unwrap();
        let mut rng = run_rng(11);
        let x = [0.4, -0.3];
        let est = sc.value_mc(&x, 200_000, &mut rng);
        assert_abs_diff_eq!(est, g(&x), epsilon = 2e-3);
    }

    #[test]
    fn smoothing_error_bounded_by_lipschitz_radius() {
        // g = max(x0 - 1, -x0 - 1) has Lipschitz constant 1, so
        // |g_nu - g| <= nu; check at the kink where the error is largest.
        let g = max_reduce(crate::problem::two_halfspace_constraints()).unwrap();
        let nu = 0.1;
        let sc = SmoothedConstraint::new(g.clone(), 2, nu, 1).unwrap();
        let mut rng = run_rng(12);
        for &x0 in &[1.0, 0.0, -1.0, 0.96, 5.0] {
            let x = [x0, 0.3];
            let est = sc.value_mc(&x, 100_000, &mut rng);
            assert!(
                (est - g(&x)).abs() <= nu + 3e-3,
                "x0={x0}: {} vs {}",
                est,
                g(&x)
            );
        }
    }

    #[test]
    fn smoothing_nu_to_zero_limit() {
        let g = max_reduce(crate::problem::two_halfspace_constraints()).unwrap();
        let mut rng = run_rng(13);
        let x = [0.35, 0.0];
        let mut prev = f64::INFINITY;
        for &nu in &[0.4, 0.1, 0.025] {
            let sc = SmoothedConstraint::new(g.clone(), 2, nu, 1).unwrap();
            let err = (sc.value_mc(&x, 200_000, &mut rng) - g(&x)).abs();
            assert!(err <= nu + 3e-3);
            assert!(err <= prev + 3e-3);
            prev = err;
        }
    }

    #[test]
    fn smoothing_gradient_unbiased_for_smoothed_function() {
        // Against the analytic smoothed |.|: derivative of phi(x0) - 1.
        let g = max_reduce(crate::problem::two_halfspace_constraints()).unwrap();
        let nu = 0.1;
        let sc = SmoothedConstraint::new(g, 2, nu, 4000).unwrap();
        let mut rng = run_rng(14);
        // g = |x0| - 1: away from the kink at x0 = 0 the smoothed slope is
        // the sign, at the kink it vanishes by symmetry
        let grad = sc.grad(&[0.5, 0.0], &mut rng);
        assert_abs_diff_eq!(grad[0], 1.0, epsilon = 0.05);
        assert_abs_diff_eq!(grad[1], 0.0, epsilon = 0.05);
        let grad_kink = sc.grad(&[0.0, 0.0], &mut rng);
        assert_abs_diff_eq!(grad_kink[0], 0.0, epsilon = 0.05);
    }

    #[test]
    fn ledger_roundtrip_csv() {
        let mut ledger = QueryLedger::default();
        ledger.push(LedgerRecord {
            query_index: 0,
            x: vec![0.5, -1.25],
            samples: 3,
        });
        ledger.push(LedgerRecord {
            query_index: 1,
            x: vec![1e-17, 2.0],
            samples: 1,
        });
        let csv = ledger.to_csv(2, "abc123");
        let (parsed, id) = QueryLedger::from_csv(&csv).unwrap();
        assert_eq!(id, "abc123");
        assert_eq!(parsed.records(), ledger.records());
        assert_eq!(parsed.total_samples(), 4);
    }

    #[test]
    fn prox_oracle_adds_regularizer() {
        let spec = make_quadratic_benchmark(2).unwrap();
        let mut base = Oracle::new(&spec, NoiseModel::noiseless());
        let mut rng = run_rng(15);
        let center = vec![0.0, 0.5];
        let mut prox = ProxOracle::new(&mut base, center.clone(), 4.0, 16.0);
        // at the center the proximal terms vanish
        let s = prox.query(&center, &mut rng);
        let (f, g) = spec.eval_true(&center).unwrap();
        assert_eq!(s.f_value, f.value);
        assert_eq!(s.g_value, g.value);
        assert_eq!(s.f_grad, f.gradient);
        // away from the center they do not
        let x = vec![1.0, 0.5];
        let s = prox.query(&x, &mut rng);
        let (f, g) = spec.eval_true(&x).unwrap();
        assert_abs_diff_eq!(s.f_value, f.value + 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.g_value, g.value + 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.f_grad[0], f.gradient[0] + 4.0, epsilon = 1e-12);
        assert_eq!(base.total_calls(), 2);
    }
}
