//! Problem definitions: analytic objective/constraint pairs together with
//! the regularity constants the solvers are allowed to know.
//!
//! Ground truth stays behind [`ProblemSpec::eval_true`], which only the
//! auditor, the verification oracles and tests call. Solvers receive a
//! [`ProblemConstants`] view plus an oracle handle, so they cannot peek at
//! exact values even by accident.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;

/// Exact value/gradient bundle of one function at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPair {
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvexityClass {
    StronglyConvex,
    Convex,
    NonConvex,
}

/// Analytic map `x -> (value, gradient)`.
pub type EvalFn = Arc<dyn Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync>;

/// Value-only map `x -> value`, used by the max-of-constraints reduction.
pub type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The solver-visible part of a problem: every regularity constant plus the
/// safe starting point, but no analytic maps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub dim: usize,
    /// Strong-convexity modulus of the objective (0 when absent).
    pub mu_f: f64,
    /// Strong-convexity modulus of the constraint (0 when merely convex).
    pub mu_g: f64,
    pub m_f: f64,
    pub m_g: f64,
    /// Lipschitz constant of the constraint on the feasible set.
    pub l_g: f64,
    /// Lower bound on `-g(x_start)`.
    pub alpha: f64,
    /// Interior-depth bound: some feasible point has `-g >= beta`.
    pub beta: f64,
    /// Bound on `f(x) - f(x*)` over the feasible set.
    pub delta_f: f64,
    /// Bound on distances from `x_start` within the region the run visits.
    pub r_bound: f64,
    /// Gradient-norm bound of the objective over the feasible set.
    pub g_f: f64,
    /// Gradient-norm bound of the constraint over the feasible set.
    pub g_g: f64,
    pub x_start: Vec<f64>,
    pub convexity: ConvexityClass,
}

impl ProblemConstants {
    /// Strong-convexity and smoothness moduli of the Lagrangian `L(., lambda)`.
    pub fn lagrangian_moduli(&self, lambda: f64) -> (f64, f64) {
        (
            self.mu_f + lambda * self.mu_g,
            self.m_f + lambda * self.m_g,
        )
    }
}

/// A full problem: analytic maps plus constants. Immutable after
/// construction and safe to share across concurrent runs.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    objective: EvalFn,
    constraint: EvalFn,
    pub constants: ProblemConstants,
    /// Optimal value when known analytically; consumed by reporting only.
    pub f_star: Option<f64>,
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        objective: EvalFn,
        constraint: EvalFn,
        constants: ProblemConstants,
        f_star: Option<f64>,
    ) -> Result<Self> {
        let dim = constants.dim;
        if constants.x_start.len() != dim {
            return Err(Error::Input("x_start length must equal dim".into()));
        }
        if constants.alpha <= 0.0 {
            return Err(Error::Input("alpha must be positive".into()));
        }
        if constants.beta < constants.alpha {
            return Err(Error::Input("beta must satisfy beta >= alpha".into()));
        }
        if constants.convexity == ConvexityClass::StronglyConvex
            && !(constants.mu_f > 0.0 && constants.m_f >= constants.mu_f)
        {
            return Err(Error::Input(
                "strongly convex problems need 0 < mu_f <= M_f".into(),
            ));
        }
        let spec = Self {
            name: name.into(),
            dim,
            objective,
            constraint,
            constants,
            f_star,
        };
        let (_, gp) = spec.eval_true(&spec.constants.x_start.clone())?;
        if -gp.value < spec.constants.alpha - 1e-9 {
            return Err(Error::Input(format!(
                "x_start is not alpha-deep: -g(x_start) = {} < alpha = {}",
                -gp.value, spec.constants.alpha
            )));
        }
        Ok(spec)
    }

    /// Exact `(f, grad f, g, grad g)` at `x`. Reserved for the auditor,
    /// verification oracles and tests; solvers work through an oracle.
    pub fn eval_true(&self, x: &[f64]) -> Result<(EvalPair, EvalPair)> {
        if x.len() != self.dim {
            return Err(Error::Input(format!(
                "point has length {}, expected {}",
                x.len(),
                self.dim
            )));
        }
        let (fv, fg) = (self.objective)(x);
        let (gv, gg) = (self.constraint)(x);
        Ok((
            EvalPair {
                value: fv,
                gradient: fg,
            },
            EvalPair {
                value: gv,
                gradient: gg,
            },
        ))
    }

    pub(crate) fn objective_fn(&self) -> EvalFn {
        Arc::clone(&self.objective)
    }

    pub(crate) fn constraint_fn(&self) -> EvalFn {
        Arc::clone(&self.constraint)
    }
}

/// Free-function form of [`ProblemSpec::eval_true`].
pub fn eval_true(spec: &ProblemSpec, x: &[f64]) -> Result<(EvalPair, EvalPair)> {
    spec.eval_true(x)
}

// ---------------------------------------------------------------------------
// Quadratic benchmark
// ---------------------------------------------------------------------------

/// `f(x) = ||x - (0,..,0,tau)||^2` subject to `||Ax - b||^2 - 4 <= 0` with
/// `A = diag(1,..,1,2)` and `b = (0,..,0,1)`. The feasible region is the
/// ellipse `sum_{i<d} x_i^2 + (2 x_d - 1)^2 <= 4`; the last coordinate of any
/// feasible point lies in `[-1/2, 3/2]`.
///
/// The starting point is the constraint minimizer `(0,..,0,1/2)` where
/// `g = -4`, so `alpha = beta = 4`. All derived constants below are closed
/// forms and independent of the dimension.
pub fn quadratic_with_target(d: usize, tau: f64) -> Result<ProblemSpec> {
    if d < 2 {
        return Err(Error::Input("quadratic benchmark needs d >= 2".into()));
    }
    if !tau.is_finite() {
        return Err(Error::Input("target coordinate must be finite".into()));
    }

    let objective: EvalFn = Arc::new(move |x: &[f64]| {
        let d = x.len();
        let mut v = 0.0;
        let mut grad = vec![0.0; d];
        for i in 0..d {
            let t = if i + 1 == d { tau } else { 0.0 };
            let diff = x[i] - t;
            v += diff * diff;
            grad[i] = 2.0 * diff;
        }
        (v, grad)
    });
    let constraint: EvalFn = Arc::new(|x: &[f64]| {
        let d = x.len();
        let mut v = -4.0;
        let mut grad = vec![0.0; d];
        for i in 0..d - 1 {
            v += x[i] * x[i];
            grad[i] = 2.0 * x[i];
        }
        let last = 2.0 * x[d - 1] - 1.0;
        v += last * last;
        grad[d - 1] = 4.0 * last;
        (v, grad)
    });

    let mut x_start = vec![0.0; d];
    x_start[d - 1] = 0.5;

    // Feasible-last-coordinate interval and the constrained optimum.
    let xd_star = tau.clamp(-0.5, 1.5);
    let f_star = (xd_star - tau) * (xd_star - tau);

    // max_x f over the feasible set: on the boundary,
    // h(xd) = 4 - (2 xd - 1)^2 + (xd - tau)^2 = 3 + (4 - 2 tau) xd - 3 xd^2 + tau^2,
    // concave in xd, so the peak (2 - tau)/3 clamped to [-1/2, 3/2] is the max.
    let xd_peak = ((2.0 - tau) / 3.0).clamp(-0.5, 1.5);
    let f_max = 3.0 + (4.0 - 2.0 * tau) * xd_peak - 3.0 * xd_peak * xd_peak + tau * tau;
    let delta_f = f_max - f_star;
    let g_f = 2.0 * f_max.sqrt();
    let r_bound = (xd_star - 0.5).abs().max(0.05);

    let constants = ProblemConstants {
        dim: d,
        mu_f: 2.0,
        mu_g: 2.0,
        m_f: 2.0,
        m_g: 8.0,
        l_g: 8.0,
        alpha: 4.0,
        beta: 4.0,
        delta_f,
        r_bound,
        g_f,
        g_g: 8.0,
        x_start,
        convexity: ConvexityClass::StronglyConvex,
    };
    ProblemSpec::new("quadratic", objective, constraint, constants, Some(f_star))
}

/// The benchmark as reported: target `(0,..,0,5)`, optimum `(0,..,0,1.5)`
/// with `f* = 12.25`, `lambda* = 7/8`, `Delta_f = 18`, `L_g = 8`.
pub fn make_quadratic_benchmark(d: usize) -> Result<ProblemSpec> {
    quadratic_with_target(d, 5.0)
}

// ---------------------------------------------------------------------------
// Non-convex benchmark
// ---------------------------------------------------------------------------

/// Inverted Gaussian over a quadratic constraint:
/// `f(x) = exp(-4 ||x||^2)`, `g(x) = 0.2 ||x - x0||^2 + 10 (x[1] - x0[1])^2 - r^2`
/// with `x0 = (1/sqrt(d)) (1,..,1)` and `x[1]` the second coordinate.
///
/// `M_f`, `Delta_f`, `G_f` and the set diameter are derived by dense
/// sampling of the feasible ellipsoid (the constraint constants have closed
/// forms). The constraint itself is 0.4-strongly convex; the objective is
/// non-convex.
pub fn make_nonconvex_benchmark(d: usize, r: f64) -> Result<ProblemSpec> {
    if d < 2 {
        return Err(Error::Input("non-convex benchmark needs d >= 2".into()));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Input("radius r must be positive".into()));
    }

    let c = 1.0 / (d as f64).sqrt();
    let x0 = vec![c; d];

    let x0_f = x0.clone();
    let objective: EvalFn = Arc::new(move |x: &[f64]| {
        let _ = &x0_f; // keep closure size uniform
        let sq = x.iter().map(|v| v * v).sum::<f64>();
        let e = (-4.0 * sq).exp();
        let grad = x.iter().map(|v| -8.0 * v * e).collect();
        (e, grad)
    });
    let x0_g = x0.clone();
    let rsq = r * r;
    let constraint: EvalFn = Arc::new(move |x: &[f64]| {
        let mut v = -rsq;
        let mut grad = vec![0.0; x.len()];
        for i in 0..x.len() {
            let a = x[i] - x0_g[i];
            v += 0.2 * a * a;
            grad[i] = 0.4 * a;
        }
        let b = x[1] - x0_g[1];
        v += 10.0 * b * b;
        grad[1] += 20.0 * b;
        (v, grad)
    });

    // Extremes of ||x|| over the feasible ellipsoid
    // { 0.2 ||a||^2 + 10 a_1^2 <= r^2 } around x0, sampled on the boundary.
    let (t_min, t_max, diam) = ellipsoid_norm_extremes(&x0, r);
    let f_max = (-4.0 * t_min * t_min).exp();
    let f_min = (-4.0 * t_max * t_max).exp();
    let delta_f = f_max - f_min;

    // ||grad f|| = 8 t exp(-4 t^2) depends on the radius only; scan the
    // feasible radius interval.
    let mut g_f: f64 = 0.0;
    let steps = 100_000;
    for i in 0..=steps {
        let t = t_min + (t_max - t_min) * (i as f64) / (steps as f64);
        g_f = g_f.max(8.0 * t * (-4.0 * t * t).exp());
    }

    let l_g = (40.8f64).sqrt() * r;
    let constants = ProblemConstants {
        dim: d,
        mu_f: 0.0,
        mu_g: 0.4,
        m_f: 8.0,
        m_g: 20.4,
        l_g,
        alpha: rsq,
        beta: rsq,
        delta_f,
        r_bound: diam,
        g_f,
        g_g: l_g,
        x_start: x0,
        convexity: ConvexityClass::NonConvex,
    };
    ProblemSpec::new(
        "nonconvex-gaussian",
        objective,
        constraint,
        constants,
        Some(f_min),
    )
}

/// Min/max of `||x0 + a||` and the max of `||a||` over the boundary of
/// `{ 0.2 ||a||^2 + 10 a_1^2 = r^2 }`, by dense direction sampling.
fn ellipsoid_norm_extremes(x0: &[f64], r: f64) -> (f64, f64, f64) {
    use rand::Rng;
    use rand::SeedableRng;

    let d = x0.len();
    let mut t_min = f64::INFINITY;
    let mut t_max: f64 = 0.0;
    let mut diam: f64 = 0.0;
    let mut consider = |a: &[f64]| {
        let t = a
            .iter()
            .zip(x0)
            .map(|(ai, xi)| (ai + xi) * (ai + xi))
            .sum::<f64>()
            .sqrt();
        t_min = t_min.min(t);
        t_max = t_max.max(t);
        diam = diam.max(norm(a));
    };
    let quad = |v: &[f64]| 0.2 * v.iter().map(|x| x * x).sum::<f64>() + 10.0 * v[1] * v[1];
    if d == 2 {
        let n = 200_000;
        for i in 0..n {
            let th = 2.0 * std::f64::consts::PI * (i as f64) / (n as f64);
            let dir = [th.cos(), th.sin()];
            let s = r / quad(&dir).sqrt();
            consider(&[s * dir[0], s * dir[1]]);
        }
    } else {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0x5afe);
        for _ in 0..200_000 {
            let mut dir: Vec<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let n = norm(&dir);
            dir.iter_mut().for_each(|v| *v /= n);
            let s = r / quad(&dir).sqrt();
            let a: Vec<f64> = dir.iter().map(|v| s * v).collect();
            consider(&a);
        }
        // axis directions catch the extreme eigendirections exactly
        for i in 0..d {
            for sign in [-1.0, 1.0] {
                let mut dir = vec![0.0; d];
                dir[i] = sign;
                let s = r / quad(&dir).sqrt();
                let a: Vec<f64> = dir.iter().map(|v| s * v).collect();
                consider(&a);
            }
        }
    }
    (t_min, t_max, diam)
}

// ---------------------------------------------------------------------------
// Two-halfspace toy with a smoothed max constraint
// ---------------------------------------------------------------------------

/// The raw constraints of the smoothing toy: `g1 = x_0 - 1`, `g2 = -x_0 - 1`
/// (feasible band `|x_0| <= 1`). Their max is `|x_0| - 1`.
pub fn two_halfspace_constraints() -> Vec<ValueFn> {
    vec![
        Arc::new(|x: &[f64]| x[0] - 1.0),
        Arc::new(|x: &[f64]| -x[0] - 1.0),
    ]
}

/// Ball-uniform smoothing of `|z|` in 2-d: `phi(z) = E|z + nu U|` where `U`
/// is the first coordinate of a uniform draw from the unit disc. Outside the
/// tube `|z| >= nu` the smoothing is exact: `phi(z) = |z|`.
pub(crate) fn smoothed_abs(z: f64, nu: f64) -> f64 {
    if z.abs() >= nu {
        return z.abs();
    }
    let w = -z / nu;
    z * (1.0 - 2.0 * semicircle_cdf(w)) - 2.0 * nu * semicircle_first_moment(w)
}

pub(crate) fn smoothed_abs_deriv(z: f64, nu: f64) -> f64 {
    if z.abs() >= nu {
        return z.signum();
    }
    1.0 - 2.0 * semicircle_cdf(-z / nu)
}

/// CDF of the semicircle density `(2/pi) sqrt(1 - u^2)` on `[-1, 1]`.
fn semicircle_cdf(w: f64) -> f64 {
    0.5 + (w * (1.0 - w * w).sqrt() + w.asin()) / std::f64::consts::PI
}

/// `int_{-1}^{w} u (2/pi) sqrt(1 - u^2) du`.
fn semicircle_first_moment(w: f64) -> f64 {
    -(2.0 / (3.0 * std::f64::consts::PI)) * (1.0 - w * w).powf(1.5)
}

/// Strongly convex toy whose single constraint is the ball-uniform smoothing
/// of `max(x_0 - 1, -x_0 - 1)`: objective `||x - (3, 0)||^2`, optimum
/// `(1, 0)` with `f* = 4` and `lambda* = 4`. Because the max is convex, the
/// smoothed constraint upper-bounds the raw one, so feasibility for the
/// smoothed problem implies feasibility for both halfspaces.
///
/// `delta_f` is a per-start dual bound surrogate (the feasible band is
/// unbounded, so the set-wide supremum does not exist): it dominates
/// `f(x_start) - f*`, which is all the dual initialization needs.
pub fn make_smoothed_max_toy(nu: f64) -> Result<ProblemSpec> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::Input("smoothing radius must lie in (0, 1)".into()));
    }
    let objective: EvalFn = Arc::new(|x: &[f64]| {
        let dx = x[0] - 3.0;
        let dy = x[1];
        (dx * dx + dy * dy, vec![2.0 * dx, 2.0 * dy])
    });
    let constraint: EvalFn = Arc::new(move |x: &[f64]| {
        (
            smoothed_abs(x[0], nu) - 1.0,
            vec![smoothed_abs_deriv(x[0], nu), 0.0],
        )
    });
    let depth = 1.0 - 4.0 * nu / (3.0 * std::f64::consts::PI);
    let constants = ProblemConstants {
        dim: 2,
        mu_f: 2.0,
        mu_g: 0.0,
        m_f: 2.0,
        m_g: 4.0 / (std::f64::consts::PI * nu),
        l_g: 1.0,
        alpha: depth,
        beta: depth,
        delta_f: 6.0,
        r_bound: 2.0,
        g_f: 8.0,
        g_g: 1.0,
        x_start: vec![0.0, 0.0],
        convexity: ConvexityClass::StronglyConvex,
    };
    ProblemSpec::new("smoothed-max-toy", objective, constraint, constants, Some(4.0))
}

/// Resolve a benchmark by its canonical CLI name.
pub fn problem_by_name(name: &str, dim: usize, r: Option<f64>) -> Result<ProblemSpec> {
    match name {
        "quadratic" => make_quadratic_benchmark(dim),
        "nonconvex-gaussian" => make_nonconvex_benchmark(dim, r.unwrap_or(0.5)),
        other => Err(Error::Input(format!("unknown problem '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn rng() -> rand_chacha::ChaCha12Rng {
        rand_chacha::ChaCha12Rng::seed_from_u64(11)
    }

    /// Sample a feasible point of the quadratic benchmark.
    fn quad_feasible(d: usize, rng: &mut impl Rng) -> Vec<f64> {
        loop {
            let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            x[d - 1] = rng.random_range(-0.5..1.5);
            let g: f64 = x[..d - 1].iter().map(|v| v * v).sum::<f64>()
                + (2.0 * x[d - 1] - 1.0).powi(2)
                - 4.0;
            if g <= 0.0 {
                return x;
            }
        }
    }

    #[test]
    fn quadratic_start_is_constraint_minimizer() {
        let spec = make_quadratic_benchmark(2).unwrap();
        let (_, g) = spec.eval_true(&[0.0, 0.5]).unwrap();
        // Independent route: explicit matrix product ||Ax - b||^2 - 4.
        let a = [[1.0, 0.0], [0.0, 2.0]];
        let b = [0.0, 1.0];
        let x = [0.0, 0.5];
        let mut v = -4.0;
        for i in 0..2 {
            let row: f64 = (0..2).map(|j| a[i][j] * x[j]).sum::<f64>() - b[i];
            v += row * row;
        }
        assert_abs_diff_eq!(v, -4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.value, v, epsilon = 1e-15);
        assert_eq!(g.gradient, vec![0.0, 0.0]);
        assert_eq!(spec.constants.beta, 4.0);
    }

    #[test]
    fn quadratic_objective_target() {
        let spec = make_quadratic_benchmark(2).unwrap();
        let (f, _) = spec.eval_true(&[0.0, 5.0]).unwrap();
        assert_eq!(f.value, 0.0);
        assert_eq!(f.gradient, vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_derived_constants() {
        let spec = make_quadratic_benchmark(2).unwrap();
        let c = &spec.constants;
        assert_eq!(
            (c.mu_f, c.m_f, c.m_g, c.l_g, c.alpha, c.beta),
            (2.0, 2.0, 8.0, 8.0, 4.0, 4.0)
        );
        assert_abs_diff_eq!(c.delta_f, 18.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.f_star.unwrap(), 12.25, epsilon = 1e-12);
        assert_abs_diff_eq!(c.g_f, 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.r_bound, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_lipschitz_bound_by_grid() {
        // Maximize ||grad g|| over the feasible ellipse on a dense grid and
        // compare against the stored closed form L_g = 8.
        let spec = make_quadratic_benchmark(2).unwrap();
        let mut max_g: f64 = 0.0;
        let n = 2000;
        for i in 0..=n {
            for j in 0..=n {
                let x = [
                    -2.0 + 4.0 * (i as f64) / (n as f64),
                    -0.5 + 2.0 * (j as f64) / (n as f64),
                ];
                let (_, g) = spec.eval_true(&x).unwrap();
                if g.value <= 0.0 {
                    max_g = max_g.max(norm(&g.gradient));
                }
            }
        }
        assert!(max_g <= 8.0 + 1e-9);
        assert!(max_g > 8.0 - 1e-2, "grid should approach the bound, got {max_g}");
    }

    #[test]
    fn quadratic_invariants_on_random_feasible_points() {
        let spec = make_quadratic_benchmark(2).unwrap();
        let c = &spec.constants;
        let mut rng = rng();
        for _ in 0..100 {
            let x = quad_feasible(2, &mut rng);
            let (f, g) = spec.eval_true(&x).unwrap();
            assert!(norm(&g.gradient) <= c.l_g + 1e-9);
            assert!(f.value - spec.f_star.unwrap() <= c.delta_f + 1e-9);
        }
    }

    #[test]
    fn quadratic_constraint_is_convex() {
        let spec = make_quadratic_benchmark(2).unwrap();
        let mut rng = rng();
        for _ in 0..100 {
            let x = quad_feasible(2, &mut rng);
            let y = quad_feasible(2, &mut rng);
            let th: f64 = rng.random_range(0.0..1.0);
            let mid: Vec<f64> = x
                .iter()
                .zip(&y)
                .map(|(a, b)| th * a + (1.0 - th) * b)
                .collect();
            let gm = spec.eval_true(&mid).unwrap().1.value;
            let gx = spec.eval_true(&x).unwrap().1.value;
            let gy = spec.eval_true(&y).unwrap().1.value;
            assert!(gm <= th * gx + (1.0 - th) * gy + 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let specs = vec![
            make_quadratic_benchmark(2).unwrap(),
            make_quadratic_benchmark(4).unwrap(),
            make_nonconvex_benchmark(2, 0.5).unwrap(),
            make_smoothed_max_toy(0.1).unwrap(),
        ];
        let mut rng = rng();
        for spec in &specs {
            for _ in 0..100 {
                // Points near the start are feasible for every benchmark.
                let x: Vec<f64> = spec
                    .constants
                    .x_start
                    .iter()
                    .map(|v| v + rng.random_range(-0.05..0.05))
                    .collect();
                let h = 1e-5;
                for (which, pair) in [spec.eval_true(&x).unwrap().0, spec.eval_true(&x).unwrap().1]
                    .iter()
                    .enumerate()
                {
                    for k in 0..spec.dim {
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[k] += h;
                        xm[k] -= h;
                        let (fp, gp) = spec.eval_true(&xp).unwrap();
                        let (fm, gm) = spec.eval_true(&xm).unwrap();
                        let (vp, vm) = if which == 0 {
                            (fp.value, fm.value)
                        } else {
                            (gp.value, gm.value)
                        };
                        let fd = (vp - vm) / (2.0 * h);
                        let scale = pair.gradient[k].abs().max(1.0);
                        assert!(
                            (fd - pair.gradient[k]).abs() / scale <= 1e-5,
                            "{}: coord {k} fd {fd} vs analytic {}",
                            spec.name,
                            pair.gradient[k]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn nonconvex_benchmark_values_at_start() {
        let spec = make_nonconvex_benchmark(2, 0.5).unwrap();
        let x0 = spec.constants.x_start.clone();
        let (f, g) = spec.eval_true(&x0).unwrap();
        // r = 0.5 zeroes both quadratic terms at x0.
        assert_abs_diff_eq!(g.value, -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(f.value, (-4.0f64).exp(), epsilon = 1e-15);
        let (f0, _) = spec.eval_true(&[0.0, 0.0]).unwrap();
        assert_eq!(f0.gradient, vec![0.0, 0.0]);
    }

    #[test]
    fn nonconvex_hessian_spectral_norm_by_sampling() {
        // Spectral norm of (-8 I + 64 x x^T) exp(-4||x||^2) along any radius t
        // is max(|64 t^2 - 8|, 8) exp(-4 t^2); scan t densely.
        let mut m: f64 = 0.0;
        for i in 0..200_000 {
            let t = 3.0 * (i as f64) / 200_000.0;
            let e = (-4.0 * t * t).exp();
            m = m.max(((64.0 * t * t - 8.0).abs()).max(8.0) * e);
        }
        assert_abs_diff_eq!(m, 8.0, epsilon = 1e-9);
        let spec = make_nonconvex_benchmark(2, 0.5).unwrap();
        assert_eq!(spec.constants.m_f, 8.0);
        assert_abs_diff_eq!(spec.constants.m_g, 20.4, epsilon = 1e-12);
    }

    #[test]
    fn constructors_reject_bad_inputs() {
        assert!(make_quadratic_benchmark(1).is_err());
        assert!(make_nonconvex_benchmark(2, 0.0).is_err());
        assert!(make_nonconvex_benchmark(1, 0.5).is_err());
        assert!(make_smoothed_max_toy(0.0).is_err());
        let spec = make_quadratic_benchmark(2).unwrap();
        assert!(spec.eval_true(&[0.0]).is_err());
    }

    #[test]
    fn smoothed_abs_matches_quadrature() {
        // Independent oracle: integrate |z + nu u| against the semicircle
        // density with a trapezoid rule.
        let nu = 0.1;
        for &z in &[-0.15, -0.05, 0.0, 0.03, 0.09, 0.2] {
            let n = 400_000;
            let mut acc = 0.0;
            for i in 0..n {
                let u = -1.0 + 2.0 * (i as f64 + 0.5) / (n as f64);
                let w = (2.0 / std::f64::consts::PI) * (1.0 - u * u).sqrt();
                acc += w * (z + nu * u).abs();
            }
            acc *= 2.0 / (n as f64);
            assert_abs_diff_eq!(smoothed_abs(z, nu), acc, epsilon = 1e-6);
        }
        // Derivative consistency.
        for &z in &[-0.08, 0.0, 0.07] {
            let h = 1e-6;
            let fd = (smoothed_abs(z + h, nu) - smoothed_abs(z - h, nu)) / (2.0 * h);
            assert_abs_diff_eq!(smoothed_abs_deriv(z, nu), fd, epsilon = 1e-6);
        }
    }
}
