//! Safe black-box constrained optimization with primal-dual methods.
//!
//! The crate solves `min f(x) s.t. g(x) <= 0` where `f` and `g` are only
//! reachable through a noisy first-order oracle, and every query issued
//! during the run must itself be feasible. Three solver entry points cover
//! the convexity classes:
//!
//! - [`scsa::scsa_solve`] — dual gradient ascent with safety-ball-restricted
//!   primal solves, for strongly convex problems;
//! - [`safepd::convex_solve`] — regularization wrapper that reduces a merely
//!   convex problem to the strongly convex case;
//! - [`safepd::safepd_solve`] — moving-proximal-center outer loop for
//!   non-convex problems.
//!
//! Supporting machinery: [`problem`] holds analytic benchmark definitions
//! with their regularity constants, [`oracle`] simulates the stochastic
//! feedback (including a finite-difference adapter and randomized smoothing
//! for max-of-constraints reductions), [`inner`] provides the feasible
//! inner solvers, [`verify`] contains brute-force duality oracles and the
//! safety auditor, and [`trace`]/[`bench`] handle run artifacts.
//!
//! Solvers never see analytic ground truth: they receive a
//! [`problem::ProblemConstants`] view and an oracle handle. Exact values are
//! reserved for the auditor and the verification oracles.

pub mod bench;
pub mod error;
pub mod inner;
pub mod lbsgd;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod runner;
pub mod safepd;
pub mod scsa;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};

/// The run-owned random number generator. One seeded instance drives all
/// noise, smoothing and solver randomness so a `(config, seed)` pair is
/// bit-reproducible.
pub type RunRng = rand_chacha::ChaCha12Rng;

/// Construct the run RNG for a seed.
pub fn run_rng(seed: u64) -> RunRng {
    use rand::SeedableRng;
    RunRng::seed_from_u64(seed)
}
