//! One-run orchestration: build the problem and oracle from a
//! [`RunConfig`], dispatch the requested algorithm, and assemble the trace
//! and ledger artifacts.

use crate::error::Result;
use crate::lbsgd::{lbsgd_solve, LbsgdConfig};
use crate::oracle::{NoiseModel, Oracle, QueryLedger, QueryOracle};
use crate::problem::{problem_by_name, ProblemSpec};
use crate::safepd::{convex_solve, safepd_solve};
use crate::scsa::{kkt_residual, scsa_solve, DualState, RunOutcome, ScsaConfig};
use crate::trace::{Algo, FeedbackKind, RunConfig, RunTrace, TRACE_SCHEMA_VERSION};
use crate::{run_rng, RunRng};

pub struct RunArtifacts {
    pub trace: RunTrace,
    pub ledger: QueryLedger,
}

fn make_oracle(spec: &ProblemSpec, config: &RunConfig) -> Result<Oracle> {
    let noise = NoiseModel::gaussian(config.sigma, config.sigma_hat)?;
    match config.feedback {
        FeedbackKind::FirstOrder => Ok(Oracle::new(spec, noise)),
        FeedbackKind::ZerothOrder => {
            Oracle::with_finite_differences(spec, noise, config.fd_h.unwrap_or(1e-3))
        }
    }
}

struct Solved {
    x: Vec<f64>,
    lambda: f64,
    outcome: RunOutcome,
    states: Vec<DualState>,
    preliminary_calls: u64,
    final_eta: f64,
}

fn dispatch(
    spec: &ProblemSpec,
    oracle: &mut Oracle,
    config: &RunConfig,
    rng: &mut RunRng,
) -> Result<Solved> {
    let consts = spec.constants.clone();
    let scfg = ScsaConfig::new(
        config.eps_p,
        config.eps_c,
        config.delta,
        config.max_oracle_calls,
    );
    match config.algo {
        Algo::Scsa => {
            let r = scsa_solve(&consts, oracle, &scfg, rng)?;
            Ok(Solved {
                x: r.x,
                lambda: r.lambda,
                outcome: r.outcome,
                states: r.states,
                preliminary_calls: r.preliminary_calls,
                final_eta: r.final_eta,
            })
        }
        Algo::Convex => {
            let eps = config.eps.unwrap_or(4.0 * config.eps_c);
            let r = convex_solve(&consts, oracle, &scfg, eps, rng)?;
            Ok(Solved {
                x: r.x,
                lambda: r.lambda,
                outcome: r.outcome,
                states: r.states,
                preliminary_calls: r.preliminary_calls,
                final_eta: r.final_eta,
            })
        }
        Algo::Safepd => {
            let rho_f = config.rho_f.unwrap_or(2.0 * consts.m_f);
            let rho_g = config.rho_g.unwrap_or(2.0 * consts.m_g);
            let r = safepd_solve(&consts, oracle, &scfg, rho_f, rho_g, rng)?;
            let final_eta = r.rounds.last().map_or(0.0, |s| s.eta);
            // outer rounds reuse the per-round record layout; ball-window
            // auditing does not apply to them
            let states = r
                .rounds
                .into_iter()
                .map(|s| DualState {
                    t: s.k,
                    x: s.x,
                    lambda: s.lambda,
                    g_hat: s.g_hat,
                    eta: s.eta,
                    eps: s.eta_check,
                    safety_radius: 0.0,
                    cumulative_calls: s.cumulative_calls,
                })
                .collect();
            Ok(Solved {
                x: r.x,
                lambda: r.lambda,
                outcome: r.outcome,
                states,
                preliminary_calls: 0,
                final_eta,
            })
        }
        Algo::Lbsgd => {
            let mut lcfg = LbsgdConfig::defaults(config.max_oracle_calls);
            lcfg.delta = config.delta;
            if let Some(b) = config.barrier_eta {
                lcfg.barrier_eta = b;
            }
            if let Some(s) = config.lbsgd_step {
                lcfg.step = s;
            }
            let r = lbsgd_solve(&consts, oracle, &lcfg, rng)?;
            Ok(Solved {
                x: r.x,
                lambda: 0.0,
                outcome: r.outcome,
                states: r.states,
                preliminary_calls: 0,
                final_eta: lcfg.barrier_eta,
            })
        }
    }
}

/// Execute one run and return its artifacts. Identical configs produce
/// byte-identical traces.
pub fn execute_run(config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let spec = problem_by_name(&config.problem, config.dim, config.r)?;
    let mut oracle = make_oracle(&spec, config)?;
    let mut rng = run_rng(config.seed);
    let solved = dispatch(&spec, &mut oracle, config, &mut rng)?;
    let final_kkt = kkt_residual(&spec, &solved.x, solved.lambda).ok();
    let trace = RunTrace {
        schema_version: TRACE_SCHEMA_VERSION,
        run_id: config.run_id(),
        config: config.clone(),
        preliminary_calls: solved.preliminary_calls,
        records: solved.states,
        final_x: solved.x,
        final_lambda: solved.lambda,
        final_eta: solved.final_eta,
        final_kkt,
        outcome: solved.outcome,
        total_oracle_calls: oracle.total_calls(),
    };
    Ok(RunArtifacts {
        trace,
        ledger: oracle.into_ledger(),
    })
}
