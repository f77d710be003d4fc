//! Benchmark harness: run an algorithm/seed cross-product and emit per-run
//! best-so-far gap curves sampled at shared call budgets, so min/median/max
//! bands across seeds line up without interpolation.

use log::warn;

use crate::error::Result;
use crate::problem::problem_by_name;
use crate::runner::execute_run;
use crate::trace::{Algo, RunConfig};
use crate::verify::audit_trace;

/// Logarithmically spaced call budgets: `points` values from 100 up to the
/// budget (inclusive), deduplicated.
pub fn log_checkpoints(budget: u64, points: usize) -> Vec<u64> {
    let lo = 100.0f64.min(budget as f64);
    let hi = budget as f64;
    let mut out = Vec::with_capacity(points);
    for i in 0..points {
        let t = if points > 1 {
            i as f64 / (points - 1) as f64
        } else {
            1.0
        };
        let v = (lo.ln() + t * (hi.ln() - lo.ln())).exp().round() as u64;
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub algo: &'static str,
    pub seed: u64,
    pub calls: u64,
    pub violations: u64,
    /// Best-so-far objective gap (or raw objective when the optimum is
    /// unknown) at each checkpoint.
    pub gaps: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BenchOutput {
    pub checkpoints: Vec<u64>,
    pub rows: Vec<BenchRow>,
}

impl BenchOutput {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,seed,calls,violations");
        for c in &self.checkpoints {
            out.push_str(&format!(",gap_at_{c}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                row.algo, row.seed, row.calls, row.violations
            ));
            for g in &row.gaps {
                out.push_str(&format!(",{g:.9e}"));
            }
            out.push('\n');
        }
        out
    }

    /// Median gap of one algorithm at one checkpoint index.
    pub fn median_gap(&self, algo: &str, checkpoint_idx: usize) -> Option<f64> {
        let mut vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.algo == algo)
            .filter_map(|r| r.gaps.get(checkpoint_idx).copied())
            .collect();
        if vals.is_empty() {
            return None;
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(median_of_sorted(&vals))
    }
}

pub fn median_of_sorted(vals: &[f64]) -> f64 {
    let n = vals.len();
    if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    }
}

/// Run `algos x seeds` with the base configuration and collect gap curves
/// and per-run audit counts. Partial failures are recorded and skipped.
pub fn run_bench(base: &RunConfig, algos: &[Algo], seeds: &[u64]) -> Result<BenchOutput> {
    let checkpoints = log_checkpoints(base.max_oracle_calls, 32);
    let mut rows = Vec::with_capacity(algos.len() * seeds.len());
    if seeds.is_empty() {
        warn!("bench invoked with zero seeds; emitting an empty summary");
    }
    for &algo in algos {
        for &seed in seeds {
            let mut config = base.clone();
            config.algo = algo;
            config.seed = seed;
            let artifacts = match execute_run(&config) {
                Ok(a) => a,
                Err(e) => {
                    warn!("bench run {} seed {seed} failed: {e}", algo.name());
                    continue;
                }
            };
            let spec = problem_by_name(&config.problem, config.dim, config.r)?;
            let audit = audit_trace(&artifacts.trace, &artifacts.ledger, &spec)?;

            // iterate trajectory: start, per-round centers, final point
            let f_star = spec.f_star;
            let f_of = |x: &[f64]| spec.eval_true(x).map(|(f, _)| f.value);
            let mut points: Vec<(u64, f64)> = Vec::new();
            points.push((0, f_of(&spec.constants.x_start)?));
            for rec in &artifacts.trace.records {
                points.push((rec.cumulative_calls, f_of(&rec.x)?));
            }
            points.push((artifacts.trace.total_oracle_calls, f_of(&artifacts.trace.final_x)?));

            let gap = |f: f64| f_star.map_or(f, |fs| f - fs);
            let mut gaps = Vec::with_capacity(checkpoints.len());
            for &c in &checkpoints {
                let mut best = f64::INFINITY;
                for &(calls, f) in &points {
                    if calls <= c {
                        best = best.min(gap(f));
                    }
                }
                // best-so-far never worsens as the budget grows
                if let Some(&prev) = gaps.last() {
                    best = best.min(prev);
                }
                gaps.push(best);
            }
            rows.push(BenchRow {
                algo: algo.name(),
                seed,
                calls: artifacts.trace.total_oracle_calls,
                violations: audit.violations,
                gaps,
            });
        }
    }
    Ok(BenchOutput { checkpoints, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::FeedbackKind;

    fn base_config(budget: u64) -> RunConfig {
        RunConfig {
            problem: "quadratic".into(),
            dim: 2,
            r: None,
            sigma: 0.0,
            sigma_hat: 0.0,
            algo: Algo::Scsa,
            eps_p: 0.1,
            eps_c: 0.1,
            eps: None,
            delta: 0.01,
            max_oracle_calls: budget,
            seed: 0,
            feedback: FeedbackKind::FirstOrder,
            fd_h: None,
            barrier_eta: None,
            lbsgd_step: None,
            rho_f: None,
            rho_g: None,
        }
    }

    #[test]
    fn checkpoints_are_log_spaced_and_end_at_budget() {
        let cs = log_checkpoints(1_000_000, 32);
        assert_eq!(*cs.first().unwrap(), 100);
        assert_eq!(*cs.last().unwrap(), 1_000_000);
        assert!(cs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_run_yields_single_row() {
        let out = run_bench(&base_config(50_000), &[Algo::Scsa], &[3]).unwrap();
        assert_eq!(out.rows.len(), 1);
        let row = &out.rows[0];
        assert_eq!(row.algo, "scsa");
        assert_eq!(row.violations, 0);
        // best-so-far is monotone non-increasing
        assert!(row.gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn zero_seeds_yield_empty_summary() {
        let out = run_bench(&base_config(10_000), &[Algo::Scsa], &[]).unwrap();
        assert!(out.rows.is_empty());
        let csv = out.to_csv();
        assert!(csv.starts_with("algorithm,seed,calls,violations"));
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn cross_product_row_count() {
        let out = run_bench(
            &base_config(20_000),
            &[Algo::Scsa, Algo::Lbsgd],
            &[1, 2],
        )
        .unwrap();
        assert_eq!(out.rows.len(), 4);
        assert!(out.median_gap("scsa", 0).is_some());
        assert!(out.median_gap("lbsgd-simplified", 0).is_some());
    }
}
