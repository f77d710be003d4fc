//! Run configuration and the serialized run trace.
//!
//! Traces are JSON with a schema-version field; ledgers are CSV. Identical
//! `(config, seed)` pairs produce byte-identical artifacts, which the test
//! suite relies on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scsa::{DualState, KKTResidual, RunOutcome};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Scsa,
    Convex,
    Safepd,
    Lbsgd,
}

impl Algo {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "scsa" => Ok(Algo::Scsa),
            "convex" => Ok(Algo::Convex),
            "safepd" => Ok(Algo::Safepd),
            "lbsgd" => Ok(Algo::Lbsgd),
            other => Err(Error::Input(format!("unknown algorithm '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algo::Scsa => "scsa",
            Algo::Convex => "convex",
            Algo::Safepd => "safepd",
            // labeled explicitly as the simplified stand-in
            Algo::Lbsgd => "lbsgd-simplified",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    FirstOrder,
    ZerothOrder,
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    /// Benchmark name: `quadratic` or `nonconvex-gaussian`.
    pub problem: String,
    pub dim: usize,
    /// Constraint radius of the non-convex benchmark.
    #[serde(default)]
    pub r: Option<f64>,
    pub sigma: f64,
    pub sigma_hat: f64,
    pub algo: Algo,
    pub eps_p: f64,
    pub eps_c: f64,
    /// Objective-gap target of the convex wrapper.
    #[serde(default)]
    pub eps: Option<f64>,
    pub delta: f64,
    pub max_oracle_calls: u64,
    pub seed: u64,
    pub feedback: FeedbackKind,
    /// Finite-difference step in zeroth-order mode.
    #[serde(default)]
    pub fd_h: Option<f64>,
    /// Barrier weight of the log-barrier baseline.
    #[serde(default)]
    pub barrier_eta: Option<f64>,
    /// Fixed step of the log-barrier baseline.
    #[serde(default)]
    pub lbsgd_step: Option<f64>,
    /// Proximal weights of the non-convex loop (default `2 M_f`, `2 M_g`).
    #[serde(default)]
    pub rho_f: Option<f64>,
    #[serde(default)]
    pub rho_g: Option<f64>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Input("dim must be at least 2".into()));
        }
        if self.max_oracle_calls == 0 {
            return Err(Error::Input("budget must be positive".into()));
        }
        if !(self.eps_p > 0.0 && self.eps_c > 0.0) {
            return Err(Error::Input("accuracy targets must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Input("delta must lie in (0, 1)".into()));
        }
        if self.feedback == FeedbackKind::ZerothOrder && self.fd_h.map_or(true, |h| h <= 0.0) {
            return Err(Error::Input(
                "zeroth-order mode needs a positive fd_h".into(),
            ));
        }
        Ok(())
    }

    /// Stable identifier of `(config, seed)`, embedded in both artifacts so
    /// the auditor can refuse mismatched pairs.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Full artifact of one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunTrace {
    pub schema_version: u32,
    pub run_id: String,
    pub config: RunConfig,
    /// Oracle calls consumed before the first dual round; ball-containment
    /// auditing starts after this point.
    pub preliminary_calls: u64,
    pub records: Vec<DualState>,
    pub final_x: Vec<f64>,
    pub final_lambda: f64,
    pub final_eta: f64,
    /// Filled by the runner from analytic ground truth; solvers cannot.
    pub final_kkt: Option<KKTResidual>,
    pub outcome: RunOutcome,
    pub total_oracle_calls: u64,
}

impl RunTrace {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let trace: RunTrace =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("trace: {e}")))?;
        if trace.schema_version != TRACE_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported trace schema version {}",
                trace.schema_version
            )));
        }
        Ok(trace)
    }

    /// Invariant check: cumulative call counts never decrease and the last
    /// record stays within the reported total.
    pub fn calls_consistent(&self) -> bool {
        let mut prev = self.preliminary_calls;
        for r in &self.records {
            if r.cumulative_calls < prev {
                return false;
            }
            prev = r.cumulative_calls;
        }
        prev <= self.total_oracle_calls
    }
}
