//! The four stochastic learners: synchronous Q-learning, synchronous TD
//! learning, asynchronous Q-learning on a Markovian trajectory, and
//! finite-horizon synchronous Q-learning.
//!
//! Every learner takes a [`RunConfig`] and returns a [`RunRecord`]. A run is
//! a pure function of its config: the same config reproduces the same
//! record bit for bit (wall time aside).

mod async_q;
mod finite;
mod sync_q;
mod sync_td;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{QTable, VTable};
use crate::schedules::Schedule;

pub use async_q::run_async_q;
pub use finite::{finite_horizon_gamma, run_finite_horizon_q};
pub use sync_q::{run_sync_q, run_sync_q_with, SampleSource, SeededSampler};
pub use sync_td::run_sync_td;

/// Slack allowed on the admissible range `[0, bound]` for rounding.
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    SyncQ,
    SyncTd,
    AsyncQ,
    FiniteQ,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::SyncQ => "sync_q",
            Algorithm::SyncTd => "sync_td",
            Algorithm::AsyncQ => "async_q",
            Algorithm::FiniteQ => "finite_q",
        })
    }
}

/// Starting estimate of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialValue {
    #[default]
    Zeros,
    /// Start at the supplied oracle.
    Optimal,
    /// Every entry equal to the given value.
    Constant(f64),
    /// Flat table in the learner's layout (`[s][a]`, `[s]`, or `[h][s][a]`).
    Custom(Vec<f64>),
}

impl InitialValue {
    pub(crate) fn materialize(&self, len: usize, oracle: Option<&[f64]>, upper: &[f64]) -> Result<Vec<f64>> {
        let values = match self {
            InitialValue::Zeros => vec![0.0; len],
            InitialValue::Constant(c) => vec![*c; len],
            InitialValue::Optimal => oracle
                .ok_or_else(|| Error::InvalidParameter("initial value `optimal` needs an oracle".into()))?
                .to_vec(),
            InitialValue::Custom(v) => v.clone(),
        };
        if values.len() != len {
            return Err(Error::Dimension(format!("initial table has {} entries, expected {len}", values.len())));
        }
        for (x, &hi) in values.iter().zip(upper.iter().cycle()) {
            if !(*x >= 0.0 && *x <= hi) {
                return Err(Error::InvalidParameter(format!("initial value {x} outside [0, {hi}]")));
            }
        }
        Ok(values)
    }
}

/// Parameters of one learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schedule: Schedule,
    pub iterations: u64,
    pub seed: u64,
    #[serde(default)]
    pub init: InitialValue,
    /// Record a checkpoint every this many iterations; 0 records only the end.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Store the full estimate at every checkpoint.
    #[serde(default)]
    pub snapshots: bool,
    /// Initial state of the trajectory (asynchronous learner only).
    #[serde(default)]
    pub start_state: usize,
}

impl RunConfig {
    pub fn new(schedule: Schedule, iterations: u64, seed: u64) -> Self {
        Self {
            schedule,
            iterations,
            seed,
            init: InitialValue::Zeros,
            checkpoint_every: 0,
            snapshots: false,
            start_state: 0,
        }
    }

    pub fn with_init(mut self, init: InitialValue) -> Self {
        self.init = init;
        self
    }

    pub fn with_checkpoints(mut self, every: u64) -> Self {
        self.checkpoint_every = every;
        self
    }

    pub fn with_snapshots(mut self) -> Self {
        self.snapshots = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("a run needs at least one iteration".into()));
        }
        self.schedule.validate()
    }

    pub(crate) fn is_checkpoint(&self, t: u64) -> bool {
        t == self.iterations || (self.checkpoint_every > 0 && t % self.checkpoint_every == 0)
    }
}

/// Final or intermediate estimate produced by a learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    Q(QTable),
    V(VTable),
    /// One Q table per step of a finite-horizon problem.
    PerStep(Vec<QTable>),
}

impl Estimate {
    pub fn as_q(&self) -> Option<&QTable> {
        match self {
            Estimate::Q(q) => Some(q),
            _ => None,
        }
    }

    pub fn as_v(&self) -> Option<&VTable> {
        match self {
            Estimate::V(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_per_step(&self) -> Option<&[QTable]> {
        match self {
            Estimate::PerStep(q) => Some(q),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    /// Sup-norm distance to the oracle, when one was supplied.
    pub sup_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Estimate>,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub config: RunConfig,
    pub estimate: Estimate,
    pub checkpoints: Vec<Checkpoint>,
    /// `K_T(s, a)` for the asynchronous learner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visit_counts: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub wall_time_secs: f64,
}

impl RunRecord {
    /// Error at the last checkpoint.
    pub fn final_error(&self) -> Option<f64> {
        self.checkpoints.last().and_then(|c| c.sup_error)
    }

    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        RunRecord {
            wall_time_secs: 0.0,
            ..self.clone()
        } == RunRecord {
            wall_time_secs: 0.0,
            ..other.clone()
        }
    }

    /// Checkpoint series as CSV with columns `t,sup_error`.
    pub fn checkpoints_csv(&self) -> String {
        let mut out = String::from("t,sup_error\n");
        for c in &self.checkpoints {
            let err = c.sup_error.map(|e| e.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{}\n", c.t, err));
        }
        out
    }
}

/// Fails if any entry left `[0, upper]` (upper bounds cycle over `values`).
pub(crate) fn check_range(t: u64, values: &[f64], upper: &[f64]) -> Result<()> {
    for (&x, &hi) in values.iter().zip(upper.iter().cycle()) {
        let slack = RANGE_SLACK * hi.max(1.0);
        if !(x >= -slack && x <= hi + slack) {
            return Err(Error::RangeViolation { t, value: x, upper: hi });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_materialization() {
        let up = [2.0];
        assert_eq!(InitialValue::Zeros.materialize(3, None, &up).unwrap(), vec![0.0; 3]);
        assert!(InitialValue::Constant(3.0).materialize(3, None, &up).is_err());
        assert!(InitialValue::Optimal.materialize(2, None, &up).is_err());
        assert_eq!(InitialValue::Optimal.materialize(2, Some(&[1.0, 2.0]), &up).unwrap(), vec![1.0, 2.0]);
        assert!(InitialValue::Custom(vec![1.0]).materialize(2, None, &up).is_err());
    }

    #[test]
    fn checkpoint_schedule() {
        let cfg = RunConfig::new(Schedule::Linear, 10, 0).with_checkpoints(4);
        let ts: Vec<u64> = (1..=10).filter(|&t| cfg.is_checkpoint(t)).collect();
        assert_eq!(ts, vec![4, 8, 10]);
        let cfg = RunConfig::new(Schedule::Linear, 10, 0);
        assert_eq!((1..=10).filter(|&t| cfg.is_checkpoint(t)).count(), 1);
    }

    #[test]
    fn config_json_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"schedule":{"kind":"linear"},"iterations":5,"seed":1}"#).unwrap();
        assert_eq!(cfg, RunConfig::new(Schedule::Linear, 5, 1));
        let json = serde_json::to_string(&cfg.clone().with_init(InitialValue::Constant(0.5))).unwrap();
        assert!(json.contains(r#""init":{"constant":0.5}"#));
    }
}
