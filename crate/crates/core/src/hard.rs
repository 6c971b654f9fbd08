//! The four-state lower-bound instance, its closed-form optimal values, and
//! Monte Carlo bias/variance probes of synchronous Q-learning on it.
//!
//! States are `0..4`. Only state 1 has two actions; they share one kernel
//! row but receive independent samples. Actions are 0-based, so the
//! instance's action `1` is stored as `0` and action `2` as `1`. Every other
//! state allows action `0` only.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{run_sync_q, RunConfig};
use crate::mdp::{QTable, TabularMdp, TabularMrp};
use crate::sampling::derive_seed;
use crate::schedules::{shrinkage_product, Schedule, ScheduleSpec, Q_LEARNING_LOG_EXPONENT};

/// Smallest discount for which the instance is defined.
pub const MIN_GAMMA: f64 = 0.75;
/// Runs used by the probe when the caller does not choose.
pub const DEFAULT_PROBE_RUNS: usize = 200;
/// Below this many runs the probe attaches an "insufficient runs" warning.
pub const MIN_RELIABLE_RUNS: usize = 10;

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= MIN_GAMMA && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("hard instance needs gamma in [0.75, 1), got {gamma}")));
    }
    Ok(())
}

/// Self-transition probability of states 1 and 2: `p = (4γ - 1)/(3γ)`.
pub fn hard_p(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok((4.0 * gamma - 1.0) / (3.0 * gamma))
}

/// Builds the instance at discount `gamma ∈ [3/4, 1)`.
pub fn build_hard_mdp(gamma: f64) -> Result<TabularMdp> {
    let p = hard_p(gamma)?;
    let q = 1.0 - p;
    #[rustfmt::skip]
    let transition = vec![
        1.0, 0.0, 0.0, 0.0,   1.0, 0.0, 0.0, 0.0,
        q,   p,   0.0, 0.0,   q,   p,   0.0, 0.0,
        q,   0.0, p,   0.0,   0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,   0.0, 0.0, 0.0, 1.0,
    ];
    let reward = vec![0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0];
    let mask = vec![true, false, true, true, true, false, true, false];
    TabularMdp::new(4, 2, gamma, transition, reward, Some(mask))
}

/// The instance with state 1 reduced to a single action: a four-state MRP
/// with the same kernel and rewards.
pub fn matched_mrp(gamma: f64) -> Result<TabularMrp> {
    let p = hard_p(gamma)?;
    let q = 1.0 - p;
    #[rustfmt::skip]
    let transition = vec![
        1.0, 0.0, 0.0, 0.0,
        q,   p,   0.0, 0.0,
        q,   0.0, p,   0.0,
        0.0, 0.0, 0.0, 1.0,
    ];
    TabularMrp::new(4, gamma, transition, vec![0.0, 1.0, 1.0, 1.0])
}

/// Closed-form optimal values of the instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardMdpOracle {
    pub gamma: f64,
    pub p: f64,
    /// `V★ = (0, 3/(4(1-γ)), 3/(4(1-γ)), 1/(1-γ))`.
    pub v_star: Vec<f64>,
    /// `[s][a]` with 0-based actions; masked entries are 0.
    pub q_star: QTable,
}

pub fn hard_oracle(gamma: f64) -> Result<HardMdpOracle> {
    let p = hard_p(gamma)?;
    let h = 1.0 / (1.0 - gamma);
    let v_star = vec![0.0, 0.75 * h, 0.75 * h, h];
    let q_star = QTable::from_vec(4, 2, vec![0.0, 0.0, v_star[1], v_star[1], v_star[2], 0.0, v_star[3], 0.0])?;
    Ok(HardMdpOracle {
        gamma,
        p,
        v_star,
        q_star,
    })
}

/// `V_T(3)` of synchronous Q-learning started at zero:
/// `V★(3) - (1/(1-γ)) Π_{i≤T} (1 - η_i (1-γ))`. State 3 is a noiseless
/// self-loop, so this holds for every seed.
pub fn state3_closed_form(schedule: &Schedule, iterations: u64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let h = 1.0 / (1.0 - gamma);
    Ok(h - h * shrinkage_product(schedule, iterations, 1.0 - gamma)?)
}

/// Monte Carlo estimate of the bias and variance of `V_T(state)` with the
/// matched decomposition `mse = bias² + variance` (all moments use `1/n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceEstimate {
    pub state: usize,
    pub mean_estimate: f64,
    /// `mean(V_T(state)) - V★(state)`, sign preserved.
    pub bias: f64,
    pub squared_bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub num_runs: usize,
    /// Jackknife standard errors.
    pub bias_se: f64,
    pub squared_bias_se: f64,
    pub variance_se: f64,
    pub mse_se: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl BiasVarianceEstimate {
    /// Summarizes per-run estimates of a state's value against `target`.
    pub fn from_samples(state: usize, samples: &[f64], target: f64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!("bias/variance needs at least 2 runs, got {n}")));
        }
        let nf = n as f64;
        let dev: Vec<f64> = samples.iter().map(|x| x - target).collect();
        let s1: f64 = dev.iter().sum();
        let s2: f64 = dev.iter().map(|d| d * d).sum();
        let stats = |m1: f64, m2: f64| [m1, m1 * m1, (m2 - m1 * m1).max(0.0), m2];
        let full = {
            let m1 = s1 / nf;
            let var = dev.iter().map(|d| (d - m1) * (d - m1)).sum::<f64>() / nf;
            [m1, m1 * m1, var, m1 * m1 + var]
        };
        let loo: Vec<[f64; 4]> =
            dev.iter().map(|d| stats((s1 - d) / (nf - 1.0), (s2 - d * d) / (nf - 1.0))).collect();
        let mut se = [0.0; 4];
        for (k, slot) in se.iter_mut().enumerate() {
            let mean = loo.iter().map(|x| x[k]).sum::<f64>() / nf;
            let ss: f64 = loo.iter().map(|x| (x[k] - mean).powi(2)).sum();
            *slot = ((nf - 1.0) / nf * ss).sqrt();
        }
        let mut warnings = Vec::new();
        if n < MIN_RELIABLE_RUNS {
            warnings.push(format!("insufficient runs: {n} < {MIN_RELIABLE_RUNS}, standard errors are unreliable"));
        }
        Ok(Self {
            state,
            mean_estimate: target + full[0],
            bias: full[0],
            squared_bias: full[1],
            variance: full[2],
            mse: full[3],
            num_runs: n,
            bias_se: se[0],
            squared_bias_se: se[1],
            variance_se: se[2],
            mse_se: se[3],
            warnings,
        })
    }

    /// True when `bias - z · bias_se > 0`.
    pub fn positive_bias(&self, z: f64) -> bool {
        self.bias - z * self.bias_se > 0.0
    }
}

/// Configuration of [`bias_variance_probe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub gamma: f64,
    pub schedule: ScheduleSpec,
    pub iterations: u64,
    /// One run per seed.
    pub seeds: Vec<u64>,
    pub state: usize,
}

impl ProbeConfig {
    /// `num_runs` seeds derived from `base_seed` and the run index.
    pub fn new(gamma: f64, schedule: ScheduleSpec, iterations: u64, num_runs: usize, base_seed: u64, state: usize) -> Self {
        Self {
            gamma,
            schedule,
            iterations,
            seeds: (0..num_runs as u64).map(|i| derive_seed(base_seed, &[i])).collect(),
            state,
        }
    }
}

/// Runs synchronous Q-learning on the instance once per seed, in parallel,
/// and decomposes the error of `V_T(state) = max_a Q_T(state, a)`.
pub fn bias_variance_probe(cfg: &ProbeConfig) -> Result<BiasVarianceEstimate> {
    let mdp = build_hard_mdp(cfg.gamma)?;
    let oracle = hard_oracle(cfg.gamma)?;
    if cfg.state >= 4 {
        return Err(Error::InvalidParameter(format!("state {} out of range", cfg.state)));
    }
    if cfg.seeds.len() < 2 {
        return Err(Error::InsufficientData(format!("probe needs at least 2 runs, got {}", cfg.seeds.len())));
    }
    let schedule = cfg.schedule.bind(cfg.iterations, cfg.gamma, Q_LEARNING_LOG_EXPONENT)?;
    let samples = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = RunConfig::new(schedule.clone(), cfg.iterations, seed);
            let rec = run_sync_q(&mdp, &run, None)?;
            let q = rec.estimate.as_q().expect("sync Q yields a Q table");
            Ok(mdp.state_values(q).get(cfg.state))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut est = BiasVarianceEstimate::from_samples(cfg.state, &samples, oracle.v_star[cfg.state])?;
    let distinct: HashSet<u64> = cfg.seeds.iter().copied().collect();
    if distinct.len() < cfg.seeds.len() {
        est.warnings.push(format!(
            "degenerate seeds: {} of {} runs reuse a seed",
            cfg.seeds.len() - distinct.len(),
            cfg.seeds.len()
        ));
    }
    Ok(est)
}
