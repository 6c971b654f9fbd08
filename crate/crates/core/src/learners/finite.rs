use std::time::Instant;

use super::{check_range, Algorithm, Checkpoint, Estimate, RunConfig, RunRecord};
use crate::error::{Error, Result};
use crate::mdp::{FiniteHorizonMdp, QTable};
use crate::sampling::{CdfTable, StreamFactory};

/// The discount whose `1 - γ` equals `1/H`, used to instantiate
/// rescaled-linear schedules `1/(1 + c t / (H log^k T))` for horizon `H`.
pub fn finite_horizon_gamma(horizon: usize) -> f64 {
    1.0 - 1.0 / horizon as f64
}

/// Synchronous Q-learning for a finite-horizon MDP.
///
/// Each iteration sweeps `h = H, …, 1` (stored 0-based) and sets
/// `Q_{t,h} = (1-η_t) Q_{t-1,h} + η_t (r_h + max_{a'} Q_{t,h+1}(s_{t,h}, a'))`
/// with `Q_{t,H+1} = 0`. A time-invariant kernel is sampled once per
/// iteration and the draws are shared by every step; otherwise one table is
/// drawn per step. Iteration `t` reads stream `t`, one word per
/// `(step, state, action)` in that order.
pub fn run_finite_horizon_q(
    fmdp: &FiniteHorizonMdp,
    cfg: &RunConfig,
    oracle: Option<&[QTable]>,
) -> Result<RunRecord> {
    let start = Instant::now();
    cfg.validate()?;
    let (ns, na, horizon) = (fmdp.num_states(), fmdp.num_actions(), fmdp.horizon());
    let pairs = ns * na;
    if let Some(o) = oracle {
        if o.len() != horizon || o.iter().any(|q| q.num_states() != ns || q.num_actions() != na) {
            return Err(Error::Dimension("oracle does not match the finite-horizon MDP".into()));
        }
    }
    let upper: Vec<f64> = (0..horizon).flat_map(|h| std::iter::repeat_n(fmdp.value_bound(h), pairs)).collect();
    let flat_oracle: Option<Vec<f64>> = oracle.map(|o| o.iter().flat_map(|q| q.as_slice().to_vec()).collect());
    let mut q = cfg.init.materialize(horizon * pairs, flat_oracle.as_deref(), &upper)?;

    let cdfs: Vec<CdfTable> = fmdp.kernels().iter().map(|k| CdfTable::from_rows(k, ns)).collect();
    let tables = cdfs.len();
    let mut samples = vec![0usize; tables * pairs];
    let mut next_v = vec![0.0; ns];
    let streams = StreamFactory::new(cfg.seed);
    let mut checkpoints = Vec::new();

    for t in 1..=cfg.iterations {
        let eta = cfg.schedule.rate_unchecked(t);
        let mut rng = streams.stream(t);
        for (k, cdf) in cdfs.iter().enumerate() {
            for idx in 0..pairs {
                samples[k * pairs + idx] = cdf.sample(idx, &mut rng);
            }
        }
        next_v.fill(0.0);
        for h in (0..horizon).rev() {
            let k = if tables == 1 { 0 } else { h };
            let qh = &mut q[h * pairs..(h + 1) * pairs];
            for (idx, x) in qh.iter_mut().enumerate() {
                let (s, a) = (idx / na, idx % na);
                let target = fmdp.reward(h, s, a) + next_v[samples[k * pairs + idx]];
                *x = (1.0 - eta) * *x + eta * target;
            }
            for (s, slot) in next_v.iter_mut().enumerate() {
                *slot = qh[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
        }
        if cfg.is_checkpoint(t) {
            check_range(t, &q, &upper)?;
            let tables = split(&q, horizon, ns, na)?;
            let sup_error = oracle.map(|o| {
                tables.iter().zip(o).map(|(a, b)| a.sup_distance(b)).fold(0.0, f64::max)
            });
            checkpoints.push(Checkpoint {
                t,
                sup_error,
                snapshot: cfg.snapshots.then(|| Estimate::PerStep(tables)),
            });
        }
    }

    Ok(RunRecord {
        algorithm: Algorithm::FiniteQ,
        config: cfg.clone(),
        estimate: Estimate::PerStep(split(&q, horizon, ns, na)?),
        checkpoints,
        visit_counts: None,
        warnings: Vec::new(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn split(q: &[f64], horizon: usize, ns: usize, na: usize) -> Result<Vec<QTable>> {
    (0..horizon).map(|h| QTable::from_vec(ns, na, q[h * ns * na..(h + 1) * ns * na].to_vec())).collect()
}
