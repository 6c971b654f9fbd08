use std::time::Instant;

use super::{check_range, Algorithm, Checkpoint, Estimate, RunConfig, RunRecord};
use crate::chain::{behavior_chain, stationary_distribution, DEFAULT_STATIONARY_TOL};
use crate::error::Result;
use crate::mdp::{QTable, TabularMdp};
use crate::sampling::{BehaviorPolicy, RngStream, Trajectory};

/// Asynchronous Q-learning along one trajectory generated by `behavior`.
///
/// At step `t` only the pair `(s_{t-1}, a_{t-1})` is updated:
/// `Q_t(s,a) = (1-η_t) Q_{t-1}(s,a) + η_t (r(s,a) + γ max_{a'} Q_{t-1}(s_t, a'))`.
/// The trajectory starts at `cfg.start_state` and reads stream 0 of
/// `cfg.seed`. The record carries the visit counts `K_T(s, a)`.
///
/// If the behaviour chain does not look ergodic the run still executes and
/// a warning is attached.
pub fn run_async_q(
    mdp: &TabularMdp,
    behavior: &BehaviorPolicy,
    cfg: &RunConfig,
    oracle: Option<&QTable>,
) -> Result<RunRecord> {
    let start = Instant::now();
    cfg.validate()?;
    behavior.validate_for(mdp)?;
    if let Some(o) = oracle {
        mdp.check_q(o)?;
    }
    let mut warnings = Vec::new();
    let kernel = behavior_chain(mdp, behavior)?;
    if !stationary_distribution(&kernel, DEFAULT_STATIONARY_TOL).ergodic {
        warnings.push("behavior chain is not ergodic; some pairs may never be updated".to_string());
    }

    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let bound = [mdp.value_bound()];
    let mut q = cfg.init.materialize(ns * na, oracle.map(QTable::as_slice), &bound)?;
    let mut visits = vec![0u64; ns * na];
    let mut traj = Trajectory::new(mdp, behavior, cfg.start_state, RngStream::new(cfg.seed, 0))?;
    let g = mdp.discount();
    let mut checkpoints = Vec::new();

    for t in 1..=cfg.iterations {
        let eta = cfg.schedule.rate_unchecked(t);
        let (s, a, next) = traj.step();
        let idx = s * na + a;
        let mut best = f64::NEG_INFINITY;
        for a2 in 0..na {
            let j = next * na + a2;
            if mdp.mask()[j] && q[j] > best {
                best = q[j];
            }
        }
        q[idx] = (1.0 - eta) * q[idx] + eta * (mdp.rewards()[idx] + g * best);
        visits[idx] += 1;
        if cfg.is_checkpoint(t) {
            check_range(t, &q, &bound)?;
            let table = QTable::from_vec(ns, na, q.clone())?;
            checkpoints.push(Checkpoint {
                t,
                sup_error: oracle.map(|o| mdp.q_distance(&table, o)),
                snapshot: cfg.snapshots.then(|| Estimate::Q(table)),
            });
        }
    }

    Ok(RunRecord {
        algorithm: Algorithm::AsyncQ,
        config: cfg.clone(),
        estimate: Estimate::Q(QTable::from_vec(ns, na, q)?),
        checkpoints,
        visit_counts: Some(visits),
        warnings,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
