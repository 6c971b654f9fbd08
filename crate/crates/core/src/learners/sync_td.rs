use std::time::Instant;

use super::{check_range, Algorithm, Checkpoint, Estimate, RunConfig, RunRecord};
use crate::error::{Error, Result};
use crate::mdp::{TabularMrp, VTable};
use crate::sampling::{CdfTable, StreamFactory};

/// Synchronous TD(0) with a generative model: every iteration draws one
/// next state per state and sets
/// `V_t(s) = (1-η_t) V_{t-1}(s) + η_t (r(s) + γ V_{t-1}(s_t(s)))`.
///
/// Iteration `t` reads stream `t`, one word per state.
pub fn run_sync_td(mrp: &TabularMrp, cfg: &RunConfig, oracle: Option<&VTable>) -> Result<RunRecord> {
    let start = Instant::now();
    cfg.validate()?;
    let n = mrp.num_states();
    if oracle.is_some_and(|o| o.len() != n) {
        return Err(Error::Dimension("oracle does not match the MRP".into()));
    }
    let bound = [mrp.value_bound()];
    let mut v = cfg.init.materialize(n, oracle.map(VTable::as_slice), &bound)?;
    let mut prev = v.clone();
    let mut rows = Vec::with_capacity(n * n);
    for s in 0..n {
        rows.extend_from_slice(mrp.transition_row(s));
    }
    let cdf = CdfTable::from_rows(&rows, n);
    let streams = StreamFactory::new(cfg.seed);
    let g = mrp.discount();
    let mut checkpoints = Vec::new();

    for t in 1..=cfg.iterations {
        let eta = cfg.schedule.rate_unchecked(t);
        let mut rng = streams.stream(t);
        prev.copy_from_slice(&v);
        for (s, vs) in v.iter_mut().enumerate() {
            let next = cdf.sample(s, &mut rng);
            *vs = (1.0 - eta) * *vs + eta * (mrp.reward(s) + g * prev[next]);
        }
        if cfg.is_checkpoint(t) {
            check_range(t, &v, &bound)?;
            let table = VTable(v.clone());
            checkpoints.push(Checkpoint {
                t,
                sup_error: oracle.map(|o| table.sup_distance(o)),
                snapshot: cfg.snapshots.then(|| Estimate::V(table)),
            });
        }
    }

    Ok(RunRecord {
        algorithm: Algorithm::SyncTd,
        config: cfg.clone(),
        estimate: Estimate::V(VTable(v)),
        checkpoints,
        visit_counts: None,
        warnings: Vec::new(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::Schedule;

    #[test]
    fn full_steps_on_a_deterministic_chain_iterate_the_affine_map() {
        let mrp = TabularMrp::new(3, 0.5, vec![0., 1., 0., 0., 0., 1., 1., 0., 0.], vec![1.0, 0.0, 0.5]).unwrap();
        let cfg = RunConfig::new(Schedule::constant(1.0).unwrap(), 6, 9);
        let rec = run_sync_td(&mrp, &cfg, None).unwrap();
        let mut v = [0.0; 3];
        for _ in 0..6 {
            v = [1.0 + 0.5 * v[1], 0.5 * v[2], 0.5 + 0.5 * v[0]];
        }
        assert_eq!(rec.estimate.as_v().unwrap().as_slice(), &v);
    }

    #[test]
    fn self_loop_converges_to_closed_form() {
        let mrp = TabularMrp::new(1, 0.5, vec![1.0], vec![1.0]).unwrap();
        let t = 1000;
        let cfg = RunConfig::new(Schedule::rescaled_linear(1.0, 2, t, 0.5).unwrap(), t, 1);
        let rec = run_sync_td(&mrp, &cfg, Some(&VTable(vec![2.0]))).unwrap();
        assert!(rec.final_error().unwrap() < 1e-3);
    }

    #[test]
    fn oracle_shape_is_checked() {
        let mrp = TabularMrp::new(1, 0.5, vec![1.0], vec![1.0]).unwrap();
        let cfg = RunConfig::new(Schedule::Linear, 3, 0);
        assert!(run_sync_td(&mrp, &cfg, Some(&VTable(vec![1.0, 2.0]))).is_err());
    }
}
