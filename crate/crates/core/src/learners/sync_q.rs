use std::time::Instant;

use super::{check_range, Algorithm, Checkpoint, Estimate, RunConfig, RunRecord};
use crate::error::Result;
use crate::mdp::{QTable, TabularMdp};
use crate::sampling::{GenerativeModel, StreamFactory, SyncSampleTable};

/// Supplies the sample table `P_t` for iteration `t`.
pub trait SampleSource {
    fn fill(&mut self, t: u64, out: &mut SyncSampleTable);
}

/// The default generative model: iteration `t` reads stream `t` of the seed.
#[derive(Debug, Clone)]
pub struct SeededSampler<'a> {
    model: GenerativeModel<'a>,
    streams: StreamFactory,
}

impl<'a> SeededSampler<'a> {
    pub fn new(mdp: &'a TabularMdp, seed: u64) -> Self {
        Self {
            model: GenerativeModel::new(mdp),
            streams: StreamFactory::new(seed),
        }
    }
}

impl SampleSource for SeededSampler<'_> {
    #[inline]
    fn fill(&mut self, t: u64, out: &mut SyncSampleTable) {
        self.model.draw_into(&mut self.streams.stream(t), out);
    }
}

/// Synchronous Q-learning with a generative model:
/// `Q_t = (1-η_t) Q_{t-1} + η_t T_t(Q_{t-1})` for `t = 1..T`.
pub fn run_sync_q(mdp: &TabularMdp, cfg: &RunConfig, oracle: Option<&QTable>) -> Result<RunRecord> {
    run_sync_q_with(mdp, cfg, oracle, &mut SeededSampler::new(mdp, cfg.seed))
}

/// [`run_sync_q`] with an explicit sample source.
pub fn run_sync_q_with<S: SampleSource>(
    mdp: &TabularMdp,
    cfg: &RunConfig,
    oracle: Option<&QTable>,
    source: &mut S,
) -> Result<RunRecord> {
    let start = Instant::now();
    cfg.validate()?;
    if let Some(o) = oracle {
        mdp.check_q(o)?;
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let bound = [mdp.value_bound()];
    let mut q = cfg.init.materialize(ns * na, oracle.map(QTable::as_slice), &bound)?;
    let mut v = vec![0.0; ns];
    let mut samples = SyncSampleTable::new(ns, na);
    let mut checkpoints = Vec::new();
    let g = mdp.discount();

    for t in 1..=cfg.iterations {
        let eta = cfg.schedule.rate_unchecked(t);
        mdp.state_values_into(&q, &mut v);
        source.fill(t, &mut samples);
        for (idx, qi) in q.iter_mut().enumerate() {
            let target = if mdp.mask()[idx] {
                mdp.rewards()[idx] + g * v[samples.as_slice()[idx]]
            } else {
                0.0
            };
            *qi = (1.0 - eta) * *qi + eta * target;
        }
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
        algorithm: Algorithm::SyncQ,
        config: cfg.clone(),
        estimate: Estimate::Q(QTable::from_vec(ns, na, q)?),
        checkpoints,
        visit_counts: None,
        warnings: Vec::new(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
