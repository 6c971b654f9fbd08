//! Experiment suites: grids of discount factors and iteration budgets,
//! many seeded runs per cell, and least-squares fits of scaling exponents
//! on log–log medians.
//!
//! Every run in a sweep draws from its own seed, derived from the sweep seed
//! and the cell coordinates `(γ, T, run)`. Removing or adding cells
//! therefore never changes the numbers of the remaining cells, and results
//! do not depend on the number of worker threads.

pub mod stats;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{behavior_chain, stationary_distribution, DEFAULT_STATIONARY_TOL};
use crate::error::{Error, Result};
use crate::hard::{
    bias_variance_probe, build_hard_mdp, hard_oracle, matched_mrp, state3_closed_form, BiasVarianceEstimate,
    ProbeConfig, MIN_RELIABLE_RUNS,
};
use crate::learners::{
    finite_horizon_gamma, run_async_q, run_finite_horizon_q, run_sync_q, run_sync_td, Algorithm, Estimate,
    InitialValue, RunConfig, RunRecord,
};
use crate::mdp::random::{random_finite_horizon, random_mdp, random_mrp};
use crate::mdp::{backward_induction, value_iteration, FiniteHorizonMdp, QTable, TabularMdp, TabularMrp, VTable};
use crate::sampling::{derive_seed, BehaviorPolicy, RngStream};
use crate::schedules::{ScheduleSpec, Q_LEARNING_LOG_EXPONENT, TD_LOG_EXPONENT};
use stats::{median, ols, quartiles, rms, std_dev};

/// Seed-level bootstrap resamples used for slope standard errors.
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;
/// Environment variable that fixes the number of worker threads.
pub const WORKERS_ENV: &str = "QLAB_WORKERS";
/// Attached to every fit.
pub const LOG_FACTOR_NOTE: &str =
    "fits ignore the 1/log^2(T) factor of the lower bound; at these T it is indistinguishable from a constant";

const ORACLE_TOL: f64 = 1e-12;
const ORACLE_MAX_ITERS: usize = 100_000_000;
const BOOTSTRAP_KEY: u64 = 0xB007;

/// Where the model of an experiment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    /// The four-state lower-bound MDP at the cell's discount.
    Hard,
    /// The same instance with state 1 reduced to one action (an MRP).
    HardMrp,
    /// A model file; the cell's discount, when given, replaces the file's.
    File { path: PathBuf },
    /// A random instance (Dirichlet rows, uniform rewards).
    Random {
        states: usize,
        actions: usize,
        seed: u64,
        /// Finite-horizon only: one kernel per step instead of a shared one.
        #[serde(default)]
        time_varying: bool,
    },
}

impl InstanceSource {
    /// Resolves a relative file path against `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        match self {
            InstanceSource::File { path } if path.is_relative() => InstanceSource::File { path: base.join(path) },
            other => other.clone(),
        }
    }
}

/// Behaviour policy of the asynchronous learner.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorSource {
    /// Uniform over the allowed actions of each state.
    #[default]
    Uniform,
    File { path: PathBuf },
    Table { probabilities: Vec<Vec<f64>> },
}

impl BehaviorSource {
    pub fn resolved(&self, base: &Path) -> Self {
        match self {
            BehaviorSource::File { path } if path.is_relative() => BehaviorSource::File { path: base.join(path) },
            other => other.clone(),
        }
    }

    pub fn build(&self, mdp: &TabularMdp) -> Result<BehaviorPolicy> {
        let b = match self {
            BehaviorSource::Uniform => BehaviorPolicy::uniform(mdp),
            BehaviorSource::File { path } => crate::io::load_behavior(path)?,
            BehaviorSource::Table { probabilities } => BehaviorPolicy::from_rows(probabilities.clone())?,
        };
        b.validate_for(mdp)?;
        Ok(b)
    }
}

/// Per-run error measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorMetric {
    /// Sup-norm distance to the exact solution over allowed pairs (states for
    /// TD, all steps for finite horizon).
    #[default]
    SupError,
    /// `|V_T(state) - V★(state)|`, with `V_T(s) = max_a Q_T(s, a)` for the
    /// Q-learners (step 1 for finite horizon).
    StateError { state: usize },
}

/// How the per-run errors of a cell are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Median,
    /// Root mean square; with [`ErrorMetric::StateError`] this is the RMSE.
    Rms,
}

impl Aggregate {
    pub fn apply(self, errors: &[f64]) -> f64 {
        match self {
            Aggregate::Median => median(errors),
            Aggregate::Rms => rms(errors),
        }
    }
}

/// A concrete model for one cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Mdp(TabularMdp),
    Mrp(TabularMrp),
    Finite(FiniteHorizonMdp),
}

/// Exact solution used to score runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oracle {
    Q(QTable),
    V(VTable),
    PerStep(Vec<QTable>),
}

/// Default power of `log T` in rescaled-linear rates for each learner.
pub fn default_log_exponent(algorithm: Algorithm) -> u32 {
    match algorithm {
        Algorithm::SyncQ | Algorithm::AsyncQ => Q_LEARNING_LOG_EXPONENT,
        Algorithm::SyncTd | Algorithm::FiniteQ => TD_LOG_EXPONENT,
    }
}

fn need_gamma(gamma: Option<f64>) -> Result<f64> {
    gamma.ok_or_else(|| Error::InvalidParameter("this instance needs a discount factor".into()))
}

/// Horizon `round(1/(1-γ))` used for random finite-horizon instances.
pub fn effective_horizon(gamma: f64) -> usize {
    (1.0 / (1.0 - gamma)).round().max(1.0) as usize
}

/// Builds the model `algorithm` consumes. `gamma` overrides the discount of
/// file instances; for finite horizon, `horizon` (or else the effective
/// horizon of `gamma`) sets the length of random instances.
pub fn build_problem(
    source: &InstanceSource,
    algorithm: Algorithm,
    gamma: Option<f64>,
    horizon: Option<usize>,
) -> Result<Problem> {
    let wrong = |what: &str| Err(Error::InvalidParameter(format!("{what} cannot be used with {algorithm}")));
    match algorithm {
        Algorithm::SyncQ | Algorithm::AsyncQ => match source {
            InstanceSource::Hard => Ok(Problem::Mdp(build_hard_mdp(need_gamma(gamma)?)?)),
            InstanceSource::HardMrp => Ok(Problem::Mdp(matched_mrp(need_gamma(gamma)?)?.to_mdp())),
            InstanceSource::File { path } => match crate::io::load_model(path)? {
                crate::io::Model::Discounted(m) => Ok(Problem::Mdp(match gamma {
                    Some(g) => m.with_discount(g)?,
                    None => m,
                })),
                crate::io::Model::FiniteHorizon(_) => wrong("a finite-horizon model"),
            },
            InstanceSource::Random { states, actions, seed, .. } => {
                Ok(Problem::Mdp(random_mdp(*states, *actions, need_gamma(gamma)?, *seed)?))
            }
        },
        Algorithm::SyncTd => match source {
            InstanceSource::Hard => wrong("the two-action hard instance (use hard_mrp)"),
            InstanceSource::HardMrp => Ok(Problem::Mrp(matched_mrp(need_gamma(gamma)?)?)),
            InstanceSource::File { path } => match crate::io::load_model(path)? {
                crate::io::Model::Discounted(m) => {
                    let mrp = TabularMrp::from_single_action(&m)?;
                    Ok(Problem::Mrp(match gamma {
                        Some(g) => mrp.with_discount(g)?,
                        None => mrp,
                    }))
                }
                crate::io::Model::FiniteHorizon(_) => wrong("a finite-horizon model"),
            },
            InstanceSource::Random { states, actions, seed, .. } => {
                if *actions != 1 {
                    return wrong("a random instance with more than one action");
                }
                Ok(Problem::Mrp(random_mrp(*states, need_gamma(gamma)?, *seed)?))
            }
        },
        Algorithm::FiniteQ => match source {
            InstanceSource::File { path } => match crate::io::load_model(path)? {
                crate::io::Model::FiniteHorizon(f) => Ok(Problem::Finite(f)),
                crate::io::Model::Discounted(_) => wrong("a discounted model"),
            },
            InstanceSource::Random {
                states,
                actions,
                seed,
                time_varying,
            } => {
                let h = match horizon {
                    Some(h) => h,
                    None => effective_horizon(need_gamma(gamma)?),
                };
                Ok(Problem::Finite(random_finite_horizon(*states, *actions, h, !time_varying, *seed)?))
            }
            _ => wrong("the hard instance"),
        },
    }
}

/// Exact solution of `problem`.
pub fn exact_oracle(problem: &Problem) -> Result<Oracle> {
    Ok(match problem {
        Problem::Mdp(m) => Oracle::Q(value_iteration(m, ORACLE_TOL, ORACLE_MAX_ITERS)?.q),
        Problem::Mrp(m) => Oracle::V(m.value()?),
        Problem::Finite(f) => Oracle::PerStep(backward_induction(f)?),
    })
}

fn mismatch() -> Error {
    Error::Dimension("oracle kind does not match the learner".into())
}

fn max_row(row: &[f64], mask: Option<&[bool]>) -> f64 {
    row.iter()
        .enumerate()
        .filter(|(a, _)| mask.is_none_or(|m| m[*a]))
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Error of one estimate under `metric`.
pub fn run_error(problem: &Problem, oracle: &Oracle, estimate: &Estimate, metric: ErrorMetric) -> Result<f64> {
    let check = |s: usize, n: usize| {
        if s >= n {
            Err(Error::InvalidParameter(format!("metric state {s} out of range")))
        } else {
            Ok(())
        }
    };
    match (problem, oracle, estimate) {
        (Problem::Mdp(m), Oracle::Q(star), Estimate::Q(q)) => match metric {
            ErrorMetric::SupError => Ok(m.q_distance(q, star)),
            ErrorMetric::StateError { state } => {
                check(state, m.num_states())?;
                let mask = &m.mask()[state * m.num_actions()..(state + 1) * m.num_actions()];
                Ok((max_row(q.row(state), Some(mask)) - max_row(star.row(state), Some(mask))).abs())
            }
        },
        (Problem::Mrp(m), Oracle::V(star), Estimate::V(v)) => match metric {
            ErrorMetric::SupError => Ok(v.sup_distance(star)),
            ErrorMetric::StateError { state } => {
                check(state, m.num_states())?;
                Ok((v.get(state) - star.get(state)).abs())
            }
        },
        (Problem::Finite(f), Oracle::PerStep(star), Estimate::PerStep(q)) => match metric {
            ErrorMetric::SupError => Ok(q.iter().zip(star).map(|(a, b)| a.sup_distance(b)).fold(0.0, f64::max)),
            ErrorMetric::StateError { state } => {
                check(state, f.num_states())?;
                Ok((max_row(q[0].row(state), None) - max_row(star[0].row(state), None)).abs())
            }
        },
        _ => Err(mismatch()),
    }
}

/// Estimated `μ_min` of the behaviour chain over allowed pairs.
pub fn estimate_mu_min(mdp: &TabularMdp, behavior: &BehaviorPolicy) -> Result<f64> {
    let st = stationary_distribution(&behavior_chain(mdp, behavior)?, DEFAULT_STATIONARY_TOL);
    Ok((0..mdp.num_pairs())
        .filter(|&i| mdp.mask()[i])
        .map(|i| st.distribution[i])
        .fold(f64::INFINITY, f64::min))
}

/// One learner run on a prepared problem.
fn dispatch(
    algorithm: Algorithm,
    problem: &Problem,
    behavior: Option<&BehaviorPolicy>,
    cfg: &RunConfig,
    oracle: Option<&Oracle>,
) -> Result<RunRecord> {
    match (algorithm, problem) {
        (Algorithm::SyncQ, Problem::Mdp(m)) => run_sync_q(m, cfg, oracle.map(as_q).transpose()?),
        (Algorithm::AsyncQ, Problem::Mdp(m)) => {
            let uniform;
            let b = match behavior {
                Some(b) => b,
                None => {
                    uniform = BehaviorPolicy::uniform(m);
                    &uniform
                }
            };
            run_async_q(m, b, cfg, oracle.map(as_q).transpose()?)
        }
        (Algorithm::SyncTd, Problem::Mrp(m)) => {
            let o = match oracle {
                Some(Oracle::V(v)) => Some(v),
                Some(_) => return Err(mismatch()),
                None => None,
            };
            run_sync_td(m, cfg, o)
        }
        (Algorithm::FiniteQ, Problem::Finite(f)) => {
            let o = match oracle {
                Some(Oracle::PerStep(q)) => Some(q.as_slice()),
                Some(_) => return Err(mismatch()),
                None => None,
            };
            run_finite_horizon_q(f, cfg, o)
        }
        _ => Err(Error::InvalidParameter(format!("model kind does not fit {algorithm}"))),
    }
}

fn as_q(o: &Oracle) -> Result<&QTable> {
    match o {
        Oracle::Q(q) => Ok(q),
        _ => Err(mismatch()),
    }
}

/// Discount used to instantiate schedules: the model's, or `1 - 1/H`.
fn schedule_gamma(problem: &Problem) -> f64 {
    match problem {
        Problem::Mdp(m) => m.discount(),
        Problem::Mrp(m) => m.discount(),
        Problem::Finite(f) => finite_horizon_gamma(f.horizon()),
    }
}

/// A single learner run as written in an experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub instance: InstanceSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub schedule: ScheduleSpec,
    pub iterations: u64,
    pub seed: u64,
    #[serde(default)]
    pub init: InitialValue,
    #[serde(default)]
    pub checkpoint_every: u64,
    #[serde(default)]
    pub snapshots: bool,
    #[serde(default)]
    pub start_state: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<BehaviorSource>,
}

impl RunSpec {
    pub fn resolved(&self, base: &Path) -> Self {
        Self {
            instance: self.instance.resolved(base),
            behavior: self.behavior.as_ref().map(|b| b.resolved(base)),
            ..self.clone()
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        build_problem(&self.instance, self.algorithm, self.gamma, self.horizon)
    }
}

/// Runs `spec`, scoring checkpoints against `oracle` when given.
pub fn execute_run(spec: &RunSpec, oracle: Option<&Oracle>) -> Result<RunRecord> {
    let problem = spec.problem()?;
    let behavior = match (&problem, spec.algorithm) {
        (Problem::Mdp(m), Algorithm::AsyncQ) => Some(spec.behavior.clone().unwrap_or_default().build(m)?),
        _ => None,
    };
    let mu_min = match (&problem, &behavior) {
        (Problem::Mdp(m), Some(b)) if spec.schedule.needs_mu_min() => Some(estimate_mu_min(m, b)?),
        _ => None,
    };
    let schedule = spec.schedule.bind_with_mu_min(
        spec.iterations,
        schedule_gamma(&problem),
        default_log_exponent(spec.algorithm),
        mu_min,
    )?;
    let mut cfg = RunConfig::new(schedule, spec.iterations, spec.seed).with_init(spec.init.clone());
    cfg.checkpoint_every = spec.checkpoint_every;
    cfg.snapshots = spec.snapshots;
    cfg.start_state = spec.start_state;
    dispatch(spec.algorithm, &problem, behavior.as_ref(), &cfg, oracle)
}

/// A grid of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub algorithm: Algorithm,
    pub instance: InstanceSource,
    pub gamma_grid: Vec<f64>,
    pub t_grid: Vec<u64>,
    pub schedule: ScheduleSpec,
    pub runs_per_cell: usize,
    #[serde(default)]
    pub metric: ErrorMetric,
    #[serde(default)]
    pub aggregate: Aggregate,
    pub seed: u64,
    /// Asynchronous learner only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<BehaviorSource>,
    #[serde(default)]
    pub start_state: usize,
    /// Finite horizon only; defaults to the effective horizon of each γ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_resamples() -> usize {
    DEFAULT_BOOTSTRAP_RESAMPLES
}

impl SweepConfig {
    pub fn new(
        algorithm: Algorithm,
        instance: InstanceSource,
        gamma_grid: Vec<f64>,
        t_grid: Vec<u64>,
        schedule: ScheduleSpec,
        runs_per_cell: usize,
        seed: u64,
    ) -> Self {
        Self {
            algorithm,
            instance,
            gamma_grid,
            t_grid,
            schedule,
            runs_per_cell,
            metric: ErrorMetric::SupError,
            aggregate: Aggregate::Median,
            seed,
            behavior: None,
            start_state: 0,
            horizon: None,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_grid.is_empty() || self.t_grid.is_empty() {
            return Err(Error::InvalidParameter("sweep grids must be non-empty".into()));
        }
        if self.runs_per_cell == 0 {
            return Err(Error::InvalidParameter("runs_per_cell must be at least 1".into()));
        }
        if let Some(g) = self.gamma_grid.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return Err(Error::InvalidParameter(format!("gamma {g} outside (0,1)")));
        }
        if self.t_grid.contains(&0) {
            return Err(Error::InvalidParameter("iteration counts must be positive".into()));
        }
        Ok(())
    }

    pub fn resolved(&self, base: &Path) -> Self {
        Self {
            instance: self.instance.resolved(base),
            behavior: self.behavior.as_ref().map(|b| b.resolved(base)),
            ..self.clone()
        }
    }

    /// Seed of run `run` in cell `(gamma, t)`.
    pub fn run_seed(&self, gamma: f64, t: u64, run: usize) -> u64 {
        derive_seed(self.seed, &[gamma.to_bits(), t, run as u64])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub t: u64,
    pub run: usize,
    pub seed: u64,
    pub error: f64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub gamma: f64,
    pub t: u64,
    /// Value combined by the sweep's [`Aggregate`].
    pub aggregate: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Per-run errors in run order.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedCell {
    pub gamma: f64,
    pub t: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub config: SweepConfig,
    pub runs: Vec<RunResult>,
    pub cells: Vec<CellSummary>,
    pub aborted: Vec<AbortedCell>,
}

impl SweepOutcome {
    pub fn cell(&self, gamma: f64, t: u64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.gamma == gamma && c.t == t)
    }
}

/// Worker threads requested through [`WORKERS_ENV`].
pub fn worker_count() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs `f` on a pool sized by [`WORKERS_ENV`], or on the global pool.
pub fn with_workers<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    match worker_count() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::InvalidParameter(format!("cannot start {n} workers: {e}"))),
        None => Ok(f()),
    }
}

struct CellContext {
    problem: Problem,
    oracle: Oracle,
    behavior: Option<BehaviorPolicy>,
    mu_min: Option<f64>,
}

fn cell_context(cfg: &SweepConfig, gamma: f64) -> Result<CellContext> {
    let problem = build_problem(&cfg.instance, cfg.algorithm, Some(gamma), cfg.horizon)?;
    let oracle = match (&cfg.instance, &problem) {
        (InstanceSource::Hard, _) => Oracle::Q(hard_oracle(gamma)?.q_star),
        _ => exact_oracle(&problem)?,
    };
    let behavior = match (&problem, cfg.algorithm) {
        (Problem::Mdp(m), Algorithm::AsyncQ) => Some(cfg.behavior.clone().unwrap_or_default().build(m)?),
        _ => None,
    };
    let mu_min = match (&problem, &behavior) {
        (Problem::Mdp(m), Some(b)) if cfg.schedule.needs_mu_min() => Some(estimate_mu_min(m, b)?),
        _ => None,
    };
    Ok(CellContext {
        problem,
        oracle,
        behavior,
        mu_min,
    })
}

fn one_run(cfg: &SweepConfig, ctx: &CellContext, gamma: f64, t: u64, run: usize) -> Result<RunResult> {
    let start = Instant::now();
    let seed = cfg.run_seed(gamma, t, run);
    let schedule = cfg.schedule.bind_with_mu_min(
        t,
        schedule_gamma(&ctx.problem),
        default_log_exponent(cfg.algorithm),
        ctx.mu_min,
    )?;
    let mut rc = RunConfig::new(schedule, t, seed);
    rc.start_state = cfg.start_state;
    let rec = dispatch(cfg.algorithm, &ctx.problem, ctx.behavior.as_ref(), &rc, None)?;
    let error = run_error(&ctx.problem, &ctx.oracle, &rec.estimate, cfg.metric)?;
    Ok(RunResult {
        algorithm: cfg.algorithm,
        gamma,
        t,
        run,
        seed,
        error,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs every `(γ, T, run)` of the grid. A failing run aborts its cell only.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    run_sweep_with_progress(cfg, None)
}

/// [`run_sweep`] reporting `(finished, total)` after each run.
pub fn run_sweep_with_progress(
    cfg: &SweepConfig,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let contexts: Vec<std::result::Result<CellContext, String>> =
        cfg.gamma_grid.iter().map(|&g| cell_context(cfg, g).map_err(|e| e.to_string())).collect();
    let mut tasks = Vec::new();
    for (gi, ctx) in contexts.iter().enumerate() {
        if ctx.is_ok() {
            for ti in 0..cfg.t_grid.len() {
                for run in 0..cfg.runs_per_cell {
                    tasks.push((gi, ti, run));
                }
            }
        }
    }
    let total = tasks.len();
    let done = AtomicUsize::new(0);
    let results: Vec<((usize, usize), Result<RunResult>)> = with_workers(|| {
        tasks
            .par_iter()
            .map(|&(gi, ti, run)| {
                let ctx = contexts[gi].as_ref().expect("only built contexts are scheduled");
                let r = one_run(cfg, ctx, cfg.gamma_grid[gi], cfg.t_grid[ti], run);
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if let Some(p) = progress {
                    p(n, total);
                }
                ((gi, ti), r)
            })
            .collect()
    })?;

    let mut by_cell: BTreeMap<(usize, usize), Vec<Result<RunResult>>> = BTreeMap::new();
    for (key, r) in results {
        by_cell.entry(key).or_default().push(r);
    }
    let mut runs = Vec::new();
    let mut cells = Vec::new();
    let mut aborted = Vec::new();
    for (gi, &gamma) in cfg.gamma_grid.iter().enumerate() {
        for (ti, &t) in cfg.t_grid.iter().enumerate() {
            if let Err(reason) = &contexts[gi] {
                aborted.push(AbortedCell {
                    gamma,
                    t,
                    reason: reason.clone(),
                });
                continue;
            }
            let cell = by_cell.remove(&(gi, ti)).unwrap_or_default();
            match cell.into_iter().collect::<Result<Vec<RunResult>>>() {
                Ok(cell_runs) => {
                    let errors: Vec<f64> = cell_runs.iter().map(|r| r.error).collect();
                    let (q1, q3) = quartiles(&errors);
                    cells.push(CellSummary {
                        gamma,
                        t,
                        aggregate: cfg.aggregate.apply(&errors),
                        median: median(&errors),
                        q1,
                        q3,
                        errors,
                    });
                    runs.extend(cell_runs);
                }
                Err(e) => aborted.push(AbortedCell {
                    gamma,
                    t,
                    reason: e.to_string(),
                }),
            }
        }
    }
    Ok(SweepOutcome {
        config: cfg.clone(),
        runs,
        cells,
        aborted,
    })
}

/// Which coordinate a fit regresses on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitAxis {
    /// `x = log(1/(1-γ))`.
    Horizon,
    /// `x = log T`.
    Iterations,
}

impl FitAxis {
    fn log_x(self, cell: &CellSummary) -> f64 {
        match self {
            FitAxis::Horizon => (1.0 / (1.0 - cell.gamma)).ln(),
            FitAxis::Iterations => (cell.t as f64).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub axis: FitAxis,
    pub slope: f64,
    pub intercept: f64,
    /// Seed-level bootstrap standard error of the slope.
    pub stderr: f64,
    pub r_squared: f64,
    pub cells: Vec<CellSummary>,
    pub aborted: Vec<AbortedCell>,
    pub flags: Vec<String>,
    pub notes: Vec<String>,
}

/// Least-squares slope of `log aggregate` against the axis, with a
/// bootstrap over the runs of each cell.
pub fn fit_exponent(outcome: &SweepOutcome, axis: FitAxis) -> Result<ExponentFit> {
    let cfg = &outcome.config;
    check_fit_grid(cfg, axis)?;
    let mut flags = Vec::new();
    let usable: Vec<&CellSummary> = outcome.cells.iter().filter(|c| c.aggregate > 0.0 && c.aggregate.is_finite()).collect();
    if usable.len() < outcome.cells.len() {
        flags.push(format!("{} cell(s) with zero error excluded", outcome.cells.len() - usable.len()));
    }
    if !outcome.aborted.is_empty() {
        flags.push(format!("{} aborted cell(s)", outcome.aborted.len()));
    }
    let x: Vec<f64> = usable.iter().map(|c| axis.log_x(c)).collect();
    let y: Vec<f64> = usable.iter().map(|c| c.aggregate.ln()).collect();
    let fit = ols(&x, &y)?;

    // log-linear alternative: log error against the raw coordinate
    let raw: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    if let Ok(alt) = ols(&raw, &y) {
        if alt.r_squared > fit.r_squared && x.len() > 2 {
            flags.push("non-power-law".into());
        }
    }

    let base = derive_seed(cfg.seed, &[BOOTSTRAP_KEY, axis as u64]);
    let slopes: Vec<f64> = (0..cfg.bootstrap_resamples as u64)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = RngStream::new(base, b);
            let ys: Vec<f64> = usable
                .iter()
                .map(|c| {
                    let n = c.errors.len();
                    let sample: Vec<f64> =
                        (0..n).map(|_| c.errors[((rng.next_f64() * n as f64) as usize).min(n - 1)]).collect();
                    cfg.aggregate.apply(&sample).ln()
                })
                .collect();
            if ys.iter().all(|v| v.is_finite()) {
                ols(&x, &ys).ok().map(|f| f.slope)
            } else {
                None
            }
        })
        .collect();
    let stderr = if slopes.len() >= 2 { std_dev(&slopes) } else { f64::NAN };
    if slopes.len() < cfg.bootstrap_resamples {
        flags.push(format!("{} bootstrap resample(s) dropped", cfg.bootstrap_resamples - slopes.len()));
    }
    Ok(ExponentFit {
        axis,
        slope: fit.slope,
        intercept: fit.intercept,
        stderr,
        r_squared: fit.r_squared,
        cells: outcome.cells.clone(),
        aborted: outcome.aborted.clone(),
        flags,
        notes: vec![LOG_FACTOR_NOTE.to_string()],
    })
}

/// Checks that a grid varies only along `axis` and has enough points there.
pub fn check_fit_grid(cfg: &SweepConfig, axis: FitAxis) -> Result<()> {
    match axis {
        FitAxis::Horizon => {
            if cfg.gamma_grid.len() < 3 {
                return Err(Error::InvalidParameter(format!(
                    "a horizon fit needs at least 3 discount factors, got {}",
                    cfg.gamma_grid.len()
                )));
            }
            if cfg.t_grid.len() != 1 {
                return Err(Error::InvalidParameter("a horizon fit needs a single T".into()));
            }
        }
        FitAxis::Iterations => {
            if cfg.t_grid.len() < 3 {
                return Err(Error::InvalidParameter(format!(
                    "an iteration fit needs at least 3 T values, got {}",
                    cfg.t_grid.len()
                )));
            }
            let lo = *cfg.t_grid.iter().min().expect("non-empty");
            let hi = *cfg.t_grid.iter().max().expect("non-empty");
            if (hi as f64) < 10.0 * lo as f64 {
                return Err(Error::InvalidParameter("the T grid must span at least one decade".into()));
            }
            if cfg.gamma_grid.len() != 1 {
                return Err(Error::InvalidParameter("an iteration fit needs a single discount factor".into()));
            }
        }
    }
    Ok(())
}

/// Sweeps γ at fixed `T` and fits the slope of `log error` against
/// `log(1/(1-γ))`.
pub fn horizon_exponent_sweep(cfg: &SweepConfig) -> Result<ExponentFit> {
    check_fit_grid(cfg, FitAxis::Horizon)?;
    fit_exponent(&run_sweep(cfg)?, FitAxis::Horizon)
}

/// Sweeps `T` at fixed γ and fits the slope of `log error` against `log T`.
pub fn iteration_exponent_sweep(cfg: &SweepConfig) -> Result<ExponentFit> {
    check_fit_grid(cfg, FitAxis::Iterations)?;
    fit_exponent(&run_sweep(cfg)?, FitAxis::Iterations)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub gamma: f64,
    pub epsilon: f64,
    /// Smallest `T` of the grid whose aggregate error is at most `epsilon`;
    /// serialized as `"unreached"` when none is.
    #[serde(with = "threshold_serde")]
    pub t: Option<u64>,
}

mod threshold_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Reached(u64),
        Unreached(String),
    }

    pub fn serialize<S: Serializer>(t: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        match t {
            Some(t) => Repr::Reached(*t),
            None => Repr::Unreached("unreached".into()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Reached(t) => Ok(Some(t)),
            Repr::Unreached(s) if s == "unreached" => Ok(None),
            Repr::Unreached(s) => Err(serde::de::Error::custom(format!("expected a count or \"unreached\", got {s}"))),
        }
    }
}

/// For each γ and `ε`, the smallest `T` whose aggregate error is at most `ε`.
pub fn threshold_table(outcome: &SweepOutcome, epsilons: &[f64]) -> Result<Vec<ThresholdRow>> {
    let grid = &outcome.config.t_grid;
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("the T grid must be sorted ascending".into()));
    }
    let mut rows = Vec::new();
    for &gamma in &outcome.config.gamma_grid {
        for &epsilon in epsilons {
            let t = grid
                .iter()
                .filter_map(|&t| outcome.cell(gamma, t))
                .find(|c| c.aggregate <= epsilon)
                .map(|c| c.t);
            rows.push(ThresholdRow { gamma, epsilon, t });
        }
    }
    Ok(rows)
}

/// Runs the sweep and tabulates [`threshold_table`].
pub fn epsilon_threshold_table(cfg: &SweepConfig, epsilons: &[f64]) -> Result<Vec<ThresholdRow>> {
    if cfg.t_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("the T grid must be sorted ascending".into()));
    }
    threshold_table(&run_sweep(cfg)?, epsilons)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverestimationCell {
    pub gamma: f64,
    /// Probe of `V_T(1)`.
    pub estimate: BiasVarianceEstimate,
    /// Bias above zero at three standard errors; never set with fewer than
    /// [`MIN_RELIABLE_RUNS`] runs.
    pub positive_bias: bool,
    /// Probe of the noiseless state 3.
    pub control: BiasVarianceEstimate,
    /// Bias of state 3 predicted by its closed-form recursion.
    pub control_expected_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverestimationReport {
    pub cells: Vec<OverestimationCell>,
    pub notes: Vec<String>,
}

/// Bias/variance probes at state 1 (with state 3 as a control) across a γ
/// grid. Cell seeds are derived from `seed` and γ.
pub fn overestimation_report(
    gamma_grid: &[f64],
    schedule: &ScheduleSpec,
    iterations: u64,
    runs: usize,
    seed: u64,
) -> Result<OverestimationReport> {
    let mut cells = Vec::new();
    for &gamma in gamma_grid {
        let cell_seed = derive_seed(seed, &[gamma.to_bits()]);
        let probe = |state| ProbeConfig::new(gamma, schedule.clone(), iterations, runs, cell_seed, state);
        let estimate = with_workers(|| bias_variance_probe(&probe(1)))??;
        let control = with_workers(|| bias_variance_probe(&probe(3)))??;
        let bound = schedule.bind(iterations, gamma, Q_LEARNING_LOG_EXPONENT)?;
        let control_expected_bias = state3_closed_form(&bound, iterations, gamma)? - hard_oracle(gamma)?.v_star[3];
        cells.push(OverestimationCell {
            gamma,
            positive_bias: estimate.num_runs >= MIN_RELIABLE_RUNS && estimate.positive_bias(3.0),
            estimate,
            control,
            control_expected_bias,
        });
    }
    Ok(OverestimationReport {
        cells,
        notes: vec!["positive_bias: mean of V_T(1) - V*(1) exceeds zero by three jackknife standard errors".into()],
    })
}
