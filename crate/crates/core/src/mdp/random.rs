//! Seeded random instances for tests and experiments.
//!
//! Rewards are uniform on `[0, 1)`; transition rows are Dirichlet(1, …, 1)
//! draws (normalised exponentials), so every row has full support and every
//! generated chain is ergodic.

use super::{FiniteHorizonMdp, TabularMdp, TabularMrp};
use crate::error::Result;
use crate::sampling::RngStream;

// Stream ids reserved for instance generation.
const REWARD_STREAM: u64 = 0x5245_5741_5244;
const KERNEL_STREAM: u64 = 0x4b45_524e_454c;

fn dirichlet_rows(rows: usize, width: usize, rng: &mut RngStream) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * width);
    for _ in 0..rows {
        // 1 - u lies in (0, 1], so the log is finite
        let row: Vec<f64> = (0..width).map(|_| -(1.0 - rng.next_f64()).ln()).collect();
        let total: f64 = row.iter().sum();
        out.extend(row.iter().map(|x| x / total));
    }
    out
}

fn uniform_rewards(n: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| rng.next_f64()).collect()
}

/// Random MDP with dense transition rows. The kernel and rewards depend only
/// on `(num_states, num_actions, seed)`, not on `discount`.
pub fn random_mdp(num_states: usize, num_actions: usize, discount: f64, seed: u64) -> Result<TabularMdp> {
    let pairs = num_states * num_actions;
    let reward = uniform_rewards(pairs, &mut RngStream::new(seed, REWARD_STREAM));
    let transition = dirichlet_rows(pairs, num_states, &mut RngStream::new(seed, KERNEL_STREAM));
    TabularMdp::new(num_states, num_actions, discount, transition, reward, None)
}

/// Random MRP; identical to the single-action [`random_mdp`] with the same seed.
pub fn random_mrp(num_states: usize, discount: f64, seed: u64) -> Result<TabularMrp> {
    TabularMrp::from_single_action(&random_mdp(num_states, 1, discount, seed)?)
}

/// Random finite-horizon MDP with per-step rewards and either one shared
/// kernel or one kernel per step.
pub fn random_finite_horizon(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    time_invariant: bool,
    seed: u64,
) -> Result<FiniteHorizonMdp> {
    let pairs = num_states * num_actions;
    let mut rewards_rng = RngStream::new(seed, REWARD_STREAM);
    let mut kernel_rng = RngStream::new(seed, KERNEL_STREAM);
    let rewards = (0..horizon).map(|_| uniform_rewards(pairs, &mut rewards_rng)).collect();
    let kernels = if time_invariant { 1 } else { horizon };
    let transitions = (0..kernels).map(|_| dirichlet_rows(pairs, num_states, &mut kernel_rng)).collect();
    FiniteHorizonMdp::new(num_states, num_actions, horizon, time_invariant, transitions, rewards)
}
