//! Tabular MDP and MRP models, Bellman operators and exact solvers.
//!
//! All tables are stored flat in row-major order: a transition kernel is
//! indexed `[state][action][next_state]`, a reward or Q table `[state][action]`.
//! States and actions are 0-based.
//!
//! Ragged action sets are expressed with an action mask. A forbidden
//! `(s, a)` pair always carries reward 0 and a self-loop transition; it is
//! skipped by maxima, by sampling and by every error norm, and Bellman
//! operators emit 0 at that entry.

mod bellman;
pub mod random;
mod solve;

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

pub use bellman::{
    bellman_optimality, greedy_policy, policy_matrices, row_l1_norm, var_p, var_p_kernel,
    PolicyMatrices,
};
pub use solve::{backward_induction, exact_policy_value, value_iteration, Solution};

/// Tolerance on transition-row sums accepted by [`TabularMdp::validate`].
pub const ROW_SUM_TOL: f64 = 1e-9;

/// A single broken invariant of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
    },
    NegativeProbability {
        state: usize,
        action: usize,
        next_state: usize,
        value: f64,
    },
    RewardRange {
        state: usize,
        action: usize,
        value: f64,
    },
    NonFinite {
        state: usize,
        action: usize,
    },
    Discount {
        value: f64,
    },
    NoAllowedAction {
        state: usize,
    },
}

impl Violation {
    /// Short machine-friendly name of the violated constraint.
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::RowSum { .. } => "row-sum",
            Violation::NegativeProbability { .. } => "negative-probability",
            Violation::RewardRange { .. } => "reward-range",
            Violation::NonFinite { .. } => "non-finite",
            Violation::Discount { .. } => "discount",
            Violation::NoAllowedAction { .. } => "no-allowed-action",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { state, action, sum } => {
                write!(f, "row-sum: P(.|{state},{action}) sums to {sum}")
            }
            Violation::NegativeProbability {
                state,
                action,
                next_state,
                value,
            } => write!(
                f,
                "negative-probability: P({next_state}|{state},{action}) = {value}"
            ),
            Violation::RewardRange {
                state,
                action,
                value,
            } => write!(f, "reward-range: r({state},{action}) = {value} not in [0,1]"),
            Violation::NonFinite { state, action } => {
                write!(f, "non-finite: entry at ({state},{action})")
            }
            Violation::Discount { value } => write!(f, "discount: {value} not in (0,1)"),
            Violation::NoAllowedAction { state } => {
                write!(f, "no-allowed-action: state {state} has no allowed action")
            }
        }
    }
}

fn check_row(row: &[f64], state: usize, action: usize, out: &mut Vec<Violation>) {
    let mut sum = 0.0;
    let mut finite = true;
    for (next_state, &p) in row.iter().enumerate() {
        if !p.is_finite() {
            finite = false;
            continue;
        }
        if p < 0.0 {
            out.push(Violation::NegativeProbability {
                state,
                action,
                next_state,
                value: p,
            });
        }
        sum += p;
    }
    if !finite {
        out.push(Violation::NonFinite { state, action });
    } else if (sum - 1.0).abs() > ROW_SUM_TOL {
        out.push(Violation::RowSum { state, action, sum });
    }
}

fn check_reward(r: f64, state: usize, action: usize, out: &mut Vec<Violation>) {
    if !r.is_finite() {
        out.push(Violation::NonFinite { state, action });
    } else if !(0.0..=1.0).contains(&r) {
        out.push(Violation::RewardRange {
            state,
            action,
            value: r,
        });
    }
}

fn check_discount(g: f64, out: &mut Vec<Violation>) {
    if !(g > 0.0 && g < 1.0) {
        out.push(Violation::Discount { value: g });
    }
}

/// A finite discounted MDP `(S, A, P, r, γ)` with an optional action mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    discount: f64,
    transition: Vec<f64>,
    reward: Vec<f64>,
    mask: Vec<bool>,
}

impl TabularMdp {
    /// Builds and validates an MDP from flat tables.
    ///
    /// `transition` is `[s][a][s']`, `reward` is `[s][a]`. When `mask` is
    /// given, forbidden pairs are rewritten to reward 0 and a self-loop.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        discount: f64,
        transition: Vec<f64>,
        reward: Vec<f64>,
        mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        let mdp = Self::new_unchecked(num_states, num_actions, discount, transition, reward, mask)?;
        let violations = mdp.validate();
        if violations.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    /// Builds an MDP checking only table shapes. Use [`validate`](Self::validate)
    /// to inspect the remaining invariants.
    pub fn new_unchecked(
        num_states: usize,
        num_actions: usize,
        discount: f64,
        mut transition: Vec<f64>,
        mut reward: Vec<f64>,
        mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Dimension("need at least one state and one action".into()));
        }
        let pairs = num_states * num_actions;
        if transition.len() != pairs * num_states {
            return Err(Error::Dimension(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                pairs * num_states
            )));
        }
        if reward.len() != pairs {
            return Err(Error::Dimension(format!(
                "reward table has {} entries, expected {pairs}",
                reward.len()
            )));
        }
        let mask = match mask {
            Some(m) if m.len() != pairs => {
                return Err(Error::Dimension(format!(
                    "action mask has {} entries, expected {pairs}",
                    m.len()
                )))
            }
            Some(m) => m,
            None => vec![true; pairs],
        };
        for s in 0..num_states {
            for a in 0..num_actions {
                let idx = s * num_actions + a;
                if !mask[idx] {
                    reward[idx] = 0.0;
                    let row = &mut transition[idx * num_states..(idx + 1) * num_states];
                    row.fill(0.0);
                    row[s] = 1.0;
                }
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            discount,
            transition,
            reward,
            mask,
        })
    }

    /// Builds an MDP from nested tables `rewards[s][a]` and `transitions[s][a][s']`.
    pub fn from_nested(
        discount: f64,
        rewards: &[Vec<f64>],
        transitions: &[Vec<Vec<f64>>],
        mask: Option<&[Vec<bool>]>,
    ) -> Result<Self> {
        let num_states = rewards.len();
        let num_actions = rewards.first().map_or(0, Vec::len);
        if transitions.len() != num_states {
            return Err(Error::Dimension("transitions and rewards disagree on |S|".into()));
        }
        let mut reward = Vec::with_capacity(num_states * num_actions);
        let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
        for (s, (r_row, p_rows)) in rewards.iter().zip(transitions).enumerate() {
            if r_row.len() != num_actions || p_rows.len() != num_actions {
                return Err(Error::Dimension(format!("state {s} has a ragged action list")));
            }
            reward.extend_from_slice(r_row);
            for p in p_rows {
                if p.len() != num_states {
                    return Err(Error::Dimension(format!("state {s} has a short transition row")));
                }
                transition.extend_from_slice(p);
            }
        }
        let mask = mask.map(|m| m.iter().flatten().copied().collect());
        Self::new(num_states, num_actions, discount, transition, reward, mask)
    }

    /// Lists every broken invariant. An empty list means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_discount(self.discount, &mut out);
        for s in 0..self.num_states {
            if !(0..self.num_actions).any(|a| self.allowed(s, a)) {
                out.push(Violation::NoAllowedAction { state: s });
            }
            for a in 0..self.num_actions {
                check_row(self.transition_row(s, a), s, a, &mut out);
                check_reward(self.reward(s, a), s, a, &mut out);
            }
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `1/(1-γ)`, the largest value any Q-function of this MDP can take.
    pub fn value_bound(&self) -> f64 {
        1.0 / (1.0 - self.discount)
    }

    /// Same model with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        let mut out = self.clone();
        out.discount = discount;
        let v = out.validate();
        if v.is_empty() {
            Ok(out)
        } else {
            Err(Error::Invalid(v))
        }
    }

    #[inline]
    pub fn pair_index(&self, state: usize, action: usize) -> usize {
        state * self.num_actions + action
    }

    #[inline]
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let idx = self.pair_index(state, action) * self.num_states;
        &self.transition[idx..idx + self.num_states]
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[self.pair_index(state, action)]
    }

    #[inline]
    pub fn allowed(&self, state: usize, action: usize) -> bool {
        self.mask[self.pair_index(state, action)]
    }

    /// Flat transition table `[s][a][s']`.
    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    /// Flat reward table `[s][a]`.
    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Flat action mask `[s][a]`; `true` means allowed.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn has_mask(&self) -> bool {
        self.mask.iter().any(|&m| !m)
    }

    /// Allowed actions of `state` in increasing order.
    pub fn allowed_actions(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_actions).filter(move |&a| self.allowed(state, a))
    }

    /// `V(s) = max over allowed a of Q(s, a)`.
    pub fn state_values(&self, q: &QTable) -> VTable {
        let mut v = vec![0.0; self.num_states];
        self.state_values_into(q.as_slice(), &mut v);
        VTable(v)
    }

    pub(crate) fn state_values_into(&self, q: &[f64], out: &mut [f64]) {
        let na = self.num_actions;
        for (s, slot) in out.iter_mut().enumerate() {
            let row = &q[s * na..(s + 1) * na];
            let mask = &self.mask[s * na..(s + 1) * na];
            let mut best = f64::NEG_INFINITY;
            for (&x, &ok) in row.iter().zip(mask) {
                if ok && x > best {
                    best = x;
                }
            }
            *slot = best;
        }
    }

    /// Greedy policy restricted to allowed actions, smallest index on ties.
    pub fn greedy_policy(&self, q: &QTable) -> Result<DeterministicPolicy> {
        self.check_q(q)?;
        let mut actions = Vec::with_capacity(self.num_states);
        for s in 0..self.num_states {
            let mut best: Option<(usize, f64)> = None;
            for a in self.allowed_actions(s) {
                let x = q.get(s, a);
                if x.is_nan() {
                    return Err(Error::NaN { state: s, action: a });
                }
                if best.is_none_or(|(_, b)| x > b) {
                    best = Some((a, x));
                }
            }
            actions.push(best.map_or(0, |(a, _)| a));
        }
        Ok(DeterministicPolicy::new(actions))
    }

    /// Sup-norm distance between two Q tables over allowed pairs only.
    pub fn q_distance(&self, a: &QTable, b: &QTable) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|((x, y), _)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_q(&self, q: &QTable) -> Result<()> {
        if q.num_states() != self.num_states || q.num_actions() != self.num_actions {
            return Err(Error::Dimension(format!(
                "Q table is {}x{}, MDP is {}x{}",
                q.num_states(),
                q.num_actions(),
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }

    pub(crate) fn check_policy(&self, pi: &DeterministicPolicy) -> Result<()> {
        if pi.len() != self.num_states {
            return Err(Error::Dimension(format!(
                "policy covers {} states, MDP has {}",
                pi.len(),
                self.num_states
            )));
        }
        for (s, &a) in pi.actions().iter().enumerate() {
            if a >= self.num_actions || !self.allowed(s, a) {
                return Err(Error::InvalidParameter(format!(
                    "policy picks forbidden action {a} in state {s}"
                )));
            }
        }
        Ok(())
    }

    /// The Markov reward process obtained by fixing `pi`.
    pub fn induced_mrp(&self, pi: &DeterministicPolicy) -> Result<TabularMrp> {
        self.check_policy(pi)?;
        let n = self.num_states;
        let mut transition = Vec::with_capacity(n * n);
        let mut reward = Vec::with_capacity(n);
        for s in 0..n {
            let a = pi.action(s);
            transition.extend_from_slice(self.transition_row(s, a));
            reward.push(self.reward(s, a));
        }
        TabularMrp::new(n, self.discount, transition, reward)
    }
}

/// A Markov reward process: the `|A| = 1` special case of an MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMrp {
    num_states: usize,
    discount: f64,
    transition: Vec<f64>,
    reward: Vec<f64>,
}

impl TabularMrp {
    /// `transition` is `[s][s']`, `reward` is `[s]`.
    pub fn new(num_states: usize, discount: f64, transition: Vec<f64>, reward: Vec<f64>) -> Result<Self> {
        let mrp = Self::new_unchecked(num_states, discount, transition, reward)?;
        let v = mrp.validate();
        if v.is_empty() {
            Ok(mrp)
        } else {
            Err(Error::Invalid(v))
        }
    }

    pub fn new_unchecked(
        num_states: usize,
        discount: f64,
        transition: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || transition.len() != num_states * num_states || reward.len() != num_states {
            return Err(Error::Dimension(format!(
                "MRP with {num_states} states needs {} transition and {num_states} reward entries",
                num_states * num_states
            )));
        }
        Ok(Self {
            num_states,
            discount,
            transition,
            reward,
        })
    }

    /// Converts an MDP in which every state has exactly one allowed action.
    pub fn from_single_action(mdp: &TabularMdp) -> Result<Self> {
        let mut actions = Vec::with_capacity(mdp.num_states());
        for s in 0..mdp.num_states() {
            let allowed: Vec<usize> = mdp.allowed_actions(s).collect();
            if allowed.len() != 1 {
                return Err(Error::InvalidParameter(format!(
                    "state {s} has {} allowed actions, an MRP needs exactly one",
                    allowed.len()
                )));
            }
            actions.push(allowed[0]);
        }
        mdp.induced_mrp(&DeterministicPolicy::new(actions))
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_discount(self.discount, &mut out);
        for s in 0..self.num_states {
            check_row(self.transition_row(s), s, 0, &mut out);
            check_reward(self.reward[s], s, 0, &mut out);
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn value_bound(&self) -> f64 {
        1.0 / (1.0 - self.discount)
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(self.num_states, discount, self.transition.clone(), self.reward.clone())
    }

    #[inline]
    pub fn transition_row(&self, state: usize) -> &[f64] {
        &self.transition[state * self.num_states..(state + 1) * self.num_states]
    }

    #[inline]
    pub fn reward(&self, state: usize) -> f64 {
        self.reward[state]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// The equivalent single-action MDP.
    pub fn to_mdp(&self) -> TabularMdp {
        TabularMdp::new_unchecked(
            self.num_states,
            1,
            self.discount,
            self.transition.clone(),
            self.reward.clone(),
            None,
        )
        .expect("shapes already checked")
    }

    /// Exact value function `(I - γP)^{-1} r`.
    pub fn value(&self) -> Result<VTable> {
        solve::solve_mrp(self)
    }
}

/// `π(s)` for every state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeterministicPolicy(Vec<usize>);

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    #[inline]
    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every deterministic policy over the allowed actions of `mdp`.
    pub fn enumerate(mdp: &TabularMdp) -> Vec<DeterministicPolicy> {
        let per_state: Vec<Vec<usize>> =
            (0..mdp.num_states()).map(|s| mdp.allowed_actions(s).collect()).collect();
        let mut out = vec![Vec::new()];
        for choices in &per_state {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    choices.iter().map(move |&a| {
                        let mut p = prefix.clone();
                        p.push(a);
                        p
                    })
                })
                .collect();
        }
        out.into_iter().map(DeterministicPolicy).collect()
    }
}

/// A Q-function stored as a dense `|S| x |A|` table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    data: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, 0.0)
    }

    pub fn filled(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            data: vec![value; num_states * num_actions],
        }
    }

    pub fn from_vec(num_states: usize, num_actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_states * num_actions {
            return Err(Error::Dimension(format!(
                "{} entries for a {num_states}x{num_actions} Q table",
                data.len()
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            data,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let ns = rows.len();
        let na = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != na) {
            return Err(Error::Dimension("ragged Q table rows".into()));
        }
        Self::from_vec(ns, na, rows.into_iter().flatten().collect())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.num_actions.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.data[state * self.num_actions + action]
    }

    #[inline]
    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.data[state * self.num_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.data[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Unmasked sup-norm distance.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        sup_distance(&self.data, &other.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl Serialize for QTable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for QTable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        QTable::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// A state-value function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VTable(pub Vec<f64>);

impl VTable {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    #[inline]
    pub fn get(&self, state: usize) -> f64 {
        self.0[state]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_distance(&self, other: &VTable) -> f64 {
        sup_distance(&self.0, &other.0)
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A finite-horizon MDP `(S, A, {P_h}, {r_h}, H)` without discounting.
///
/// Steps are stored 0-based: index `h` here is step `h + 1` of the episode,
/// so the optimal value at index `h` lies in `[0, H - h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    time_invariant: bool,
    transitions: Vec<Vec<f64>>,
    rewards: Vec<Vec<f64>>,
}

impl FiniteHorizonMdp {
    /// `transitions` holds one `[s][a][s']` kernel per step, or a single
    /// kernel when `time_invariant`. `rewards` holds one `[s][a]` table per step.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        time_invariant: bool,
        transitions: Vec<Vec<f64>>,
        rewards: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::Dimension("need |S|, |A|, H >= 1".into()));
        }
        let kernels = if time_invariant { 1 } else { horizon };
        let pairs = num_states * num_actions;
        if transitions.len() != kernels || transitions.iter().any(|k| k.len() != pairs * num_states) {
            return Err(Error::Dimension(format!("expected {kernels} kernels of {} entries", pairs * num_states)));
        }
        if rewards.len() != horizon || rewards.iter().any(|r| r.len() != pairs) {
            return Err(Error::Dimension(format!("expected {horizon} reward tables of {pairs} entries")));
        }
        let fmdp = Self {
            num_states,
            num_actions,
            horizon,
            time_invariant,
            transitions,
            rewards,
        };
        let v = fmdp.validate();
        if v.is_empty() {
            Ok(fmdp)
        } else {
            Err(Error::Invalid(v))
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for h in 0..self.horizon {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    if h == 0 || !self.time_invariant {
                        check_row(self.transition_row(h, s, a), s, a, &mut out);
                    }
                    check_reward(self.reward(h, s, a), s, a, &mut out);
                }
            }
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_time_invariant(&self) -> bool {
        self.time_invariant
    }

    /// Upper bound `H - h` on the value at 0-based step `h`.
    pub fn value_bound(&self, h: usize) -> f64 {
        (self.horizon - h) as f64
    }

    #[inline]
    pub fn transition_row(&self, h: usize, state: usize, action: usize) -> &[f64] {
        let k = if self.time_invariant { 0 } else { h };
        let idx = (state * self.num_actions + action) * self.num_states;
        &self.transitions[k][idx..idx + self.num_states]
    }

    #[inline]
    pub fn reward(&self, h: usize, state: usize, action: usize) -> f64 {
        self.rewards[h][state * self.num_actions + action]
    }

    pub fn kernels(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    pub fn reward_tables(&self) -> &[Vec<f64>] {
        &self.rewards
    }

    /// The single-step MDP at step `h`, discount `γ` chosen by the caller.
    /// Useful for sampling with the generic machinery.
    pub fn step_mdp(&self, h: usize, discount: f64) -> Result<TabularMdp> {
        let k = if self.time_invariant { 0 } else { h };
        TabularMdp::new_unchecked(
            self.num_states,
            self.num_actions,
            discount,
            self.transitions[k].clone(),
            self.rewards[h].clone(),
            None,
        )
    }
}
