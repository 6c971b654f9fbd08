//! Seeded sampling: counter-based random streams, the synchronous
//! generative model, the empirical Bellman operator and trajectory stepping.
//!
//! Every random draw in the crate comes from an [`RngStream`] keyed by
//! `(seed, stream_id)`. The generator is ChaCha8 with its 256-bit key
//! expanded from `seed` and its 64-bit stream (nonce) set to `stream_id`;
//! the 64-bit block counter advances with each draw. A uniform `f64` is the
//! top 53 bits of one 64-bit word scaled by `2^-53`. The same key therefore
//! produces the same draws on every platform, and distinct stream ids give
//! independent sequences.
//!
//! Stream-id conventions:
//!
//! - synchronous learners draw iteration `t` from stream `t`, one word per
//!   state-action pair in row-major order, so the draw for `(t, s, a)` sits
//!   at a fixed counter position regardless of `T`;
//! - trajectory learners draw from stream 0 of a per-run seed;
//! - experiment harnesses derive per-run seeds with [`derive_seed`] from the
//!   coordinates of the run, never from execution order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{QTable, TabularMdp};

/// A reproducible random stream keyed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Hands out [`RngStream`]s for one seed without re-expanding the key.
#[derive(Debug, Clone)]
pub struct StreamFactory {
    seed: u64,
    base: ChaCha8Rng,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    #[inline]
    pub fn stream(&self, stream_id: u64) -> RngStream {
        let mut rng = self.base.clone();
        rng.set_stream(stream_id);
        RngStream {
            seed: self.seed,
            stream_id,
            rng,
        }
    }
}

/// Derives a seed from a base seed and a list of coordinates by chaining
/// one draw per coordinate.
pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(base, |s, &k| RngStream::new(s, k).next_u64())
}

/// Inverse-CDF sampler over the rows of a row-stochastic table.
#[derive(Debug, Clone)]
pub struct CdfTable {
    width: usize,
    cdf: Vec<f64>,
    last_positive: Vec<usize>,
}

impl CdfTable {
    /// One row per state-action pair of `mdp`.
    pub fn new(mdp: &TabularMdp) -> Self {
        Self::from_rows(mdp.transitions(), mdp.num_states())
    }

    /// `rows` is a flat table of probability vectors of length `width`.
    pub fn from_rows(rows: &[f64], width: usize) -> Self {
        let mut cdf = Vec::with_capacity(rows.len());
        let mut last_positive = Vec::with_capacity(rows.len() / width.max(1));
        for row in rows.chunks(width) {
            let mut acc = 0.0;
            let mut last = 0;
            for (i, &p) in row.iter().enumerate() {
                acc += p;
                cdf.push(acc);
                if p > 0.0 {
                    last = i;
                }
            }
            last_positive.push(last);
        }
        Self {
            width,
            cdf,
            last_positive,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.last_positive.len()
    }

    /// Index `i` with `cdf[i-1] < u <= cdf[i]`, skipping zero-probability
    /// entries, so a draw on a boundary goes to the lower index.
    #[inline]
    pub fn sample_with(&self, row: usize, u: f64) -> usize {
        let cdf = &self.cdf[row * self.width..(row + 1) * self.width];
        let mut prev = 0.0;
        for (i, &c) in cdf.iter().enumerate() {
            if c > prev && u <= c {
                return i;
            }
            prev = c;
        }
        self.last_positive[row]
    }

    #[inline]
    pub fn sample(&self, row: usize, rng: &mut RngStream) -> usize {
        self.sample_with(row, rng.next_f64())
    }
}

/// One sampled next state for every state-action pair: the `s_t(s, a)` that
/// make up the empirical transition matrix `P_t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncSampleTable {
    num_states: usize,
    num_actions: usize,
    next_state: Vec<usize>,
}

impl SyncSampleTable {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            next_state: vec![0; num_states * num_actions],
        }
    }

    /// Wraps an explicit table `[s][a] -> s'`.
    pub fn from_vec(num_states: usize, num_actions: usize, next_state: Vec<usize>) -> Result<Self> {
        if next_state.len() != num_states * num_actions {
            return Err(Error::Dimension("sample table size".into()));
        }
        Ok(Self {
            num_states,
            num_actions,
            next_state,
        })
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> usize {
        self.next_state[state * self.num_actions + action]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.next_state
    }

    pub fn as_mut_slice(&mut self) -> &mut [usize] {
        &mut self.next_state
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// The synchronous generative model of an MDP with its CDFs precomputed.
#[derive(Debug, Clone)]
pub struct GenerativeModel<'a> {
    mdp: &'a TabularMdp,
    cdf: CdfTable,
}

impl<'a> GenerativeModel<'a> {
    pub fn new(mdp: &'a TabularMdp) -> Self {
        Self {
            mdp,
            cdf: CdfTable::new(mdp),
        }
    }

    pub fn mdp(&self) -> &TabularMdp {
        self.mdp
    }

    /// Fills `out` with one draw per pair. Every pair consumes one 64-bit
    /// word, forbidden pairs included, and forbidden pairs get their
    /// self-loop.
    pub fn draw_into(&self, rng: &mut RngStream, out: &mut SyncSampleTable) {
        let na = self.mdp.num_actions();
        for (idx, slot) in out.next_state.iter_mut().enumerate() {
            let u = rng.next_f64();
            *slot = if self.mdp.mask()[idx] {
                self.cdf.sample_with(idx, u)
            } else {
                idx / na
            };
        }
    }
}

/// Draws an independent next state for every state-action pair.
pub fn draw_sync_samples(mdp: &TabularMdp, rng: &mut RngStream) -> SyncSampleTable {
    let mut out = SyncSampleTable::new(mdp.num_states(), mdp.num_actions());
    GenerativeModel::new(mdp).draw_into(rng, &mut out);
    out
}

/// Empirical Bellman operator `r(s,a) + γ max_{a'} q(s_t(s,a), a')`.
/// Forbidden pairs map to 0.
pub fn empirical_bellman(q: &QTable, samples: &SyncSampleTable, mdp: &TabularMdp) -> Result<QTable> {
    mdp.check_q(q)?;
    if samples.num_states != mdp.num_states() || samples.num_actions != mdp.num_actions() {
        return Err(Error::Dimension("sample table does not match the MDP".into()));
    }
    if let Some(bad) = samples.next_state.iter().find(|&&s| s >= mdp.num_states()) {
        return Err(Error::InvalidParameter(format!("sampled state {bad} out of range")));
    }
    let v = mdp.state_values(q);
    let g = mdp.discount();
    let mut out = QTable::zeros(mdp.num_states(), mdp.num_actions());
    for s in 0..mdp.num_states() {
        for a in mdp.allowed_actions(s) {
            out.set(s, a, mdp.reward(s, a) + g * v.get(samples.get(s, a)));
        }
    }
    Ok(out)
}

/// A stationary stochastic behaviour policy `π_b(a|s)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BehaviorPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl BehaviorPolicy {
    /// `probs` is `[s][a]`.
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::Dimension("behavior table size".into()));
        }
        let b = Self {
            num_states,
            num_actions,
            probs,
        };
        for s in 0..num_states {
            b.check_row(s, None)?;
        }
        Ok(b)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let ns = rows.len();
        let na = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != na) {
            return Err(Error::Dimension("ragged behavior rows".into()));
        }
        Self::new(ns, na, rows.into_iter().flatten().collect())
    }

    /// Uniform over the allowed actions of each state.
    pub fn uniform(mdp: &TabularMdp) -> Self {
        let mut probs = vec![0.0; mdp.num_pairs()];
        for s in 0..mdp.num_states() {
            let allowed: Vec<usize> = mdp.allowed_actions(s).collect();
            for &a in &allowed {
                probs[mdp.pair_index(s, a)] = 1.0 / allowed.len() as f64;
            }
        }
        Self {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            probs,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.num_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_states).map(|s| self.row(s).to_vec()).collect()
    }

    fn check_row(&self, state: usize, mdp: Option<&TabularMdp>) -> Result<()> {
        if state >= self.num_states {
            return Err(Error::BehaviorRow(state));
        }
        let row = self.row(state);
        let sum: f64 = row.iter().sum();
        let bad_entry = row.iter().enumerate().any(|(a, &p)| {
            !p.is_finite() || p < 0.0 || (p > 0.0 && mdp.is_some_and(|m| !m.allowed(state, a)))
        });
        if bad_entry || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::BehaviorRow(state));
        }
        Ok(())
    }

    /// Checks shapes against `mdp` and that no mass sits on forbidden actions.
    pub fn validate_for(&self, mdp: &TabularMdp) -> Result<()> {
        if self.num_states != mdp.num_states() || self.num_actions != mdp.num_actions() {
            return Err(Error::Dimension("behavior policy does not match the MDP".into()));
        }
        (0..self.num_states).try_for_each(|s| self.check_row(s, Some(mdp)))
    }
}

/// One transition of a Markovian trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// Draws `a ~ π_b(.|state)`, reads `r(state, a)` and draws `s' ~ P(.|state, a)`.
/// Consumes two words of `rng`.
pub fn trajectory_step(
    mdp: &TabularMdp,
    behavior: &BehaviorPolicy,
    state: usize,
    rng: &mut RngStream,
) -> Result<Step> {
    if behavior.num_states != mdp.num_states() || behavior.num_actions != mdp.num_actions() {
        return Err(Error::Dimension("behavior policy does not match the MDP".into()));
    }
    behavior.check_row(state, Some(mdp))?;
    let actions = CdfTable::from_rows(behavior.row(state), mdp.num_actions());
    let action = actions.sample(0, rng);
    let next = CdfTable::from_rows(mdp.transition_row(state, action), mdp.num_states());
    Ok(Step {
        action,
        reward: mdp.reward(state, action),
        next_state: next.sample(0, rng),
    })
}

/// A trajectory generator with behaviour and transition CDFs precomputed.
#[derive(Debug, Clone)]
pub struct Trajectory<'a> {
    mdp: &'a TabularMdp,
    actions: CdfTable,
    transitions: CdfTable,
    state: usize,
    rng: RngStream,
}

impl<'a> Trajectory<'a> {
    pub fn new(mdp: &'a TabularMdp, behavior: &BehaviorPolicy, start: usize, rng: RngStream) -> Result<Self> {
        behavior.validate_for(mdp)?;
        if start >= mdp.num_states() {
            return Err(Error::InvalidParameter(format!("start state {start} out of range")));
        }
        Ok(Self {
            mdp,
            actions: CdfTable::from_rows(&behavior.probs, mdp.num_actions()),
            transitions: CdfTable::new(mdp),
            state: start,
            rng,
        })
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Advances one step; same draws as [`trajectory_step`].
    #[inline]
    pub fn step(&mut self) -> (usize, usize, usize) {
        let s = self.state;
        let a = self.actions.sample(s, &mut self.rng);
        let next = self.transitions.sample(self.mdp.pair_index(s, a), &mut self.rng);
        self.state = next;
        (s, a, next)
    }
}
