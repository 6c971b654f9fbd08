//! Tabular reinforcement-learning laboratory.
//!
//! `qlab` implements synchronous Q-learning, synchronous TD learning,
//! asynchronous Q-learning on a Markovian trajectory, and finite-horizon
//! Q-learning, together with exact solvers that provide ground truth for
//! every learner and an experiment harness that measures how estimation
//! error scales with the effective horizon `1/(1-γ)` and the iteration
//! budget `T`.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`] holds the tabular model types, Bellman operators and exact
//!   solvers (value iteration, policy evaluation, backward induction).
//! - [`sampling`] provides the counter-based random streams, the
//!   synchronous generative model and trajectory stepping.
//! - [`schedules`] defines learning-rate rules and the compounded weights
//!   they induce.
//! - [`learners`] runs the four stochastic approximation algorithms.
//! - [`hard`] builds the four-state instance on which Q-learning provably
//!   needs `(1-γ)^{-4}` samples, with closed-form optimal values.
//! - [`chain`] computes behaviour-chain statistics and evaluates
//!   Freedman's martingale bound.
//! - [`experiments`] sweeps discount factors and iteration budgets and fits
//!   scaling exponents.
//! - [`io`] reads and writes the JSON/CSV file formats used by the CLI.
//!
//! ```
//! use qlab::hard::{build_hard_mdp, hard_oracle};
//! use qlab::mdp::value_iteration;
//!
//! let mdp = build_hard_mdp(0.8).unwrap();
//! let solved = value_iteration(&mdp, 1e-10, 1_000_000).unwrap();
//! let oracle = hard_oracle(0.8).unwrap();
//! for s in 0..4 {
//!     assert!((solved.v.get(s) - oracle.v_star[s]).abs() < 1e-7);
//! }
//! ```

pub mod chain;
pub mod error;
pub mod experiments;
pub mod hard;
pub mod io;
pub mod learners;
pub mod mdp;
pub mod sampling;
pub mod schedules;

pub use error::{Error, Result};
pub use mdp::{
    DeterministicPolicy, FiniteHorizonMdp, QTable, TabularMdp, TabularMrp, VTable, Violation,
};
pub use schedules::{Schedule, ScheduleSpec};
