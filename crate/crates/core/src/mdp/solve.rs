use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bellman::bellman_into;
use super::{DeterministicPolicy, FiniteHorizonMdp, QTable, TabularMdp, TabularMrp, VTable};
use crate::error::{Error, Result};

/// Output of [`value_iteration`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub q: QTable,
    pub v: VTable,
    pub iterations: usize,
    /// `‖T(Q) - Q‖∞` measured on the last iteration.
    pub residual: f64,
}

/// Iterates the Bellman optimality operator from `Q = 0` until consecutive
/// iterates differ by at most `tol` in sup norm.
///
/// The returned `Q` satisfies `‖T(Q) - Q‖∞ ≤ γ tol` and therefore
/// `‖Q - Q★‖∞ ≤ tol / (1-γ)`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iters: usize) -> Result<Solution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let mut q = vec![0.0; mdp.num_pairs()];
    let mut next = vec![0.0; mdp.num_pairs()];
    let mut v = vec![0.0; mdp.num_states()];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        mdp.state_values_into(&q, &mut v);
        bellman_into(mdp, &v, &mut next);
        residual = super::sup_distance(&q, &next);
        std::mem::swap(&mut q, &mut next);
        if residual <= tol {
            let q = QTable::from_vec(mdp.num_states(), mdp.num_actions(), q)?;
            let v = mdp.state_values(&q);
            return Ok(Solution {
                q,
                v,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual,
    })
}

/// Value of a fixed policy, `V = (I - γ P_π)^{-1} r_π`, by dense LU with
/// partial pivoting.
pub fn exact_policy_value(mdp: &TabularMdp, pi: &DeterministicPolicy) -> Result<VTable> {
    solve_mrp(&mdp.induced_mrp(pi)?)
}

pub(super) fn solve_mrp(mrp: &TabularMrp) -> Result<VTable> {
    let n = mrp.num_states();
    let g = mrp.discount();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - g * mrp.transition_row(i)[j]
    });
    let b = DVector::from_column_slice(mrp.rewards());
    let x = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("I - γP has a zero pivot".into()))?;
    let residual = (&a * &x - &b).amax();
    if !(residual <= 1e-9) {
        return Err(Error::Singular(format!("solve residual {residual:e}")));
    }
    Ok(VTable(x.iter().copied().collect()))
}

/// Optimal Q-functions of a finite-horizon MDP, one per step (0-based).
pub fn backward_induction(fmdp: &FiniteHorizonMdp) -> Result<Vec<QTable>> {
    let (ns, na, horizon) = (fmdp.num_states(), fmdp.num_actions(), fmdp.horizon());
    let mut out = vec![QTable::zeros(ns, na); horizon];
    let mut next_v = vec![0.0; ns];
    for h in (0..horizon).rev() {
        let q = &mut out[h];
        for s in 0..ns {
            for a in 0..na {
                let ev: f64 = fmdp.transition_row(h, s, a).iter().zip(&next_v).map(|(p, v)| p * v).sum();
                q.set(s, a, fmdp.reward(h, s, a) + ev);
            }
        }
        for (s, slot) in next_v.iter_mut().enumerate() {
            *slot = q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(out)
}
