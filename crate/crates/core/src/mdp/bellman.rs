use nalgebra::DMatrix;

use super::{DeterministicPolicy, QTable, TabularMdp, VTable};
use crate::error::{Error, Result};

/// Applies the Bellman optimality operator:
/// `T(q)(s,a) = r(s,a) + γ Σ_{s'} P(s'|s,a) max_{a'} q(s',a')`.
///
/// Forbidden pairs map to 0.
pub fn bellman_optimality(mdp: &TabularMdp, q: &QTable) -> Result<QTable> {
    mdp.check_q(q)?;
    let v = mdp.state_values(q);
    let mut out = QTable::zeros(mdp.num_states(), mdp.num_actions());
    bellman_into(mdp, v.as_slice(), out.as_mut_slice());
    Ok(out)
}

pub(crate) fn bellman_into(mdp: &TabularMdp, v: &[f64], out: &mut [f64]) {
    let g = mdp.discount();
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let idx = mdp.pair_index(s, a);
            out[idx] = if mdp.allowed(s, a) {
                let ev: f64 = mdp.transition_row(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
                mdp.reward(s, a) + g * ev
            } else {
                0.0
            };
        }
    }
}

/// Greedy policy of an unmasked Q table: the smallest maximizing action in
/// every state.
pub fn greedy_policy(q: &QTable) -> Result<DeterministicPolicy> {
    let mut actions = Vec::with_capacity(q.num_states());
    for s in 0..q.num_states() {
        let mut best = 0;
        for (a, &x) in q.row(s).iter().enumerate() {
            if x.is_nan() {
                return Err(Error::NaN { state: s, action: a });
            }
            if x > q.get(s, best) {
                best = a;
            }
        }
        actions.push(best);
    }
    Ok(DeterministicPolicy::new(actions))
}

/// Transition matrices induced by a deterministic policy.
#[derive(Debug, Clone)]
pub struct PolicyMatrices {
    /// `P^π = P Π^π`, indexed by state-action pairs.
    pub state_action: DMatrix<f64>,
    /// `P_π = Π^π P`, indexed by states.
    pub state: DMatrix<f64>,
}

/// Builds `P^π` (|S||A| x |S||A|) and `P_π` (|S| x |S|).
pub fn policy_matrices(mdp: &TabularMdp, pi: &DeterministicPolicy) -> Result<PolicyMatrices> {
    mdp.check_policy(pi)?;
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let n = ns * na;
    let mut state_action = DMatrix::zeros(n, n);
    let mut state = DMatrix::zeros(ns, ns);
    for s in 0..ns {
        for a in 0..na {
            let row = mdp.transition_row(s, a);
            let i = mdp.pair_index(s, a);
            for (next, &p) in row.iter().enumerate() {
                state_action[(i, mdp.pair_index(next, pi.action(next)))] += p;
            }
        }
        for (next, &p) in mdp.transition_row(s, pi.action(s)).iter().enumerate() {
            state[(s, next)] = p;
        }
    }
    Ok(PolicyMatrices {
        state_action,
        state,
    })
}

/// Per-pair variance of `v(s')` under `P(.|s,a)`.
///
/// Computed in centred form `Σ P (v - E v)^2`, which equals
/// `Σ P v^2 - (Σ P v)^2` and is nonnegative without clamping.
pub fn var_p(mdp: &TabularMdp, v: &VTable) -> Result<QTable> {
    if v.len() != mdp.num_states() {
        return Err(Error::Dimension(format!(
            "value table has {} states, MDP has {}",
            v.len(),
            mdp.num_states()
        )));
    }
    let mut out = QTable::zeros(mdp.num_states(), mdp.num_actions());
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            out.set(s, a, row_variance(mdp.transition_row(s, a), v.as_slice()));
        }
    }
    Ok(out)
}

/// [`var_p`] for an arbitrary row-stochastic matrix; one entry per row.
pub fn var_p_kernel(kernel: &DMatrix<f64>, v: &[f64]) -> Result<Vec<f64>> {
    if kernel.ncols() != v.len() {
        return Err(Error::Dimension(format!(
            "kernel has {} columns, value vector {} entries",
            kernel.ncols(),
            v.len()
        )));
    }
    let mut row = vec![0.0; v.len()];
    Ok((0..kernel.nrows())
        .map(|i| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = kernel[(i, j)];
            }
            row_variance(&row, v)
        })
        .collect())
}

fn row_variance(p: &[f64], v: &[f64]) -> f64 {
    let mean: f64 = p.iter().zip(v).map(|(p, x)| p * x).sum();
    p.iter().zip(v).map(|(p, x)| p * (x - mean) * (x - mean)).sum()
}

/// Largest row-wise ℓ1 norm of a matrix.
pub fn row_l1_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random::random_mdp;
    use proptest::prelude::*;

    #[test]
    fn zero_reward_zero_q_is_fixed() {
        let mdp = TabularMdp::new(2, 1, 0.9, vec![0.5, 0.5, 0.0, 1.0], vec![0.0, 0.0], None).unwrap();
        let out = bellman_optimality(&mdp, &QTable::zeros(2, 1)).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mdp = random_mdp(3, 2, 0.9, 1).unwrap();
        assert!(matches!(bellman_optimality(&mdp, &QTable::zeros(3, 3)), Err(Error::Dimension(_))));
        assert!(matches!(var_p(&mdp, &VTable::zeros(2)), Err(Error::Dimension(_))));
    }

    #[test]
    fn greedy_breaks_ties_to_smallest_index() {
        let q = QTable::from_rows(vec![vec![1.0, 3.0], vec![2.0, 2.0], vec![5.0, 5.0]]).unwrap();
        assert_eq!(greedy_policy(&q).unwrap().actions(), &[1, 0, 0]);
        let q = QTable::from_rows(vec![vec![5.0, 5.0, 5.0]]).unwrap();
        assert_eq!(greedy_policy(&q).unwrap().action(0), 0);
    }

    #[test]
    fn greedy_rejects_nan() {
        let q = QTable::from_rows(vec![vec![1.0, f64::NAN]]).unwrap();
        assert!(matches!(greedy_policy(&q), Err(Error::NaN { state: 0, action: 1 })));
    }

    #[test]
    fn var_p_two_outcome_row() {
        let mdp = TabularMdp::new(2, 1, 0.9, vec![0.5, 0.5, 0.0, 1.0], vec![0.0, 0.0], None).unwrap();
        let var = var_p(&mdp, &VTable(vec![0.0, 2.0])).unwrap();
        // p(1-p)(a-b)^2 with p = 1/2
        assert_eq!(var.get(0, 0), 1.0);
        assert_eq!(var.get(1, 0), 0.0);
    }

    #[test]
    fn var_p_matches_monte_carlo() {
        use crate::sampling::{CdfTable, RngStream};
        let mdp = random_mdp(4, 1, 0.9, 17).unwrap();
        let v = VTable(vec![0.3, 4.0, 1.5, 9.0]);
        let exact = var_p(&mdp, &v).unwrap().get(0, 0);
        let cdf = CdfTable::new(&mdp);
        let mut rng = RngStream::new(5, 0);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| v.get(cdf.sample(0, &mut rng))).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - exact).abs() < 0.03 * exact.max(1.0), "{var} vs {exact}");
    }

    #[test]
    fn one_state_policy_matrices_are_identity() {
        let mdp = TabularMdp::new(1, 1, 0.5, vec![1.0], vec![0.3], None).unwrap();
        let m = policy_matrices(&mdp, &DeterministicPolicy::new(vec![0])).unwrap();
        assert_eq!(m.state_action, DMatrix::identity(1, 1));
        assert_eq!(m.state, DMatrix::identity(1, 1));
    }

    #[test]
    fn state_kernel_is_a_row_lookup() {
        let mdp = random_mdp(2, 2, 0.9, 3).unwrap();
        let pi = DeterministicPolicy::new(vec![1, 0]);
        let m = policy_matrices(&mdp, &pi).unwrap();
        for s in 0..2 {
            for s2 in 0..2 {
                assert_eq!(m.state[(s, s2)], mdp.transition_row(s, pi.action(s))[s2]);
                for a in 0..2 {
                    for a2 in 0..2 {
                        let expected = if a2 == pi.action(s2) { mdp.transition_row(s, a)[s2] } else { 0.0 };
                        assert_eq!(m.state_action[(s * 2 + a, s2 * 2 + a2)], expected);
                    }
                }
            }
        }
        assert!((row_l1_norm(&m.state_action) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn policy_with_forbidden_action_is_rejected() {
        let mdp = crate::hard::build_hard_mdp(0.9).unwrap();
        let pi = DeterministicPolicy::new(vec![1, 0, 0, 0]);
        assert!(policy_matrices(&mdp, &pi).is_err());
    }

    fn brute_force_bellman(mdp: &TabularMdp, q: &QTable) -> Vec<f64> {
        let mut out = Vec::new();
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                let mut acc = mdp.reward(s, a);
                for s2 in 0..mdp.num_states() {
                    let mut m = f64::NEG_INFINITY;
                    for a2 in 0..mdp.num_actions() {
                        m = m.max(q.get(s2, a2));
                    }
                    acc += mdp.discount() * mdp.transition_row(s, a)[s2] * m;
                }
                out.push(acc);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn bellman_is_a_contraction(seed in 0u64..1000, q1 in prop::collection::vec(0.0f64..10.0, 6), q2 in prop::collection::vec(0.0f64..10.0, 6)) {
            let mdp = random_mdp(3, 2, 0.9, seed).unwrap();
            let q1 = QTable::from_vec(3, 2, q1).unwrap();
            let q2 = QTable::from_vec(3, 2, q2).unwrap();
            let t1 = bellman_optimality(&mdp, &q1).unwrap();
            let t2 = bellman_optimality(&mdp, &q2).unwrap();
            let b1 = brute_force_bellman(&mdp, &q1);
            for (x, y) in t1.as_slice().iter().zip(&b1) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!(t1.sup_distance(&t2) <= 0.9 * q1.sup_distance(&q2) + 1e-12);
        }

        #[test]
        fn greedy_is_shift_and_scale_invariant(q in prop::collection::vec(-5.0f64..5.0, 6), c in -3.0f64..3.0, k in 0.1f64..10.0) {
            let base = QTable::from_vec(2, 3, q.clone()).unwrap();
            let shifted = QTable::from_vec(2, 3, q.iter().map(|x| x + c).collect()).unwrap();
            let scaled = QTable::from_vec(2, 3, q.iter().map(|x| x * k).collect()).unwrap();
            let pi = greedy_policy(&base).unwrap();
            // shifting can create new float ties; compare values, not indices
            let ps = greedy_policy(&shifted).unwrap();
            for s in 0..2 {
                prop_assert_eq!(shifted.get(s, ps.action(s)), shifted.get(s, pi.action(s)));
            }
            prop_assert_eq!(greedy_policy(&scaled).unwrap(), pi);
        }

        #[test]
        fn var_p_nonnegative_and_shift_invariant(seed in 0u64..1000, v in prop::collection::vec(0.0f64..10.0, 4), c in -5.0f64..5.0) {
            let mdp = random_mdp(4, 2, 0.9, seed).unwrap();
            let a = var_p(&mdp, &VTable(v.clone())).unwrap();
            let b = var_p(&mdp, &VTable(v.iter().map(|x| x + c).collect())).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!(*x >= 0.0);
                prop_assert!((x - y).abs() < 1e-9);
            }
            let constant = var_p(&mdp, &VTable(vec![c; 4])).unwrap();
            prop_assert!(constant.max_abs() < 1e-12);
        }

        #[test]
        fn policy_matrices_are_stochastic(seed in 0u64..1000, acts in prop::collection::vec(0usize..3, 4)) {
            let mdp = random_mdp(4, 3, 0.8, seed).unwrap();
            let m = policy_matrices(&mdp, &DeterministicPolicy::new(acts)).unwrap();
            for r in m.state_action.row_iter() {
                prop_assert!((r.sum() - 1.0).abs() < 1e-12);
            }
            for r in m.state.row_iter() {
                prop_assert!((r.sum() - 1.0).abs() < 1e-12);
            }
        }
    }
}
