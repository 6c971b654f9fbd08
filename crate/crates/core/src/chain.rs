//! Statistics of the behaviour chain over state-action pairs: stationary
//! distribution, `μ_min`, mixing time, visit counts, and the Freedman
//! deviation level.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::sampling::BehaviorPolicy;

/// Total-variation tolerance used when no other is given.
pub const DEFAULT_STATIONARY_TOL: f64 = 1e-10;
/// Largest horizon searched by [`mixing_time`] unless told otherwise.
pub const DEFAULT_MIXING_CAP: u64 = 1_000_000;
const MIXING_THRESHOLD: f64 = 0.25;
const MAX_SQUARINGS: usize = 64;

/// Kernel of the pair chain `(s,a) -> (s',a')`:
/// `K((s,a),(s',a')) = P(s'|s,a) π_b(a'|s')`.
pub fn behavior_chain(mdp: &TabularMdp, behavior: &BehaviorPolicy) -> Result<DMatrix<f64>> {
    behavior.validate_for(mdp)?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let n = ns * na;
    let mut k = DMatrix::zeros(n, n);
    for s in 0..ns {
        for a in 0..na {
            let i = s * na + a;
            for (s2, &p) in mdp.transition_row(s, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (a2, &b) in behavior.row(s2).iter().enumerate() {
                    k[(i, s2 * na + a2)] = p * b;
                }
            }
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub distribution: Vec<f64>,
    /// Every start converged to the same limit.
    pub ergodic: bool,
    /// Number of squarings of the lazy kernel performed.
    pub iterations: usize,
}

/// Stationary distribution by repeated squaring of the lazy kernel
/// `(I + K)/2`, which has the same stationary distributions as `K` and
/// removes periodicity.
///
/// The chain is declared ergodic when the limit rows from every start agree
/// within `tol` in total variation. Otherwise the distribution reported is
/// the limit from the first start.
pub fn stationary_distribution(kernel: &DMatrix<f64>, tol: f64) -> Stationary {
    let n = kernel.nrows();
    if n == 0 {
        return Stationary {
            distribution: Vec::new(),
            ergodic: false,
            iterations: 0,
        };
    }
    let mut m = (DMatrix::identity(n, n) + kernel) * 0.5;
    let mut iterations = 0;
    while iterations < MAX_SQUARINGS {
        let next = normalize_rows(&m * &m);
        iterations += 1;
        let change = (&next - &m).amax();
        m = next;
        if change <= f64::EPSILON {
            break;
        }
    }
    // one extra lazy step polishes the fixed point
    let lazy = (DMatrix::identity(n, n) + kernel) * 0.5;
    let m = normalize_rows(&m * lazy);
    let first: Vec<f64> = m.row(0).iter().copied().collect();
    let ergodic = (1..n).all(|i| tv_row(&m, i, &first) <= tol);
    let distribution = if ergodic {
        let mut mu = vec![0.0; n];
        for i in 0..n {
            for (j, x) in mu.iter_mut().enumerate() {
                *x += m[(i, j)] / n as f64;
            }
        }
        let total: f64 = mu.iter().sum();
        mu.iter().map(|x| x.max(0.0) / total).collect()
    } else {
        first
    };
    Stationary {
        distribution,
        ergodic,
        iterations,
    }
}

fn normalize_rows(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in m.row_iter_mut() {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row /= sum;
        }
    }
    m
}

fn tv_row(m: &DMatrix<f64>, i: usize, mu: &[f64]) -> f64 {
    0.5 * mu.iter().enumerate().map(|(j, &x)| (m[(i, j)] - x).abs()).sum::<f64>()
}

/// `max_{i in starts} d_TV(K^t(i, .), μ)` for `m = K^t`.
pub fn max_tv(m: &DMatrix<f64>, mu: &[f64], starts: &[usize]) -> f64 {
    starts.iter().map(|&i| tv_row(m, i, mu)).fold(0.0, f64::max)
}

/// Smallest `t ≥ 1` with `max_i d_TV(K^t(i, .), μ) ≤ 1/4` over all starts.
pub fn mixing_time(kernel: &DMatrix<f64>, mu: &[f64], cap: u64) -> Result<u64> {
    let starts: Vec<usize> = (0..kernel.nrows()).collect();
    mixing_time_from(kernel, mu, &starts, cap)
}

/// [`mixing_time`] with the maximum taken over `starts` only.
///
/// Each start's distance to `μ` is nonincreasing in `t`, so the search
/// doubles and then descends bit by bit.
pub fn mixing_time_from(kernel: &DMatrix<f64>, mu: &[f64], starts: &[usize], cap: u64) -> Result<u64> {
    let n = kernel.nrows();
    if kernel.ncols() != n || mu.len() != n || starts.iter().any(|&i| i >= n) {
        return Err(Error::Dimension("kernel, stationary vector and starts disagree".into()));
    }
    if cap == 0 || starts.is_empty() {
        return Err(Error::InvalidParameter("mixing time needs cap >= 1 and at least one start".into()));
    }
    // powers[j] = K^(2^j) for 2^j <= cap
    let mut powers = vec![kernel.clone()];
    while 1u64.checked_shl(powers.len() as u32).is_some_and(|p| p <= cap) {
        let last = powers.last().expect("non-empty");
        if max_tv(last, mu, starts) <= MIXING_THRESHOLD {
            break;
        }
        let sq = last * last;
        powers.push(sq);
    }
    // largest t <= cap with distance above the threshold
    let mut t = 0u64;
    let mut m = DMatrix::identity(n, n);
    for j in (0..powers.len()).rev() {
        let step = 1u64 << j;
        if t + step > cap {
            continue;
        }
        let cand = &m * &powers[j];
        if max_tv(&cand, mu, starts) > MIXING_THRESHOLD {
            t += step;
            m = cand;
        }
    }
    if t >= cap {
        return Err(Error::MixingCap {
            cap,
            tv: max_tv(&m, mu, starts),
        });
    }
    Ok(t + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Stationary distribution over pairs, `[s][a]`.
    pub stationary: Vec<f64>,
    /// Minimum over unmasked pairs.
    pub mu_min: f64,
    /// `None` when the chain is not ergodic.
    pub t_mix: Option<u64>,
    pub ergodic: bool,
}

/// Behaviour-chain diagnostics. Masked pairs are excluded from `μ_min` and
/// from the starts of the mixing-time maximum.
pub fn diagnose(mdp: &TabularMdp, behavior: &BehaviorPolicy, cap: u64) -> Result<ChainDiagnostics> {
    let kernel = behavior_chain(mdp, behavior)?;
    let st = stationary_distribution(&kernel, DEFAULT_STATIONARY_TOL);
    let allowed: Vec<usize> = (0..mdp.num_pairs()).filter(|&i| mdp.mask()[i]).collect();
    let mu_min = allowed.iter().map(|&i| st.distribution[i]).fold(f64::INFINITY, f64::min);
    let t_mix = if st.ergodic {
        Some(mixing_time_from(&kernel, &st.distribution, &allowed, cap)?)
    } else {
        None
    };
    Ok(ChainDiagnostics {
        stationary: st.distribution,
        mu_min,
        t_mix,
        ergodic: st.ergodic,
    })
}

/// `K_t(s,a) = #{k < t : (s_k, a_k) = (s,a)}`, flat `[s][a]`.
pub fn visit_counts(trajectory: &[(usize, usize)], t: usize, num_states: usize, num_actions: usize) -> Result<Vec<u64>> {
    if t > trajectory.len() {
        return Err(Error::InvalidParameter(format!("t = {t} exceeds trajectory length {}", trajectory.len())));
    }
    let mut counts = vec![0u64; num_states * num_actions];
    for &(s, a) in &trajectory[..t] {
        if s >= num_states || a >= num_actions {
            return Err(Error::Dimension(format!("pair ({s}, {a}) out of range")));
        }
        counts[s * num_actions + a] += 1;
    }
    Ok(counts)
}

/// Deviation level `√(8 max{W, σ²/2^K} log(2K/δ)) + (4/3) R log(2K/δ)`
/// exceeded by `|Y_n|` with probability at most `δ`.
pub fn freedman_bound(w: f64, sigma_sq: f64, r: f64, k: u32, delta: f64) -> Result<f64> {
    if !(w >= 0.0 && w <= sigma_sq && sigma_sq.is_finite()) {
        return Err(Error::InvalidParameter(format!("need 0 <= W <= sigma^2, got W = {w}, sigma^2 = {sigma_sq}")));
    }
    if !(r >= 0.0 && r.is_finite()) || k == 0 || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need R >= 0, K >= 1 and delta in (0,1), got R = {r}, K = {k}, delta = {delta}"
        )));
    }
    let log_term = (2.0 * k as f64 / delta).ln();
    let floor = sigma_sq / 2f64.powf(k as f64);
    Ok((8.0 * w.max(floor) * log_term).sqrt() + 4.0 / 3.0 * r * log_term)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random::random_mdp;
    use crate::sampling::{RngStream, Trajectory};
    use proptest::prelude::*;

    fn matrix(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows.len(), rows[0].len(), &rows.concat())
    }

    #[test]
    fn single_pair_chain_is_identity() {
        let mdp = TabularMdp::new(1, 1, 0.5, vec![1.0], vec![0.0], None).unwrap();
        let k = behavior_chain(&mdp, &BehaviorPolicy::uniform(&mdp)).unwrap();
        assert_eq!(k, DMatrix::identity(1, 1));
    }

    #[test]
    fn chain_entries_follow_the_product_formula() {
        let mdp = TabularMdp::new(2, 2, 0.9, vec![0.3, 0.7, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0], vec![0.0; 4], None).unwrap();
        let b = BehaviorPolicy::from_rows(vec![vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        let k = behavior_chain(&mdp, &b).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                for s2 in 0..2 {
                    for a2 in 0..2 {
                        let want = mdp.transition_row(s, a)[s2] * b.prob(s2, a2);
                        assert_eq!(k[(s * 2 + a, s2 * 2 + a2)], want);
                    }
                }
            }
        }
    }

    #[test]
    fn random_chains_are_stochastic() {
        for seed in 0..5 {
            let mdp = random_mdp(5, 3, 0.9, seed).unwrap();
            let k = behavior_chain(&mdp, &BehaviorPolicy::uniform(&mdp)).unwrap();
            for row in k.row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_two_state_chain() {
        let st = stationary_distribution(&matrix(&[&[0.5, 0.5], &[0.5, 0.5]]), 1e-12);
        assert!(st.ergodic);
        assert!((st.distribution[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_kernel_is_not_ergodic() {
        let k = DMatrix::identity(3, 3);
        assert!(!stationary_distribution(&k, 1e-10).ergodic);
        let err = mixing_time(&k, &[1.0 / 3.0; 3], 1000).unwrap_err();
        assert!(matches!(err, Error::MixingCap { cap: 1000, .. }));
    }

    #[test]
    fn periodic_chain_still_has_a_stationary_distribution() {
        let st = stationary_distribution(&matrix(&[&[0.0, 1.0], &[1.0, 0.0]]), 1e-10);
        assert!(st.ergodic);
        assert!((st.distribution[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn matches_linear_solve_on_random_chain() {
        let mdp = random_mdp(3, 2, 0.9, 21).unwrap();
        let k = behavior_chain(&mdp, &BehaviorPolicy::uniform(&mdp)).unwrap();
        let st = stationary_distribution(&k, 1e-12);
        // (K^T - I) μ = 0 with the last equation replaced by Σ μ = 1
        let n = 6;
        let mut a = k.transpose() - DMatrix::identity(n, n);
        let mut rhs = nalgebra::DVector::zeros(n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        rhs[n - 1] = 1.0;
        let mu = a.lu().solve(&rhs).unwrap();
        assert!(st.ergodic);
        for i in 0..n {
            assert!((st.distribution[i] - mu[i]).abs() < 1e-8);
        }
        let once = nalgebra::RowDVector::from_row_slice(&st.distribution) * &k;
        assert!(once.iter().zip(&st.distribution).all(|(x, y)| (x - y).abs() < 1e-10));
    }

    #[test]
    fn one_step_mixing() {
        let mu = [0.2, 0.3, 0.5];
        let k = matrix(&[&mu, &mu, &mu]);
        assert_eq!(mixing_time(&k, &mu, DEFAULT_MIXING_CAP).unwrap(), 1);
    }

    #[test]
    fn two_state_mixing_matches_matrix_powers() {
        let k = matrix(&[&[0.9, 0.1], &[0.1, 0.9]]);
        let mu = [0.5, 0.5];
        let mut p = k.clone();
        let mut t = 1;
        while max_tv(&p, &mu, &[0, 1]) > 0.25 {
            p = &p * &k;
            t += 1;
        }
        assert_eq!(mixing_time(&k, &mu, DEFAULT_MIXING_CAP).unwrap(), t);
        // TV(t) = 0.5 * 0.8^t, so t_mix = 4
        assert_eq!(t, 4);
    }

    #[test]
    fn threshold_property_holds_on_random_chains() {
        for seed in 0..4 {
            let mdp = random_mdp(4, 2, 0.9, seed).unwrap();
            let k = behavior_chain(&mdp, &BehaviorPolicy::uniform(&mdp)).unwrap();
            let mu = stationary_distribution(&k, 1e-12).distribution;
            let t = mixing_time(&k, &mu, DEFAULT_MIXING_CAP).unwrap();
            let all: Vec<usize> = (0..8).collect();
            let pow = |t: u64| (0..t).fold(DMatrix::identity(8, 8), |m, _| m * &k);
            assert!(max_tv(&pow(t), &mu, &all) <= 0.25);
            if t > 1 {
                assert!(max_tv(&pow(t - 1), &mu, &all) > 0.25);
            }
        }
    }

    #[test]
    fn hard_instance_chain_is_reducible() {
        // states 0 and 3 are both absorbing
        let mdp = crate::hard::build_hard_mdp(0.9).unwrap();
        let d = diagnose(&mdp, &BehaviorPolicy::uniform(&mdp), DEFAULT_MIXING_CAP).unwrap();
        assert!(!d.ergodic);
        assert_eq!(d.t_mix, None);
    }

    #[test]
    fn diagnose_excludes_masked_pairs() {
        // state 1 only allows action 0; its masked pair gets no mass
        let mdp = TabularMdp::new(
            2,
            2,
            0.9,
            vec![0.5, 0.5, 0.1, 0.9, 0.2, 0.8, 0.0, 1.0],
            vec![0.0; 4],
            Some(vec![true, true, true, false]),
        )
        .unwrap();
        let d = diagnose(&mdp, &BehaviorPolicy::uniform(&mdp), DEFAULT_MIXING_CAP).unwrap();
        assert!(d.ergodic);
        assert!(d.stationary[3] < 1e-12);
        assert!(d.mu_min > 0.0);
        assert_eq!(d.mu_min, d.stationary[..3].iter().copied().fold(f64::INFINITY, f64::min));
        assert!(d.t_mix.unwrap() >= 1);
    }

    #[test]
    fn visit_count_edges() {
        let traj = vec![(1, 0); 7];
        assert_eq!(visit_counts(&traj, 0, 2, 2).unwrap(), vec![0; 4]);
        assert_eq!(visit_counts(&traj, 7, 2, 2).unwrap(), vec![0, 0, 7, 0]);
        assert!(visit_counts(&traj, 8, 2, 2).is_err());
    }

    #[test]
    fn empirical_occupancy_approaches_stationary() {
        let mdp = random_mdp(3, 2, 0.9, 8).unwrap();
        let b = BehaviorPolicy::uniform(&mdp);
        let mu = stationary_distribution(&behavior_chain(&mdp, &b).unwrap(), 1e-12).distribution;
        let mut tr = Trajectory::new(&mdp, &b, 0, RngStream::new(4, 0)).unwrap();
        let n = 1_000_000;
        let path: Vec<(usize, usize)> = (0..n).map(|_| {
            let (s, a, _) = tr.step();
            (s, a)
        }).collect();
        let k = visit_counts(&path, n, 3, 2).unwrap();
        for (c, m) in k.iter().zip(&mu) {
            assert!((*c as f64 / n as f64 - m).abs() < 0.02);
        }
    }

    #[test]
    fn freedman_closed_forms() {
        assert_eq!(freedman_bound(0.0, 0.0, 0.0, 3, 0.1).unwrap(), 0.0);
        let (s2, r, d) = (2.0, 0.5, 0.05);
        let l = (2.0f64 / d).ln();
        let want = (8.0 * s2 * l).sqrt() + 4.0 / 3.0 * r * l;
        assert!((freedman_bound(s2, s2, r, 1, d).unwrap() - want).abs() < 1e-12);
        assert!(freedman_bound(3.0, 2.0, 1.0, 1, 0.1).is_err());
        assert!(freedman_bound(1.0, 2.0, 1.0, 0, 0.1).is_err());
        assert!(freedman_bound(1.0, 2.0, 1.0, 1, 1.0).is_err());
    }

    #[test]
    fn freedman_holds_on_simulated_martingales() {
        // increments ±a_k with a_k chosen from the past, so W_n is random
        let (n, r, delta, runs) = (1000, 1.0, 0.05, 2000);
        let sigma_sq = n as f64 * r * r;
        let mut violations = 0;
        for run in 0..runs {
            let mut rng = RngStream::new(99, run);
            let (mut y, mut w) = (0.0f64, 0.0f64);
            for _ in 0..n {
                let a = if y >= 0.0 { r } else { 0.5 * r };
                w += a * a;
                y += if rng.next_u64() >> 63 == 0 { a } else { -a };
            }
            if y.abs() > freedman_bound(w, sigma_sq, r, 10, delta).unwrap() {
                violations += 1;
            }
        }
        assert!((violations as f64) / (runs as f64) <= delta);
    }

    proptest! {
        #[test]
        fn freedman_is_monotone(w in 0.0..10.0f64, extra in 0.0..10.0f64, r in 0.0..5.0f64, k in 1u32..20, d in 0.01..0.5f64) {
            let s = w + extra;
            let base = freedman_bound(w, s, r, k, d).unwrap();
            prop_assert!(freedman_bound((w + 0.1).min(s), s, r, k, d).unwrap() >= base - 1e-12);
            prop_assert!(freedman_bound(w, s + 1.0, r, k, d).unwrap() >= base - 1e-12);
            prop_assert!(freedman_bound(w, s, r + 0.1, k, d).unwrap() >= base - 1e-12);
            // growing K shrinks the σ²/2^K floor, so monotonicity in K needs W above it
            if w >= s / 2f64.powf(k as f64) {
                prop_assert!(freedman_bound(w, s, r, k + 1, d).unwrap() >= base - 1e-12);
            }
            prop_assert!(freedman_bound(w, s, r, k, d * 0.9).unwrap() >= base - 1e-12);
        }

        #[test]
        fn visit_counts_are_monotone_in_t(path in proptest::collection::vec((0usize..3, 0usize..2), 0..60), cut in 0.0..1.0f64) {
            let t1 = path.len();
            let t2 = (cut * t1 as f64) as usize;
            let k1 = visit_counts(&path, t1, 3, 2).unwrap();
            let k2 = visit_counts(&path, t2, 3, 2).unwrap();
            prop_assert_eq!(k1.iter().sum::<u64>(), t1 as u64);
            prop_assert!(k1.iter().zip(&k2).all(|(a, b)| a >= b));
        }

        #[test]
        fn stationary_is_invariant_under_the_kernel(seed in 0u64..200) {
            let mdp = random_mdp(3, 2, 0.9, seed).unwrap();
            let k = behavior_chain(&mdp, &BehaviorPolicy::uniform(&mdp)).unwrap();
            let st = stationary_distribution(&k, 1e-10);
            let once = nalgebra::RowDVector::from_row_slice(&st.distribution) * &k;
            let tv: f64 = 0.5 * once.iter().zip(&st.distribution).map(|(a, b)| (a - b).abs()).sum::<f64>();
            prop_assert!(tv <= 1e-10);
            prop_assert!((st.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
