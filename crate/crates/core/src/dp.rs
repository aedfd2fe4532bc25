//! Exact dynamic-programming oracles.
//!
//! Backward induction over the time-inhomogeneous horizon gives the optimal
//! values ([`value_iteration`]) and the values of an arbitrary policy
//! ([`policy_value`]); a forward pass gives the per-step state occupancy
//! distribution ([`occupancy`]). These are exact up to f64 rounding and serve
//! as the ground truth every learning component is checked against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::MdpSpec;
use crate::policy::TabularPolicy;

/// Exact solution of an MDP: `v_star[h][s]` for `h` in `0..=H` (row `H` is
/// zero), `q_star[h][s][a]`, and the greedy optimal policy with ties broken
/// toward the lowest action index.
#[derive(Debug, Clone)]
pub struct ValueSolution {
    pub v_star: Vec<Vec<f64>>,
    pub q_star: Vec<Vec<Vec<f64>>>,
    pub pi_star: TabularPolicy,
    /// Deterministic optimal action at each `(h, s)`.
    pub greedy_actions: Vec<Vec<usize>>,
}

impl ValueSolution {
    /// Optimal mean return from the initial distribution.
    pub fn optimal_return(&self, mdp: &MdpSpec) -> f64 {
        expected_over(mdp.init_dist(), &self.v_star[0])
    }
}

pub(crate) fn expected_over(dist: &[f64], values: &[f64]) -> f64 {
    dist.iter().zip(values).map(|(p, v)| p * v).sum()
}

/// Computes `Q*`, `V*`, and the greedy optimal policy by backward induction.
pub fn value_iteration(mdp: &MdpSpec) -> ValueSolution {
    let (horizon, num_states, num_actions) =
        (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut v_star = vec![vec![0.0; num_states]; horizon + 1];
    let mut q_star = vec![vec![vec![0.0; num_actions]; num_states]; horizon];
    let mut greedy_actions = vec![vec![0usize; num_states]; horizon];

    for h in (0..horizon).rev() {
        for s in 0..num_states {
            let mut best_a = 0;
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..num_actions {
                let future = expected_over(mdp.transition_row(h, s, a), &v_star[h + 1]);
                let q = mdp.reward(h, s, a) + future;
                q_star[h][s][a] = q;
                if q > best_q {
                    best_q = q;
                    best_a = a;
                }
            }
            v_star[h][s] = best_q;
            greedy_actions[h][s] = best_a;
        }
    }

    let pi_star = TabularPolicy::from_deterministic(&greedy_actions, num_actions)
        .expect("greedy actions are in range");
    ValueSolution {
        v_star,
        q_star,
        pi_star,
        greedy_actions,
    }
}

/// Exact evaluation of a fixed policy: `v[h][s]` for `h` in `0..=H`,
/// `q[h][s][a]`, and the mean return from `p0`.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub v: Vec<Vec<f64>>,
    pub q: Vec<Vec<Vec<f64>>>,
    pub mean_return: f64,
}

/// Evaluates `policy` exactly by backward induction.
pub fn policy_value(mdp: &MdpSpec, policy: &TabularPolicy) -> Result<PolicyEvaluation> {
    if !policy.same_dims_as_mdp(mdp) {
        return Err(Error::DimensionMismatch(
            "policy dimensions do not match MDP".to_string(),
        ));
    }
    let (horizon, num_states, num_actions) =
        (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut v = vec![vec![0.0; num_states]; horizon + 1];
    let mut q = vec![vec![vec![0.0; num_actions]; num_states]; horizon];

    for h in (0..horizon).rev() {
        for s in 0..num_states {
            let action_probs = policy.action_probs(h, s);
            let mut value = 0.0;
            for a in 0..num_actions {
                let future = expected_over(mdp.transition_row(h, s, a), &v[h + 1]);
                q[h][s][a] = mdp.reward(h, s, a) + future;
                value += action_probs[a] * q[h][s][a];
            }
            v[h][s] = value;
        }
    }

    let mean_return = expected_over(mdp.init_dist(), &v[0]);
    Ok(PolicyEvaluation { v, q, mean_return })
}

/// Per-step marginal state distribution `d[h][s]` under a policy,
/// for `h` in `0..H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyTable {
    pub d: Vec<Vec<f64>>,
}

impl OccupancyTable {
    pub fn horizon(&self) -> usize {
        self.d.len()
    }
}

/// Computes the state occupancy distribution by a forward pass:
/// `d[0] = p0`, `d[h+1][s'] = Σ_{s,a} d[h][s]·π_h(a|s)·P_h(s'|s,a)`.
pub fn occupancy(mdp: &MdpSpec, policy: &TabularPolicy) -> Result<OccupancyTable> {
    if !policy.same_dims_as_mdp(mdp) {
        return Err(Error::DimensionMismatch(
            "policy dimensions do not match MDP".to_string(),
        ));
    }
    let (horizon, num_states, num_actions) =
        (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut d = vec![vec![0.0; num_states]; horizon];
    d[0].copy_from_slice(mdp.init_dist());
    for h in 0..horizon - 1 {
        let mut next = vec![0.0; num_states];
        for s in 0..num_states {
            let mass = d[h][s];
            if mass == 0.0 {
                continue;
            }
            let action_probs = policy.action_probs(h, s);
            for a in 0..num_actions {
                let w = mass * action_probs[a];
                if w == 0.0 {
                    continue;
                }
                for (s_next, &p) in mdp.transition_row(h, s, a).iter().enumerate() {
                    if p > 0.0 {
                        next[s_next] += w * p;
                    }
                }
            }
        }
        d[h + 1] = next;
    }
    Ok(OccupancyTable { d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::build_combination_lock;
    use crate::mdp::{MdpSpec, DP_TOL};

    #[test]
    fn lock_h1_optimal_value_is_one() {
        let lock = build_combination_lock(1, 42).unwrap();
        let sol = value_iteration(&lock.mdp);
        assert!((sol.optimal_return(&lock.mdp) - 1.0).abs() < DP_TOL);
    }

    #[test]
    fn lock_optimal_value_is_one_any_horizon() {
        for h in [2, 4, 7] {
            let lock = build_combination_lock(h, 3).unwrap();
            let sol = value_iteration(&lock.mdp);
            assert!((sol.optimal_return(&lock.mdp) - 1.0).abs() < DP_TOL);
        }
    }

    #[test]
    fn all_zero_rewards_give_zero_values() {
        let mdp = MdpSpec::new(
            2,
            2,
            3,
            vec![0.5, 0.5],
            vec![
                vec![
                    vec![vec![0.5, 0.5], vec![1.0, 0.0]],
                    vec![vec![0.0, 1.0], vec![0.5, 0.5]],
                ];
                3
            ],
            vec![vec![vec![0.0; 2]; 2]; 3],
        )
        .unwrap();
        let sol = value_iteration(&mdp);
        for row in &sol.v_star {
            for &v in row {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn optimal_policy_value_matches_v_star() {
        let lock = build_combination_lock(5, 17).unwrap();
        let sol = value_iteration(&lock.mdp);
        let eval = policy_value(&lock.mdp, &sol.pi_star).unwrap();
        for h in 0..=lock.mdp.horizon() {
            for s in 0..lock.mdp.num_states() {
                assert!((eval.v[h][s] - sol.v_star[h][s]).abs() < DP_TOL);
            }
        }
        assert!((eval.mean_return - sol.optimal_return(&lock.mdp)).abs() < DP_TOL);
    }

    #[test]
    fn uniform_policy_on_lock_matches_closed_form() {
        // Return under the uniform policy is 2^{-H}: every one of the H
        // correct actions must be drawn with probability 1/2.
        for h in [3, 5] {
            let lock = build_combination_lock(h, 23).unwrap();
            let uniform = TabularPolicy::uniform(h, lock.mdp.num_states(), 2);
            let eval = policy_value(&lock.mdp, &uniform).unwrap();
            let expected = 0.5f64.powi(h as i32);
            assert!(
                (eval.mean_return - expected).abs() < DP_TOL,
                "H={h}: {} vs {expected}",
                eval.mean_return
            );
        }
    }

    #[test]
    fn occupancy_of_deterministic_chain_is_one_hot() {
        let lock = build_combination_lock(4, 9).unwrap();
        let sol = value_iteration(&lock.mdp);
        let occ = occupancy(&lock.mdp, &sol.pi_star).unwrap();
        for h in 0..4 {
            for s in 0..lock.mdp.num_states() {
                let expected = if s == lock.chain_state(h) { 1.0 } else { 0.0 };
                assert_eq!(occ.d[h][s], expected);
            }
        }
    }

    #[test]
    fn occupancy_of_uniform_policy_on_lock_halves_each_step() {
        let lock = build_combination_lock(6, 31).unwrap();
        let uniform = TabularPolicy::uniform(6, lock.mdp.num_states(), 2);
        let occ = occupancy(&lock.mdp, &uniform).unwrap();
        for h in 0..6 {
            let expected = 0.5f64.powi(h as i32);
            assert_eq!(occ.d[h][lock.chain_state(h)], expected);
        }
        for h in 0..6 {
            let sum: f64 = occ.d[h].iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
