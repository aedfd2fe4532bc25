//! Explicit finite-horizon tabular MDPs.
//!
//! An [`MdpSpec`] stores a time-inhomogeneous MDP as dense per-step arrays:
//! transition probabilities `transition[h][s][a][s']`, deterministic rewards
//! `reward[h][s][a]` in `[0,1]`, and an initial state distribution `p0`.
//! Steps are 0-indexed: an episode visits steps `0..H`.
//!
//! The JSON wire format is a single document
//! `{"S":…, "A":…, "H":…, "p0":[…], "transition":[h][s][a][s'], "reward":[h][s][a]}`
//! and round-trips value-exactly for every f64.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for probability-vector normalization checks.
pub const PROB_TOL: f64 = 1e-12;

/// Absolute tolerance for exact dynamic-programming identities.
pub const DP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpSpecRaw {
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    #[serde(rename = "H")]
    horizon: usize,
    p0: Vec<f64>,
    transition: Vec<Vec<Vec<Vec<f64>>>>,
    reward: Vec<Vec<Vec<f64>>>,
}

/// A finite-horizon time-inhomogeneous tabular MDP.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpSpecRaw")]
pub struct MdpSpec {
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    #[serde(rename = "H")]
    horizon: usize,
    p0: Vec<f64>,
    transition: Vec<Vec<Vec<Vec<f64>>>>,
    reward: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<MdpSpecRaw> for MdpSpec {
    type Error = Error;

    fn try_from(raw: MdpSpecRaw) -> Result<Self> {
        MdpSpec::new(
            raw.num_states,
            raw.num_actions,
            raw.horizon,
            raw.p0,
            raw.transition,
            raw.reward,
        )
    }
}

fn check_prob_vector(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::InvalidSpec(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidSpec(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

impl MdpSpec {
    /// Validates and constructs an MDP from dense arrays.
    ///
    /// Every transition row must sum to 1 within `PROB_TOL` with no negative
    /// entries, every reward must lie in `[0,1]`, and `p0` must be a
    /// distribution over the `S` states.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        p0: Vec<f64>,
        transition: Vec<Vec<Vec<Vec<f64>>>>,
        reward: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::InvalidSpec(
                "S, A, and H must all be positive".to_string(),
            ));
        }
        if p0.len() != num_states {
            return Err(Error::InvalidSpec(format!(
                "p0 has length {}, expected S={num_states}",
                p0.len()
            )));
        }
        check_prob_vector(&p0, "p0")?;
        if transition.len() != horizon || reward.len() != horizon {
            return Err(Error::InvalidSpec(format!(
                "transition/reward have {}/{} steps, expected H={horizon}",
                transition.len(),
                reward.len()
            )));
        }
        for h in 0..horizon {
            if transition[h].len() != num_states || reward[h].len() != num_states {
                return Err(Error::InvalidSpec(format!("step {h} arrays not S-sized")));
            }
            for s in 0..num_states {
                if transition[h][s].len() != num_actions || reward[h][s].len() != num_actions {
                    return Err(Error::InvalidSpec(format!(
                        "step {h} state {s} arrays not A-sized"
                    )));
                }
                for a in 0..num_actions {
                    let row = &transition[h][s][a];
                    if row.len() != num_states {
                        return Err(Error::InvalidSpec(format!(
                            "transition row ({h},{s},{a}) has length {}, expected {num_states}",
                            row.len()
                        )));
                    }
                    check_prob_vector(row, &format!("transition row ({h},{s},{a})"))?;
                    let r = reward[h][s][a];
                    if !(0.0..=1.0).contains(&r) || !r.is_finite() {
                        return Err(Error::InvalidSpec(format!(
                            "reward ({h},{s},{a}) = {r} outside [0,1]"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            p0,
            transition,
            reward,
        })
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

    pub fn init_dist(&self) -> &[f64] {
        &self.p0
    }

    /// Transition probability vector over next states for `(h, s, a)`.
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.transition[h][s][a]
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.reward[h][s][a]
    }

    fn check_indices(&self, h: usize, s: usize, a: usize) -> Result<()> {
        if h >= self.horizon {
            return Err(Error::IndexOutOfRange(format!(
                "step {h} >= H={}",
                self.horizon
            )));
        }
        if s >= self.num_states {
            return Err(Error::IndexOutOfRange(format!(
                "state {s} >= S={}",
                self.num_states
            )));
        }
        if a >= self.num_actions {
            return Err(Error::IndexOutOfRange(format!(
                "action {a} >= A={}",
                self.num_actions
            )));
        }
        Ok(())
    }

    /// Samples one environment transition: `next_state ~ P_h(·|s,a)` and the
    /// deterministic reward `r_h(s,a)`.
    pub fn step(&self, h: usize, s: usize, a: usize, rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
        self.check_indices(h, s, a)?;
        Ok((
            sample_index(&self.transition[h][s][a], rng),
            self.reward[h][s][a],
        ))
    }

    /// Samples an initial state from `p0`.
    pub fn sample_init(&self, rng: &mut ChaCha8Rng) -> usize {
        sample_index(&self.p0, rng)
    }

    /// True if `(horizon, num_states, num_actions)` match.
    pub fn same_dims(&self, horizon: usize, num_states: usize, num_actions: usize) -> bool {
        self.horizon == horizon && self.num_states == num_states && self.num_actions == num_actions
    }
}

/// Draws an index from a probability vector.
///
/// Never returns an index with zero probability: rounding at the tail falls
/// back to the last positive entry.
pub(crate) fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("probability vector sums to 1")
}

/// One environment transition inside a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionStep {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// A full H-step episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub init_state: usize,
    pub steps: Vec<TransitionStep>,
}

impl Trajectory {
    /// Undiscounted episode return.
    pub fn episode_return(&self) -> f64 {
        self.steps.iter().map(|t| t.reward).sum()
    }

    /// Checks length and index ranges against `(H, S, A)` dimensions.
    pub fn validate_dims(&self, horizon: usize, num_states: usize, num_actions: usize) -> Result<()> {
        if self.steps.len() != horizon {
            return Err(Error::DimensionMismatch(format!(
                "trajectory has {} steps, expected H={horizon}",
                self.steps.len()
            )));
        }
        if self.init_state >= num_states {
            return Err(Error::DimensionMismatch(format!(
                "init state {} >= S={num_states}",
                self.init_state
            )));
        }
        for (h, t) in self.steps.iter().enumerate() {
            if t.state >= num_states || t.next_state >= num_states {
                return Err(Error::DimensionMismatch(format!(
                    "state index out of range at step {h}"
                )));
            }
            if t.action >= num_actions {
                return Err(Error::DimensionMismatch(format!(
                    "action index out of range at step {h}"
                )));
            }
            if !(0.0..=1.0).contains(&t.reward) {
                return Err(Error::DimensionMismatch(format!(
                    "reward {} outside [0,1] at step {h}",
                    t.reward
                )));
            }
        }
        Ok(())
    }
}

/// JSON Lines form of a trajectory: `{"seed":…, "init":…, "steps":[[s,a,r,s'],…]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub init: usize,
    pub steps: Vec<(usize, usize, f64, usize)>,
}

impl TrajectoryRecord {
    pub fn from_trajectory(trajectory: &Trajectory, seed: u64) -> Self {
        Self {
            seed,
            init: trajectory.init_state,
            steps: trajectory
                .steps
                .iter()
                .map(|t| (t.state, t.action, t.reward, t.next_state))
                .collect(),
        }
    }

    pub fn into_trajectory(self) -> Trajectory {
        Trajectory {
            init_state: self.init,
            steps: self
                .steps
                .into_iter()
                .map(|(state, action, reward, next_state)| TransitionStep {
                    state,
                    action,
                    reward,
                    next_state,
                })
                .collect(),
        }
    }
}
