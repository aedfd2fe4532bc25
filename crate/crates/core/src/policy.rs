//! Policy representations and guide-policy constructors.
//!
//! A [`TabularPolicy`] stores one action distribution per `(step, state)`
//! pair. Guide policies come from three constructors: the exact optimal
//! policy ([`scripted_optimal_guide`]), a noise-corrupted version of any base
//! policy ([`corrupted_guide`]), and behavior cloning from demonstration
//! trajectories ([`bc_guide`]).

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dp::value_iteration;
use crate::error::{Error, Result};
use crate::mdp::{sample_index, MdpSpec, Trajectory, TrajectoryRecord, TransitionStep, PROB_TOL};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TabularPolicyRaw {
    #[serde(rename = "H")]
    horizon: usize,
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    probs: Vec<Vec<Vec<f64>>>,
}

/// Per-step state-conditioned action distributions, `probs[h][s][a]`.
///
/// Immutable after construction; every row is validated to be a probability
/// vector (sum 1 within `PROB_TOL`, no negative entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabularPolicyRaw")]
pub struct TabularPolicy {
    #[serde(rename = "H")]
    horizon: usize,
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    probs: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<TabularPolicyRaw> for TabularPolicy {
    type Error = Error;

    fn try_from(raw: TabularPolicyRaw) -> Result<Self> {
        TabularPolicy::from_probs(raw.horizon, raw.num_states, raw.num_actions, raw.probs)
    }
}

impl TabularPolicy {
    pub fn from_probs(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        probs: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if horizon == 0 || num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidSpec("H, S, A must be positive".to_string()));
        }
        if probs.len() != horizon {
            return Err(Error::InvalidSpec(format!(
                "policy has {} steps, expected H={horizon}",
                probs.len()
            )));
        }
        for h in 0..horizon {
            if probs[h].len() != num_states {
                return Err(Error::InvalidSpec(format!("policy step {h} not S-sized")));
            }
            for s in 0..num_states {
                let row = &probs[h][s];
                if row.len() != num_actions {
                    return Err(Error::InvalidSpec(format!(
                        "policy row ({h},{s}) has {} actions, expected {num_actions}",
                        row.len()
                    )));
                }
                if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                    return Err(Error::InvalidSpec(format!(
                        "policy row ({h},{s}) has a negative or non-finite entry"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidSpec(format!(
                        "policy row ({h},{s}) sums to {sum}"
                    )));
                }
            }
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            probs,
        })
    }

    /// The uniform policy over `A` actions at every `(h, s)`.
    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let row = vec![1.0 / num_actions as f64; num_actions];
        Self {
            horizon,
            num_states,
            num_actions,
            probs: vec![vec![row; num_states]; horizon],
        }
    }

    /// A deterministic policy from per-`(h, s)` action choices.
    pub fn from_deterministic(actions: &[Vec<usize>], num_actions: usize) -> Result<Self> {
        let horizon = actions.len();
        if horizon == 0 || actions[0].is_empty() {
            return Err(Error::InvalidSpec("empty action table".to_string()));
        }
        let num_states = actions[0].len();
        let mut probs = vec![vec![vec![0.0; num_actions]; num_states]; horizon];
        for h in 0..horizon {
            if actions[h].len() != num_states {
                return Err(Error::InvalidSpec("ragged action table".to_string()));
            }
            for s in 0..num_states {
                let a = actions[h][s];
                if a >= num_actions {
                    return Err(Error::InvalidSpec(format!(
                        "action {a} out of range at ({h},{s})"
                    )));
                }
                probs[h][s][a] = 1.0;
            }
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn action_probs(&self, h: usize, s: usize) -> &[f64] {
        &self.probs[h][s]
    }

    pub fn sample_action(&self, h: usize, s: usize, rng: &mut ChaCha8Rng) -> usize {
        sample_index(&self.probs[h][s], rng)
    }

    /// Modal action with ties broken toward the lowest index.
    pub fn modal_action(&self, h: usize, s: usize) -> usize {
        let row = &self.probs[h][s];
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn same_dims_as_mdp(&self, mdp: &MdpSpec) -> bool {
        mdp.same_dims(self.horizon, self.num_states, self.num_actions)
    }
}

/// Rolls out `policy` on `mdp` for one full episode.
pub fn rollout_policy(mdp: &MdpSpec, policy: &TabularPolicy, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    if !policy.same_dims_as_mdp(mdp) {
        return Err(Error::DimensionMismatch(
            "policy dimensions do not match MDP".to_string(),
        ));
    }
    let init_state = mdp.sample_init(rng);
    let mut state = init_state;
    let mut steps = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let action = policy.sample_action(h, state, rng);
        let (next_state, reward) = mdp.step(h, state, action, rng)?;
        steps.push(TransitionStep {
            state,
            action,
            reward,
            next_state,
        });
        state = next_state;
    }
    Ok(Trajectory { init_state, steps })
}

/// Returns the exact optimal policy of `mdp` for use as a guide.
pub fn scripted_optimal_guide(mdp: &MdpSpec) -> TabularPolicy {
    value_iteration(mdp).pi_star
}

/// Mixes `base` with the uniform policy: `(1-noise)·base + noise·uniform`
/// at every `(h, s)`.
pub fn corrupted_guide(base: &TabularPolicy, noise: f64) -> Result<TabularPolicy> {
    if !(0.0..=1.0).contains(&noise) || !noise.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise {noise} outside [0,1]"
        )));
    }
    let u = noise / base.num_actions as f64;
    let probs = base
        .probs
        .iter()
        .map(|per_state| {
            per_state
                .iter()
                .map(|row| row.iter().map(|&p| (1.0 - noise) * p + u).collect())
                .collect()
        })
        .collect();
    TabularPolicy::from_probs(base.horizon, base.num_states, base.num_actions, probs)
}

/// Fallback rule for `(h, s)` cells no demonstration ever visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcFallback {
    Uniform,
    LowestAction,
}

/// A set of demonstration trajectories with provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    pub trajectories: Vec<Trajectory>,
    pub policy_label: String,
    pub seed: u64,
}

/// JSONL header line for a demo dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoHeader {
    kind: String,
    schema_version: u32,
    policy: String,
    seed: u64,
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    #[serde(rename = "H")]
    horizon: usize,
    num_trajectories: usize,
}

impl DemoDataset {
    pub fn validate_dims(&self, horizon: usize, num_states: usize, num_actions: usize) -> Result<()> {
        for t in &self.trajectories {
            t.validate_dims(horizon, num_states, num_actions)?;
        }
        Ok(())
    }

    /// Serializes as JSON Lines: one metadata header line, then one
    /// trajectory record per line. Per-trajectory seeds are `seed + index`.
    pub fn to_jsonl(&self, horizon: usize, num_states: usize, num_actions: usize) -> Result<String> {
        let header = DemoHeader {
            kind: "demo_dataset".to_string(),
            schema_version: 1,
            policy: self.policy_label.clone(),
            seed: self.seed,
            num_states,
            num_actions,
            horizon,
            num_trajectories: self.trajectories.len(),
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for (i, t) in self.trajectories.iter().enumerate() {
            let record = TrajectoryRecord::from_trajectory(t, self.seed.wrapping_add(i as u64));
            out.push_str(&serde_json::to_string(&record)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses the JSONL format written by [`DemoDataset::to_jsonl`] and
    /// returns the dataset plus its recorded `(H, S, A)` dimensions.
    pub fn from_jsonl(text: &str) -> Result<(Self, (usize, usize, usize))> {
        let mut lines = text.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::InvalidSpec("empty demo file".to_string()))?;
        let header: DemoHeader = serde_json::from_str(header_line)?;
        if header.kind != "demo_dataset" {
            return Err(Error::InvalidSpec(format!(
                "expected demo_dataset header, found kind {:?}",
                header.kind
            )));
        }
        let mut trajectories = Vec::with_capacity(header.num_trajectories);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let record: TrajectoryRecord = serde_json::from_str(line)?;
            trajectories.push(record.into_trajectory());
        }
        if trajectories.len() != header.num_trajectories {
            return Err(Error::InvalidSpec(format!(
                "header promises {} trajectories, file has {}",
                header.num_trajectories,
                trajectories.len()
            )));
        }
        let dataset = Self {
            trajectories,
            policy_label: header.policy,
            seed: header.seed,
        };
        dataset.validate_dims(header.horizon, header.num_states, header.num_actions)?;
        Ok((dataset, (header.horizon, header.num_states, header.num_actions)))
    }
}

/// Behavior cloning: empirical action frequencies at every visited `(h, s)`,
/// the fallback rule elsewhere.
pub fn bc_guide(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    demos: &DemoDataset,
    fallback: BcFallback,
) -> Result<TabularPolicy> {
    if demos.trajectories.is_empty() {
        return Err(Error::EmptySource("demo dataset is empty".to_string()));
    }
    demos.validate_dims(horizon, num_states, num_actions)?;
    let mut counts = vec![vec![vec![0u64; num_actions]; num_states]; horizon];
    for t in &demos.trajectories {
        for (h, step) in t.steps.iter().enumerate() {
            counts[h][step.state][step.action] += 1;
        }
    }
    let mut probs = vec![vec![vec![0.0; num_actions]; num_states]; horizon];
    for h in 0..horizon {
        for s in 0..num_states {
            let total: u64 = counts[h][s].iter().sum();
            if total == 0 {
                match fallback {
                    BcFallback::Uniform => {
                        probs[h][s] = vec![1.0 / num_actions as f64; num_actions];
                    }
                    BcFallback::LowestAction => {
                        probs[h][s][0] = 1.0;
                    }
                }
            } else {
                for a in 0..num_actions {
                    probs[h][s][a] = counts[h][s][a] as f64 / total as f64;
                }
            }
        }
    }
    TabularPolicy::from_probs(horizon, num_states, num_actions, probs)
}
