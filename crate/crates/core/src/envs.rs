//! Canonical tabular environments.
//!
//! The combination lock is a hard-exploration chain: one seeded action
//! sequence stays on the rewarding chain, any other action falls into an
//! absorbing region. The gridworld is an easier navigation task with optional
//! action slip.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::MdpSpec;
use crate::rng::{substream, Purpose};

/// A combination-lock MDP together with its secret action sequence.
///
/// States `0..H` are the chain ("red") states, one per step; states `H..2H`
/// are per-step absorbing ("blue") states. Starting at chain state 0, taking
/// the correct action at chain state `h` moves to chain state `h+1`; any
/// wrong action drops permanently into the blue region. The single nonzero
/// reward is earned by taking the correct action at the last chain state on
/// the last step.
#[derive(Debug, Clone)]
pub struct CombinationLock {
    pub mdp: MdpSpec,
    /// The correct action at each step, drawn from the env substream of `seed`.
    pub correct_actions: Vec<usize>,
    horizon: usize,
}

impl CombinationLock {
    /// Chain ("red") state index for step `h`.
    pub fn chain_state(&self, h: usize) -> usize {
        h
    }

    /// Absorbing ("blue") state index for step `h`.
    pub fn blue_state(&self, h: usize) -> usize {
        self.horizon + h
    }
}

/// Builds a combination lock of the given horizon.
///
/// The correct action sequence is drawn from a seeded RNG so learned tables
/// cannot exploit a fixed pattern. Under the uniform policy, occupancy of the
/// chain state at step `h` is exactly `2^{-h}` and the mean return is `2^{-H}`.
pub fn build_combination_lock(horizon: usize, seed: u64) -> Result<CombinationLock> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("lock horizon must be >= 1".to_string()));
    }
    let num_actions = 2usize;
    let num_states = 2 * horizon;
    let mut rng = substream(seed, Purpose::Env, 0);
    let correct_actions: Vec<usize> = (0..horizon).map(|_| rng.gen_range(0..num_actions)).collect();

    let chain = |k: usize| k;
    let blue = |k: usize| horizon + k;

    // Dynamics are the same at every step; the reward is attached to the
    // last step only.
    let mut per_state = vec![vec![vec![0.0; num_states]; num_actions]; num_states];
    for k in 0..horizon {
        let next_blue = blue((k + 1).min(horizon - 1));
        for a in 0..num_actions {
            let target = if a == correct_actions[k] && k + 1 < horizon {
                chain(k + 1)
            } else {
                next_blue
            };
            per_state[chain(k)][a][target] = 1.0;
            per_state[blue(k)][a][next_blue] = 1.0;
        }
    }

    let transition = vec![per_state; horizon];
    let mut reward = vec![vec![vec![0.0; num_actions]; num_states]; horizon];
    reward[horizon - 1][chain(horizon - 1)][correct_actions[horizon - 1]] = 1.0;

    let mut p0 = vec![0.0; num_states];
    p0[chain(0)] = 1.0;

    let mdp = MdpSpec::new(num_states, num_actions, horizon, p0, transition, reward)?;
    Ok(CombinationLock {
        mdp,
        correct_actions,
        horizon,
    })
}

/// Parameters for [`build_gridworld`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridworldParams {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub walls: Vec<(usize, usize)>,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub horizon: usize,
    pub slip_prob: f64,
}

/// A gridworld MDP with its start and goal state indices.
#[derive(Debug, Clone)]
pub struct Gridworld {
    pub mdp: MdpSpec,
    pub start_state: usize,
    pub goal_state: usize,
    pub width: usize,
    pub height: usize,
}

impl Gridworld {
    pub fn cell_state(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

const GRID_ACTIONS: usize = 4; // 0=up, 1=down, 2=left, 3=right

/// Builds a 4-action gridworld with action slip.
///
/// With probability `slip_prob` the chosen action is replaced by a uniformly
/// random one. Moves into walls or off the grid stay in place. The reward for
/// `(s, a)` is the probability that the step enters the goal, so rewards stay
/// a deterministic function of `(s, a)` while exact policy values equal
/// goal-reach probabilities; the goal is absorbing with zero further reward.
pub fn build_gridworld(params: &GridworldParams) -> Result<Gridworld> {
    let GridworldParams {
        width,
        height,
        ref walls,
        start,
        goal,
        horizon,
        slip_prob,
    } = *params;

    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("grid dimensions must be >= 1".to_string()));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("gridworld horizon must be >= 1".to_string()));
    }
    if !(0.0..1.0).contains(&slip_prob) {
        return Err(Error::InvalidArgument(format!(
            "slip_prob {slip_prob} outside [0,1)"
        )));
    }
    let in_bounds = |(x, y): (usize, usize)| x < width && y < height;
    if !in_bounds(start) || !in_bounds(goal) {
        return Err(Error::InvalidArgument("start/goal outside the grid".to_string()));
    }
    for &w in walls {
        if !in_bounds(w) {
            return Err(Error::InvalidArgument(format!("wall {w:?} outside the grid")));
        }
    }
    let is_wall = |cell: (usize, usize)| walls.contains(&cell);
    if is_wall(start) || is_wall(goal) {
        return Err(Error::InvalidArgument("start/goal on a wall".to_string()));
    }

    let num_states = width * height;
    let index = |(x, y): (usize, usize)| y * width + x;
    let goal_state = index(goal);

    let move_to = |(x, y): (usize, usize), a: usize| -> (usize, usize) {
        let target = match a {
            0 if y > 0 => (x, y - 1),
            1 if y + 1 < height => (x, y + 1),
            2 if x > 0 => (x - 1, y),
            3 if x + 1 < width => (x + 1, y),
            _ => (x, y),
        };
        if is_wall(target) {
            (x, y)
        } else {
            target
        }
    };

    let mut per_state = vec![vec![vec![0.0; num_states]; GRID_ACTIONS]; num_states];
    let mut per_state_reward = vec![vec![0.0; GRID_ACTIONS]; num_states];
    for y in 0..height {
        for x in 0..width {
            let s = index((x, y));
            if s == goal_state {
                for a in 0..GRID_ACTIONS {
                    per_state[s][a][s] = 1.0;
                }
                continue;
            }
            for a in 0..GRID_ACTIONS {
                let row = &mut per_state[s][a];
                row[index(move_to((x, y), a))] += 1.0 - slip_prob;
                for b in 0..GRID_ACTIONS {
                    row[index(move_to((x, y), b))] += slip_prob / GRID_ACTIONS as f64;
                }
                per_state_reward[s][a] = row[goal_state];
            }
        }
    }

    let transition = vec![per_state; horizon];
    let reward = vec![per_state_reward; horizon];
    let mut p0 = vec![0.0; num_states];
    p0[index(start)] = 1.0;

    let mdp = MdpSpec::new(num_states, GRID_ACTIONS, horizon, p0, transition, reward)?;
    Ok(Gridworld {
        mdp,
        start_state: index(start),
        goal_state,
        width,
        height,
    })
}
