//! Jump-start roll-in training.
//!
//! Each episode a guide policy controls the first `h` steps and the ε-greedy
//! explorer controls the remaining `H-h`. The switch point `h` comes from
//! either a curriculum (start at `H`, drop one stage whenever the evaluated
//! combined policy clears the threshold β, with a per-stage episode budget
//! forcing progress) or random switching (draw `h` uniformly from a step set
//! every episode). Every transition of every trajectory is fed to the
//! Q-learner in time order; mixed offline/online replay is an opt-in.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::dp::{policy_value, value_iteration};
use crate::error::{Error, Result};
use crate::mdp::{MdpSpec, Trajectory, TransitionStep};
use crate::policy::{DemoDataset, TabularPolicy};
use crate::qlearn::{
    demo_transitions, epsilon_greedy_action, replay_mixed_batch, InitMode, OnlineBuffer, QLearner,
    QLearnerConfig, QTable, TransitionRecord,
};
use crate::rng::{substream, Purpose};

/// Episode-level composition: guide for steps `0..guide_steps`, ε-greedy over
/// the explorer's Q-table for the rest.
#[derive(Debug, Clone, Copy)]
pub struct CombinedPolicy<'a> {
    pub guide: &'a TabularPolicy,
    pub explorer: &'a QTable,
    pub guide_steps: usize,
    pub explorer_epsilon: f64,
}

impl CombinedPolicy<'_> {
    pub fn action(&self, h: usize, s: usize, rng: &mut ChaCha8Rng) -> usize {
        if h < self.guide_steps {
            self.guide.sample_action(h, s, rng)
        } else {
            epsilon_greedy_action(self.explorer, h, s, self.explorer_epsilon, rng)
        }
    }

    fn validate(&self, mdp: &MdpSpec) -> Result<()> {
        if !self.guide.same_dims_as_mdp(mdp)
            || !mdp.same_dims(
                self.explorer.horizon(),
                self.explorer.num_states(),
                self.explorer.num_actions(),
            )
        {
            return Err(Error::DimensionMismatch(
                "combined policy dimensions do not match MDP".to_string(),
            ));
        }
        if self.guide_steps > mdp.horizon() {
            return Err(Error::InvalidArgument(format!(
                "guide_steps {} > H={}",
                self.guide_steps,
                mdp.horizon()
            )));
        }
        if !(0.0..=1.0).contains(&self.explorer_epsilon) {
            return Err(Error::InvalidArgument(format!(
                "explorer_epsilon {} outside [0,1]",
                self.explorer_epsilon
            )));
        }
        Ok(())
    }
}

/// Rolls out the combined policy for one full episode.
pub fn rollout_combined(
    mdp: &MdpSpec,
    combined: &CombinedPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    combined.validate(mdp)?;
    let init_state = mdp.sample_init(rng);
    let mut state = init_state;
    let mut steps = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let action = combined.action(h, state, rng);
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

/// Builds the explicit tabular form of a combined policy: guide rows below
/// the switch point, the explorer's deterministic rows from it on.
pub fn combined_tabular(
    guide: &TabularPolicy,
    explorer_greedy: &TabularPolicy,
    guide_steps: usize,
) -> Result<TabularPolicy> {
    if guide.horizon() != explorer_greedy.horizon()
        || guide.num_states() != explorer_greedy.num_states()
        || guide.num_actions() != explorer_greedy.num_actions()
    {
        return Err(Error::DimensionMismatch(
            "guide and explorer dimensions differ".to_string(),
        ));
    }
    let (horizon, num_states, num_actions) =
        (guide.horizon(), guide.num_states(), guide.num_actions());
    let probs = (0..horizon)
        .map(|h| {
            let src = if h < guide_steps { guide } else { explorer_greedy };
            (0..num_states)
                .map(|s| src.action_probs(h, s).to_vec())
                .collect()
        })
        .collect();
    TabularPolicy::from_probs(horizon, num_states, num_actions, probs)
}

/// Monte-Carlo evaluation of a combined policy with exploration noise
/// disabled: the explorer segment acts greedily, the guide segment is
/// unchanged.
pub fn evaluate_policy(
    mdp: &MdpSpec,
    combined: &CombinedPolicy,
    n_episodes: u64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("n_episodes must be >= 1".to_string()));
    }
    let greedy = CombinedPolicy {
        explorer_epsilon: 0.0,
        ..*combined
    };
    let mut total = 0.0;
    for _ in 0..n_episodes {
        total += rollout_combined(mdp, &greedy, rng)?.episode_return();
    }
    Ok(total / n_episodes as f64)
}

/// Exact evaluation of a combined policy via policy evaluation on the
/// explicit tabular composition (greedy explorer).
pub fn evaluate_policy_exact(
    mdp: &MdpSpec,
    guide: &TabularPolicy,
    explorer: &QTable,
    guide_steps: usize,
) -> Result<f64> {
    let composed = combined_tabular(guide, &explorer.greedy_policy(), guide_steps)?;
    Ok(policy_value(mdp, &composed)?.mean_return)
}

/// Outcome of a curriculum bookkeeping call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdvanceOutcome {
    pub advanced: bool,
    pub forced: bool,
}

const NO_ADVANCE: AdvanceOutcome = AdvanceOutcome {
    advanced: false,
    forced: false,
};

/// Curriculum over guide steps: a strictly decreasing stage sequence, an
/// evaluation window, the threshold β, and a per-stage episode budget.
///
/// A stage advances when the moving average of the recent evaluations (up to
/// `moving_average_window` of them, fewer while the window is filling)
/// reaches β, or — flagged as a forced advance — when the stage's episode
/// budget runs out.
#[derive(Debug, Clone)]
pub struct CurriculumState {
    sequence: Vec<usize>,
    stage_index: usize,
    eval_window: VecDeque<f64>,
    beta: f64,
    stage_episode_budget: u64,
    moving_average_window: usize,
    episodes_in_stage: u64,
    completed: bool,
}

impl CurriculumState {
    pub fn new(
        sequence: Vec<usize>,
        beta: f64,
        stage_episode_budget: u64,
        moving_average_window: usize,
    ) -> Result<Self> {
        if sequence.is_empty() {
            return Err(Error::InvalidArgument("empty guide-step sequence".to_string()));
        }
        if !sequence.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument(
                "guide-step sequence must be strictly decreasing".to_string(),
            ));
        }
        if stage_episode_budget == 0 || moving_average_window == 0 {
            return Err(Error::InvalidArgument(
                "stage budget and window must be >= 1".to_string(),
            ));
        }
        Ok(Self {
            sequence,
            stage_index: 0,
            eval_window: VecDeque::new(),
            beta,
            stage_episode_budget,
            moving_average_window,
            episodes_in_stage: 0,
            completed: false,
        })
    }

    /// The default unit-decrement sequence `H, H-1, …, 0`.
    pub fn default_sequence(horizon: usize) -> Vec<usize> {
        (0..=horizon).rev().collect()
    }

    pub fn current_guide_step(&self) -> usize {
        self.sequence[self.stage_index]
    }

    pub fn stage_index(&self) -> usize {
        self.stage_index
    }

    pub fn max_guide_step(&self) -> usize {
        self.sequence[0]
    }

    /// True once β was met at the final stage.
    pub fn completed(&self) -> bool {
        self.completed
    }

    fn advance(&mut self, forced: bool) -> AdvanceOutcome {
        self.eval_window.clear();
        self.episodes_in_stage = 0;
        if self.stage_index + 1 < self.sequence.len() {
            self.stage_index += 1;
            AdvanceOutcome { advanced: true, forced }
        } else {
            if !forced {
                self.completed = true;
            }
            AdvanceOutcome { advanced: false, forced }
        }
    }

    /// Counts one training episode against the stage budget; exhausting the
    /// budget forces an advance.
    pub fn record_episode(&mut self) -> AdvanceOutcome {
        self.episodes_in_stage += 1;
        if self.episodes_in_stage >= self.stage_episode_budget {
            self.advance(true)
        } else {
            NO_ADVANCE
        }
    }

    /// Pushes a fresh evaluation and advances if the moving average reaches β
    /// (or the stage budget is already exhausted).
    pub fn curriculum_advance(&mut self, new_eval: f64) -> AdvanceOutcome {
        if self.eval_window.len() == self.moving_average_window {
            self.eval_window.pop_front();
        }
        self.eval_window.push_back(new_eval);
        let mean: f64 =
            self.eval_window.iter().sum::<f64>() / self.eval_window.len() as f64;
        if mean >= self.beta {
            self.advance(false)
        } else if self.episodes_in_stage >= self.stage_episode_budget {
            self.advance(true)
        } else {
            NO_ADVANCE
        }
    }
}

/// Guide-step selection strategy.
#[derive(Debug, Clone)]
pub enum SwitchStrategy {
    Curriculum(CurriculumState),
    RandomSwitch { step_set: Vec<usize> },
}

impl SwitchStrategy {
    pub fn random_switch(step_set: Vec<usize>) -> Result<Self> {
        if step_set.is_empty() {
            return Err(Error::InvalidArgument("empty step set".to_string()));
        }
        Ok(SwitchStrategy::RandomSwitch { step_set })
    }

    fn max_step(&self) -> usize {
        match self {
            SwitchStrategy::Curriculum(c) => c.max_guide_step(),
            SwitchStrategy::RandomSwitch { step_set } => *step_set.iter().max().unwrap(),
        }
    }
}

/// Returns the guide step for the next episode: the curriculum's current
/// stage value, or a uniform draw from the step set.
pub fn select_guide_step(strategy: &SwitchStrategy, rng: &mut ChaCha8Rng) -> usize {
    match strategy {
        SwitchStrategy::Curriculum(c) => c.current_guide_step(),
        SwitchStrategy::RandomSwitch { step_set } => step_set[rng.gen_range(0..step_set.len())],
    }
}

/// Why a training run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    /// β met at the final curriculum stage.
    BetaMet,
    /// Exact suboptimality dropped to the requested threshold.
    SuccessThreshold,
}

/// One per-episode log row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub episode: u64,
    pub guide_steps: usize,
    pub train_return: f64,
    pub eval_return: Option<f64>,
    pub stage: usize,
    pub forced_advance: bool,
}

/// Full log of a training run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rows: Vec<EpisodeRow>,
    pub forced_advances: u64,
    pub total_transitions: u64,
    pub termination: Termination,
    pub warnings: Vec<String>,
    /// First episode count at which the stop threshold was met, if monitored.
    pub episodes_to_success: Option<u64>,
    /// Collected trajectories when `record_dataset` is on.
    pub dataset: Option<Vec<Trajectory>>,
    pub elapsed: Duration,
}

impl RunRecord {
    pub fn episodes_run(&self) -> u64 {
        self.rows.len() as u64
    }

    /// CSV with columns `episode,h,train_return,eval_return,stage,forced_advance`.
    /// Byte-deterministic for a fixed `(config, seed)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,h,train_return,eval_return,stage,forced_advance\n");
        for r in &self.rows {
            let eval = r.eval_return.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.episode, r.guide_steps, r.train_return, eval, r.stage, r.forced_advance
            );
        }
        out
    }
}

/// Evaluation flavor used inside training loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    MonteCarlo,
    Exact,
}

/// Fixed hyperparameters of a training run.
#[derive(Debug, Clone)]
pub struct TrainParams {
    pub learner: QLearnerConfig,
    pub init_mode: InitMode,
    pub budget: u64,
    pub eval_every: u64,
}

/// Mixed-replay configuration (opt-in).
#[derive(Debug, Clone)]
pub struct ReplayOptions<'a> {
    pub demos: Option<&'a DemoDataset>,
    pub batch_size: usize,
    pub online_fraction: f64,
    pub buffer_capacity: usize,
    pub updates_per_episode: usize,
    /// Also seed the online buffer with the demo transitions up front.
    pub prefill_online_with_demos: bool,
}

/// Optional behaviors of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions<'a> {
    pub eval_mode: Option<EvalMode>,
    /// Episodes per Monte-Carlo evaluation (ignored in exact mode).
    pub eval_episodes: u64,
    /// Stop once the exact suboptimality of the explorer's greedy policy
    /// drops to this value; checked at the evaluation cadence.
    pub stop_on_subopt: Option<f64>,
    pub record_dataset: bool,
    pub replay: Option<ReplayOptions<'a>>,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub qtable: QTable,
    pub record: RunRecord,
}

fn eval_combined(
    mdp: &MdpSpec,
    guide: &TabularPolicy,
    explorer: &QTable,
    strategy: &SwitchStrategy,
    mode: EvalMode,
    eval_episodes: u64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    match (mode, strategy) {
        (EvalMode::Exact, SwitchStrategy::Curriculum(c)) => {
            evaluate_policy_exact(mdp, guide, explorer, c.current_guide_step())
        }
        (EvalMode::Exact, SwitchStrategy::RandomSwitch { step_set }) => {
            // The random-switching policy is a uniform mixture over switch
            // points, so its exact value is the mean of the per-h values.
            let mut total = 0.0;
            for &h in step_set {
                total += evaluate_policy_exact(mdp, guide, explorer, h)?;
            }
            Ok(total / step_set.len() as f64)
        }
        (EvalMode::MonteCarlo, SwitchStrategy::Curriculum(c)) => {
            let combined = CombinedPolicy {
                guide,
                explorer,
                guide_steps: c.current_guide_step(),
                explorer_epsilon: 0.0,
            };
            evaluate_policy(mdp, &combined, eval_episodes, rng)
        }
        (EvalMode::MonteCarlo, SwitchStrategy::RandomSwitch { step_set }) => {
            let mut total = 0.0;
            for _ in 0..eval_episodes {
                let h = step_set[rng.gen_range(0..step_set.len())];
                let combined = CombinedPolicy {
                    guide,
                    explorer,
                    guide_steps: h,
                    explorer_epsilon: 0.0,
                };
                total += rollout_combined(mdp, &combined, rng)?.episode_return();
            }
            Ok(total / eval_episodes as f64)
        }
    }
}

/// Runs jump-start training: per episode, pick the guide step, roll out the
/// combined policy, feed every transition to the Q-learner in time order, and
/// at the evaluation cadence score the combined policy and let the curriculum
/// advance. Deterministic given `(seed, configuration)`.
pub fn train_jsrl(
    mdp: &MdpSpec,
    guide: &TabularPolicy,
    mut strategy: SwitchStrategy,
    params: &TrainParams,
    options: &TrainOptions,
    seed: u64,
) -> Result<TrainOutput> {
    let start = Instant::now();
    params.learner.validate()?;
    if !guide.same_dims_as_mdp(mdp) {
        return Err(Error::DimensionMismatch(
            "guide dimensions do not match MDP".to_string(),
        ));
    }
    if strategy.max_step() > mdp.horizon() {
        return Err(Error::InvalidArgument(format!(
            "guide step {} exceeds H={}",
            strategy.max_step(),
            mdp.horizon()
        )));
    }
    if params.eval_every == 0 {
        return Err(Error::InvalidArgument("eval_every must be >= 1".to_string()));
    }
    let eval_mode = options.eval_mode.unwrap_or(EvalMode::Exact);
    if eval_mode == EvalMode::MonteCarlo && options.eval_episodes == 0 {
        return Err(Error::InvalidArgument(
            "eval_episodes must be >= 1 in Monte-Carlo mode".to_string(),
        ));
    }

    let mut warnings = Vec::new();
    if matches!(strategy, SwitchStrategy::RandomSwitch { .. }) {
        warnings.push("random switching ignores beta gating".to_string());
    }

    let mut learner = QLearner::new(QTable::init(params.init_mode, guide), params.learner)?;
    let value_solution = options.stop_on_subopt.map(|_| value_iteration(mdp));
    let optimal_return = value_solution.as_ref().map(|v| v.optimal_return(mdp));

    let mut train_rng = substream(seed, Purpose::Training, 0);
    let mut switch_rng = substream(seed, Purpose::Switching, 0);

    let mut replay_state = match &options.replay {
        Some(replay) => {
            let offline: Vec<TransitionRecord> =
                replay.demos.map(demo_transitions).unwrap_or_default();
            let mut buffer = OnlineBuffer::new(replay.buffer_capacity);
            if replay.prefill_online_with_demos {
                for t in &offline {
                    buffer.push(*t);
                }
            }
            Some((buffer, offline, substream(seed, Purpose::Training, 1)))
        }
        None => None,
    };

    let mut rows: Vec<EpisodeRow> = Vec::new();
    let mut dataset: Option<Vec<Trajectory>> = options.record_dataset.then(Vec::new);
    let mut forced_advances = 0u64;
    let mut total_transitions = 0u64;
    let mut termination = Termination::BudgetExhausted;
    let mut episodes_to_success = None;
    let mut eval_counter = 0u64;

    for episode in 0..params.budget {
        let guide_steps = select_guide_step(&strategy, &mut switch_rng);
        let stage = match &strategy {
            SwitchStrategy::Curriculum(c) => c.stage_index(),
            SwitchStrategy::RandomSwitch { .. } => 0,
        };
        let combined = CombinedPolicy {
            guide,
            explorer: &learner.qtable,
            guide_steps,
            explorer_epsilon: params.learner.epsilon.at_episode(episode),
        };
        let trajectory = rollout_combined(mdp, &combined, &mut train_rng)?;
        total_transitions += trajectory.steps.len() as u64;

        match &mut replay_state {
            None => {
                for (h, step) in trajectory.steps.iter().enumerate() {
                    learner.update(&TransitionRecord {
                        h,
                        state: step.state,
                        action: step.action,
                        reward: step.reward,
                        next_state: step.next_state,
                    })?;
                }
            }
            Some((buffer, offline, replay_rng)) => {
                for (h, step) in trajectory.steps.iter().enumerate() {
                    buffer.push(TransitionRecord {
                        h,
                        state: step.state,
                        action: step.action,
                        reward: step.reward,
                        next_state: step.next_state,
                    });
                }
                let replay = options.replay.as_ref().unwrap();
                for _ in 0..replay.updates_per_episode {
                    let batch = replay_mixed_batch(
                        buffer,
                        offline,
                        replay.batch_size,
                        replay.online_fraction,
                        replay_rng,
                    )?;
                    for t in &batch {
                        learner.update(t)?;
                    }
                }
            }
        }

        let mut row = EpisodeRow {
            episode,
            guide_steps,
            train_return: trajectory.episode_return(),
            eval_return: None,
            stage,
            forced_advance: false,
        };
        if let Some(d) = dataset.as_mut() {
            d.push(trajectory);
        }

        if let SwitchStrategy::Curriculum(c) = &mut strategy {
            let outcome = c.record_episode();
            if outcome.forced {
                forced_advances += 1;
                row.forced_advance = true;
            }
        }

        if (episode + 1) % params.eval_every == 0 {
            let mut eval_rng = substream(seed, Purpose::Evaluation, eval_counter);
            eval_counter += 1;
            let eval = eval_combined(
                mdp,
                guide,
                &learner.qtable,
                &strategy,
                eval_mode,
                options.eval_episodes,
                &mut eval_rng,
            )?;
            row.eval_return = Some(eval);

            if let SwitchStrategy::Curriculum(c) = &mut strategy {
                let outcome = c.curriculum_advance(eval);
                if outcome.forced {
                    forced_advances += 1;
                    row.forced_advance = true;
                }
                if c.completed() {
                    rows.push(row);
                    termination = Termination::BetaMet;
                    break;
                }
            }

            if let (Some(threshold), Some(opt)) = (options.stop_on_subopt, optimal_return) {
                let greedy_return =
                    policy_value(mdp, &learner.qtable.greedy_policy())?.mean_return;
                if opt - greedy_return <= threshold {
                    episodes_to_success = Some(episode + 1);
                    rows.push(row);
                    termination = Termination::SuccessThreshold;
                    break;
                }
            }
        }
        rows.push(row);
    }

    Ok(TrainOutput {
        qtable: learner.qtable,
        record: RunRecord {
            rows,
            forced_advances,
            total_transitions,
            termination,
            warnings,
            episodes_to_success,
            dataset,
            elapsed: start.elapsed(),
        },
    })
}

/// Plain ε-greedy Q-learning from scratch: no guide, no curriculum.
/// Trajectory-for-trajectory identical to [`train_jsrl`] with
/// `RandomSwitch({0})` under the same seed.
pub fn train_scratch(
    mdp: &MdpSpec,
    params: &TrainParams,
    options: &TrainOptions,
    seed: u64,
) -> Result<TrainOutput> {
    let start = Instant::now();
    params.learner.validate()?;
    if params.eval_every == 0 {
        return Err(Error::InvalidArgument("eval_every must be >= 1".to_string()));
    }
    let eval_mode = options.eval_mode.unwrap_or(EvalMode::Exact);

    let uniform = TabularPolicy::uniform(mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut learner = QLearner::new(QTable::init(params.init_mode, &uniform), params.learner)?;
    let value_solution = options.stop_on_subopt.map(|_| value_iteration(mdp));
    let optimal_return = value_solution.as_ref().map(|v| v.optimal_return(mdp));

    let mut train_rng = substream(seed, Purpose::Training, 0);
    let mut rows: Vec<EpisodeRow> = Vec::new();
    let mut dataset: Option<Vec<Trajectory>> = options.record_dataset.then(Vec::new);
    let mut total_transitions = 0u64;
    let mut termination = Termination::BudgetExhausted;
    let mut episodes_to_success = None;
    let mut eval_counter = 0u64;

    for episode in 0..params.budget {
        let combined = CombinedPolicy {
            guide: &uniform,
            explorer: &learner.qtable,
            guide_steps: 0,
            explorer_epsilon: params.learner.epsilon.at_episode(episode),
        };
        let trajectory = rollout_combined(mdp, &combined, &mut train_rng)?;
        total_transitions += trajectory.steps.len() as u64;
        for (h, step) in trajectory.steps.iter().enumerate() {
            learner.update(&TransitionRecord {
                h,
                state: step.state,
                action: step.action,
                reward: step.reward,
                next_state: step.next_state,
            })?;
        }
        let mut row = EpisodeRow {
            episode,
            guide_steps: 0,
            train_return: trajectory.episode_return(),
            eval_return: None,
            stage: 0,
            forced_advance: false,
        };
        if let Some(d) = dataset.as_mut() {
            d.push(trajectory);
        }

        if (episode + 1) % params.eval_every == 0 {
            let mut eval_rng = substream(seed, Purpose::Evaluation, eval_counter);
            eval_counter += 1;
            let eval = match eval_mode {
                EvalMode::Exact => {
                    evaluate_policy_exact(mdp, &uniform, &learner.qtable, 0)?
                }
                EvalMode::MonteCarlo => {
                    let combined = CombinedPolicy {
                        guide: &uniform,
                        explorer: &learner.qtable,
                        guide_steps: 0,
                        explorer_epsilon: 0.0,
                    };
                    evaluate_policy(mdp, &combined, options.eval_episodes, &mut eval_rng)?
                }
            };
            row.eval_return = Some(eval);

            if let (Some(threshold), Some(opt)) = (options.stop_on_subopt, optimal_return) {
                let greedy_return =
                    policy_value(mdp, &learner.qtable.greedy_policy())?.mean_return;
                if opt - greedy_return <= threshold {
                    episodes_to_success = Some(episode + 1);
                    rows.push(row);
                    termination = Termination::SuccessThreshold;
                    break;
                }
            }
        }
        rows.push(row);
    }

    Ok(TrainOutput {
        qtable: learner.qtable,
        record: RunRecord {
            rows,
            forced_advances: 0,
            total_transitions,
            termination,
            warnings: Vec::new(),
            episodes_to_success,
            dataset,
            elapsed: start.elapsed(),
        },
    })
}
