//! Exact measurement oracles and sweep tooling.
//!
//! Everything here is computed by exact dynamic programming, no sampling:
//! the concentratability coefficient of a guide against the optimal
//! occupancy, exact policy suboptimality, the performance-difference
//! identity, and an episodes-to-success sweep over environment sizes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::dp::{occupancy, policy_value, value_iteration};
use crate::envs::build_combination_lock;
use crate::error::{Error, Result};
use crate::jsrl::{
    train_jsrl, train_scratch, CurriculumState, EvalMode, SwitchStrategy, TrainOptions,
    TrainParams,
};
use crate::mdp::MdpSpec;
use crate::policy::{corrupted_guide, scripted_optimal_guide, TabularPolicy};
use crate::qlearn::{InitMode, QLearnerConfig};

/// A partition of states into feature classes; the identity partition treats
/// every state as its own class.
///
/// Non-identity partitions are for measurement only: whether values and
/// policies genuinely depend on states only through the partition is a
/// property of the MDP that is not enforced here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateFeatureMap {
    classes: Vec<usize>,
    num_classes: usize,
}

impl StateFeatureMap {
    pub fn identity(num_states: usize) -> Self {
        Self {
            classes: (0..num_states).collect(),
            num_classes: num_states,
        }
    }

    /// Builds a partition from a per-state class assignment. Every class in
    /// `0..num_classes` must be hit by at least one state.
    pub fn new(classes: Vec<usize>, num_classes: usize) -> Result<Self> {
        if classes.is_empty() || num_classes == 0 {
            return Err(Error::InvalidArgument("empty feature map".to_string()));
        }
        let mut seen = vec![false; num_classes];
        for &c in &classes {
            if c >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "class {c} >= num_classes {num_classes}"
                )));
            }
            seen[c] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::InvalidArgument(
                "feature map is not surjective onto its classes".to_string(),
            ));
        }
        Ok(Self {
            classes,
            num_classes,
        })
    }

    pub fn num_states(&self) -> usize {
        self.classes.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_of(&self, s: usize) -> usize {
        self.classes[s]
    }
}

/// Density-ratio coefficient of a guide policy:
/// the supremum over steps and feature classes of
/// `d_h^{π*}(class) / d_h^{guide}(class)`, restricted to classes the optimal
/// policy actually occupies. Returns `+inf` when the guide misses such a
/// class; `0/0` classes are skipped.
pub fn concentratability(
    mdp: &MdpSpec,
    guide: &TabularPolicy,
    optimal_policy: &TabularPolicy,
    phi: &StateFeatureMap,
) -> Result<f64> {
    if phi.num_states() != mdp.num_states() {
        return Err(Error::DimensionMismatch(
            "feature map size does not match state count".to_string(),
        ));
    }
    let occ_opt = occupancy(mdp, optimal_policy)?;
    let occ_guide = occupancy(mdp, guide)?;
    let mut sup = 0.0f64;
    for h in 0..mdp.horizon() {
        let mut opt_mass = vec![0.0; phi.num_classes()];
        let mut guide_mass = vec![0.0; phi.num_classes()];
        for s in 0..mdp.num_states() {
            opt_mass[phi.class_of(s)] += occ_opt.d[h][s];
            guide_mass[phi.class_of(s)] += occ_guide.d[h][s];
        }
        for c in 0..phi.num_classes() {
            if opt_mass[c] > 0.0 {
                if guide_mass[c] == 0.0 {
                    return Ok(f64::INFINITY);
                }
                sup = sup.max(opt_mass[c] / guide_mass[c]);
            }
        }
    }
    Ok(sup)
}

/// Exact suboptimality `E_{s~p0}[V*(s) - V^π(s)]`.
pub fn suboptimality(mdp: &MdpSpec, policy: &TabularPolicy) -> Result<f64> {
    let sol = value_iteration(mdp);
    let eval = policy_value(mdp, policy)?;
    Ok(sol.optimal_return(mdp) - eval.mean_return)
}

/// Both sides of the performance-difference identity and their gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdlReport {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Checks the performance-difference decomposition numerically:
/// the value gap of `policy` equals the sum over steps of the advantage gap
/// `Q^π(s, π*(s)) - Q^π(s, π(s))` weighted by the optimal policy's occupancy.
pub fn pdl_check(mdp: &MdpSpec, policy: &TabularPolicy) -> Result<PdlReport> {
    let sol = value_iteration(mdp);
    let eval = policy_value(mdp, policy)?;
    let occ_star = occupancy(mdp, &sol.pi_star)?;
    let lhs = sol.optimal_return(mdp) - eval.mean_return;

    let mut rhs = 0.0;
    for h in 0..mdp.horizon() {
        for s in 0..mdp.num_states() {
            let mass = occ_star.d[h][s];
            if mass == 0.0 {
                continue;
            }
            let q_at_star = eval.q[h][s][sol.greedy_actions[h][s]];
            let q_at_policy: f64 = policy
                .action_probs(h, s)
                .iter()
                .zip(&eval.q[h][s])
                .map(|(p, q)| p * q)
                .sum();
            rhs += mass * (q_at_star - q_at_policy);
        }
    }
    Ok(PdlReport {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

/// Environment family axis of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFamily {
    Lock,
}

impl SweepFamily {
    fn name(&self) -> &'static str {
        match self {
            SweepFamily::Lock => "lock",
        }
    }
}

/// Guide used by a sweep method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GuideKind {
    Scripted,
    Corrupted { noise: f64 },
    Uniform,
}

/// Training method of a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    JsrlCurriculum,
    JsrlRandom,
    Scratch,
}

impl SweepMethod {
    fn name(&self) -> &'static str {
        match self {
            SweepMethod::JsrlCurriculum => "jsrl_curriculum",
            SweepMethod::JsrlRandom => "jsrl_random",
            SweepMethod::Scratch => "scratch",
        }
    }
}

/// Per-cell episode cap, possibly growing with the size axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapRule {
    Fixed { episodes: u64 },
    /// `ceil(factor · 2^size)` episodes.
    PowTwo { factor: f64 },
}

impl CapRule {
    pub fn cap_for(&self, size: usize) -> u64 {
        match *self {
            CapRule::Fixed { episodes } => episodes,
            CapRule::PowTwo { factor } => (factor * 2f64.powi(size as i32)).ceil() as u64,
        }
    }
}

fn default_beta() -> f64 {
    0.9
}

fn default_window() -> usize {
    5
}

/// One method arm of a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepMethodSpec {
    pub method: SweepMethod,
    pub guide: GuideKind,
    pub episode_cap: CapRule,
    /// CSV label; defaults to the method name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub learner: Option<QLearnerConfig>,
    #[serde(default)]
    pub init_mode: Option<InitMode>,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl SweepMethodSpec {
    fn csv_label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.method.name().to_string())
    }
}

/// Full sweep description: environment family and size axis, method arms,
/// seeds per cell, and the success criterion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub schema_version: u32,
    pub family: SweepFamily,
    pub sizes: Vec<usize>,
    pub methods: Vec<SweepMethodSpec>,
    /// Seeds `0..seeds_per_cell` run for every (size, method).
    pub seeds_per_cell: u64,
    pub env_seed_base: u64,
    /// A cell succeeds once exact suboptimality drops to this value.
    pub success_threshold: f64,
    /// Cadence (in episodes) of the exact suboptimality check.
    pub eval_every: u64,
    #[serde(default = "default_window")]
    pub moving_average_window: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::InvalidArgument("sweep has no sizes".to_string()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("sweep has no methods".to_string()));
        }
        if self.seeds_per_cell == 0 {
            return Err(Error::InvalidArgument("seeds_per_cell must be >= 1".to_string()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidArgument("eval_every must be >= 1".to_string()));
        }
        for m in &self.methods {
            for &size in &self.sizes {
                if m.episode_cap.cap_for(size) == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "episode cap is 0 at size {size}"
                    )));
                }
            }
            if let Some(l) = &m.learner {
                l.validate()?;
            }
            if let GuideKind::Corrupted { noise } = m.guide {
                if !(0.0..=1.0).contains(&noise) {
                    return Err(Error::InvalidArgument(format!("noise {noise} outside [0,1]")));
                }
            }
        }
        Ok(())
    }
}

/// One sweep cell result.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub family: String,
    pub size: usize,
    pub method: String,
    pub seed: u64,
    /// Episodes to reach the success threshold; equals the cap when censored.
    pub episodes_to_success: u64,
    pub censored: bool,
    pub final_subopt: f64,
    /// Guide concentratability; absent for scratch.
    pub c_measured: Option<f64>,
}

/// Ordered sweep results; row order is the deterministic cell order
/// (method, size, seed) regardless of parallelism.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// CSV with columns
    /// `family,size,method,seed,episodes_to_success,censored,final_subopt,C_measured`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "family,size,method,seed,episodes_to_success,censored,final_subopt,C_measured\n",
        );
        for r in &self.rows {
            let c = r.c_measured.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.family,
                r.size,
                r.method,
                r.seed,
                r.episodes_to_success,
                r.censored,
                r.final_subopt,
                c
            );
        }
        out
    }

    /// Median episodes-to-success for a `(method label, size)` cell group,
    /// counting censored cells at their cap.
    pub fn median_episodes(&self, method: &str, size: usize) -> Option<f64> {
        let mut xs: Vec<u64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.size == size)
            .map(|r| r.episodes_to_success)
            .collect();
        if xs.is_empty() {
            return None;
        }
        xs.sort_unstable();
        let n = xs.len();
        Some(if n % 2 == 1 {
            xs[n / 2] as f64
        } else {
            (xs[n / 2 - 1] + xs[n / 2]) as f64 / 2.0
        })
    }
}

/// Mixes the size and seed into the base to give every cell its own
/// environment instance while keeping methods paired within a cell.
fn cell_env_seed(base: u64, size: usize, seed: u64) -> u64 {
    base ^ (size as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ seed.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

fn run_cell(spec: &SweepSpec, method: &SweepMethodSpec, size: usize, seed: u64) -> Result<SweepRow> {
    let lock = match spec.family {
        SweepFamily::Lock => {
            build_combination_lock(size, cell_env_seed(spec.env_seed_base, size, seed))?
        }
    };
    let mdp = &lock.mdp;
    let optimal = scripted_optimal_guide(mdp);
    let guide = match method.guide {
        GuideKind::Scripted => optimal.clone(),
        GuideKind::Corrupted { noise } => corrupted_guide(&optimal, noise)?,
        GuideKind::Uniform => {
            TabularPolicy::uniform(mdp.horizon(), mdp.num_states(), mdp.num_actions())
        }
    };
    let cap = method.episode_cap.cap_for(size);
    let params = TrainParams {
        learner: method.learner.unwrap_or_default(),
        init_mode: method.init_mode.unwrap_or(InitMode::ColdZero),
        budget: cap,
        eval_every: spec.eval_every,
    };
    let options = TrainOptions {
        eval_mode: Some(EvalMode::Exact),
        stop_on_subopt: Some(spec.success_threshold),
        ..TrainOptions::default()
    };
    let out = match method.method {
        SweepMethod::Scratch => train_scratch(mdp, &params, &options, seed)?,
        SweepMethod::JsrlCurriculum => {
            let curriculum = CurriculumState::new(
                CurriculumState::default_sequence(mdp.horizon()),
                method.beta,
                cap,
                spec.moving_average_window,
            )?;
            train_jsrl(
                mdp,
                &guide,
                SwitchStrategy::Curriculum(curriculum),
                &params,
                &options,
                seed,
            )?
        }
        SweepMethod::JsrlRandom => {
            let step_set = (0..=mdp.horizon()).collect();
            train_jsrl(
                mdp,
                &guide,
                SwitchStrategy::random_switch(step_set)?,
                &params,
                &options,
                seed,
            )?
        }
    };
    let final_subopt = suboptimality(mdp, &out.qtable.greedy_policy())?;
    let c_measured = match method.method {
        SweepMethod::Scratch => None,
        _ => Some(concentratability(
            mdp,
            &guide,
            &optimal,
            &StateFeatureMap::identity(mdp.num_states()),
        )?),
    };
    let (episodes, censored) = match out.record.episodes_to_success {
        Some(e) => (e, false),
        None => (cap, true),
    };
    Ok(SweepRow {
        family: spec.family.name().to_string(),
        size,
        method: method.csv_label(),
        seed,
        episodes_to_success: episodes,
        censored,
        final_subopt,
        c_measured,
    })
}

/// Runs every (method, size, seed) cell until the success threshold or the
/// cap, in parallel over `jobs` threads (0 = rayon default). The result table
/// is identical regardless of `jobs`.
pub fn sample_complexity_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepTable> {
    spec.validate()?;
    let mut cells = Vec::new();
    for method in &spec.methods {
        for &size in &spec.sizes {
            for seed in 0..spec.seeds_per_cell {
                cells.push((method, size, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let rows: Result<Vec<SweepRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(method, size, seed)| run_cell(spec, method, size, seed))
            .collect()
    });
    Ok(SweepTable { rows: rows? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::DP_TOL;

    #[test]
    fn optimal_guide_has_unit_concentratability() {
        let lock = build_combination_lock(6, 4).unwrap();
        let optimal = scripted_optimal_guide(&lock.mdp);
        let phi = StateFeatureMap::identity(lock.mdp.num_states());
        let c = concentratability(&lock.mdp, &optimal, &optimal, &phi).unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn uniform_guide_concentratability_is_two_to_h_minus_one() {
        for h in [3usize, 5, 8] {
            let lock = build_combination_lock(h, 4).unwrap();
            let optimal = scripted_optimal_guide(&lock.mdp);
            let uniform =
                TabularPolicy::uniform(h, lock.mdp.num_states(), lock.mdp.num_actions());
            let phi = StateFeatureMap::identity(lock.mdp.num_states());
            let c = concentratability(&lock.mdp, &uniform, &optimal, &phi).unwrap();
            let expected = 2f64.powi(h as i32 - 1);
            assert!((c - expected).abs() < 1e-9, "H={h}: C={c} vs {expected}");
        }
    }

    #[test]
    fn zero_support_guide_reports_infinity() {
        // A guide that always takes the wrong first action never reaches the
        // second chain state.
        let lock = build_combination_lock(3, 4).unwrap();
        let optimal = scripted_optimal_guide(&lock.mdp);
        let wrong_first = TabularPolicy::from_deterministic(
            &(0..3)
                .map(|h| {
                    (0..lock.mdp.num_states())
                        .map(|_| if h == 0 { 1 - lock.correct_actions[0] } else { 0 })
                        .collect()
                })
                .collect::<Vec<_>>(),
            2,
        )
        .unwrap();
        let phi = StateFeatureMap::identity(lock.mdp.num_states());
        let c = concentratability(&lock.mdp, &wrong_first, &optimal, &phi).unwrap();
        assert!(c.is_infinite());
    }

    #[test]
    fn suboptimality_of_optimal_policy_is_zero() {
        let lock = build_combination_lock(5, 6).unwrap();
        let optimal = scripted_optimal_guide(&lock.mdp);
        let s = suboptimality(&lock.mdp, &optimal).unwrap();
        assert!(s.abs() < DP_TOL);
    }

    #[test]
    fn uniform_suboptimality_on_lock_is_one_minus_uniform_return() {
        let lock = build_combination_lock(4, 6).unwrap();
        let uniform = TabularPolicy::uniform(4, lock.mdp.num_states(), 2);
        let s = suboptimality(&lock.mdp, &uniform).unwrap();
        assert!((s - (1.0 - 0.5f64.powi(4))).abs() < DP_TOL);
    }

    #[test]
    fn pdl_holds_for_optimal_policy() {
        let lock = build_combination_lock(4, 2).unwrap();
        let optimal = scripted_optimal_guide(&lock.mdp);
        let report = pdl_check(&lock.mdp, &optimal).unwrap();
        assert!(report.lhs.abs() < DP_TOL);
        assert!(report.rhs.abs() < DP_TOL);
        assert!(report.gap < DP_TOL);
    }

    #[test]
    fn pdl_matches_suboptimality_on_lock() {
        let lock = build_combination_lock(4, 2).unwrap();
        let uniform = TabularPolicy::uniform(4, lock.mdp.num_states(), 2);
        let report = pdl_check(&lock.mdp, &uniform).unwrap();
        let s = suboptimality(&lock.mdp, &uniform).unwrap();
        assert!((report.lhs - s).abs() < 1e-12);
        assert!(report.gap < 1e-9);
    }

    #[test]
    fn feature_map_validation() {
        assert!(StateFeatureMap::new(vec![0, 1, 2], 3).is_ok());
        assert!(StateFeatureMap::new(vec![0, 0, 2], 3).is_err()); // class 1 unused
        assert!(StateFeatureMap::new(vec![0, 3], 3).is_err()); // out of range
        assert!(StateFeatureMap::new(vec![], 0).is_err());
    }

    #[test]
    fn sweep_spec_validation_and_cardinality() {
        let spec = SweepSpec {
            schema_version: 1,
            family: SweepFamily::Lock,
            sizes: vec![3, 4],
            methods: vec![SweepMethodSpec {
                method: SweepMethod::JsrlCurriculum,
                guide: GuideKind::Scripted,
                episode_cap: CapRule::Fixed { episodes: 500 },
                label: None,
                learner: None,
                init_mode: None,
                beta: 0.9,
            }],
            seeds_per_cell: 2,
            env_seed_base: 7,
            success_threshold: 0.05,
            eval_every: 1,
            moving_average_window: 5,
        };
        spec.validate().unwrap();
        let table = sample_complexity_sweep(&spec, 1).unwrap();
        assert_eq!(table.rows.len(), 4); // 1 method x 2 sizes x 2 seeds

        let mut bad = spec.clone();
        bad.methods.clear();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sweep_is_parallelism_invariant() {
        let spec = SweepSpec {
            schema_version: 1,
            family: SweepFamily::Lock,
            sizes: vec![3, 4, 5],
            methods: vec![
                SweepMethodSpec {
                    method: SweepMethod::JsrlCurriculum,
                    guide: GuideKind::Scripted,
                    episode_cap: CapRule::Fixed { episodes: 300 },
                    label: None,
                    learner: None,
                    init_mode: None,
                    beta: 0.9,
                },
                SweepMethodSpec {
                    method: SweepMethod::Scratch,
                    guide: GuideKind::Uniform,
                    episode_cap: CapRule::PowTwo { factor: 2.0 },
                    label: None,
                    learner: None,
                    init_mode: None,
                    beta: 0.9,
                },
            ],
            seeds_per_cell: 2,
            env_seed_base: 3,
            success_threshold: 0.05,
            eval_every: 1,
            moving_average_window: 5,
        };
        let a = sample_complexity_sweep(&spec, 1).unwrap();
        let b = sample_complexity_sweep(&spec, 4).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn trivial_size_succeeds_quickly_for_all_methods() {
        let spec = SweepSpec {
            schema_version: 1,
            family: SweepFamily::Lock,
            sizes: vec![1],
            methods: vec![
                SweepMethodSpec {
                    method: SweepMethod::JsrlCurriculum,
                    guide: GuideKind::Scripted,
                    episode_cap: CapRule::Fixed { episodes: 100 },
                    label: None,
                    learner: None,
                    init_mode: None,
                    beta: 0.9,
                },
                SweepMethodSpec {
                    method: SweepMethod::JsrlRandom,
                    guide: GuideKind::Scripted,
                    episode_cap: CapRule::Fixed { episodes: 100 },
                    label: None,
                    learner: None,
                    init_mode: None,
                    beta: 0.9,
                },
                SweepMethodSpec {
                    method: SweepMethod::Scratch,
                    guide: GuideKind::Uniform,
                    episode_cap: CapRule::Fixed { episodes: 100 },
                    label: None,
                    learner: None,
                    init_mode: None,
                    beta: 0.9,
                },
            ],
            seeds_per_cell: 3,
            env_seed_base: 11,
            success_threshold: 0.05,
            eval_every: 1,
            moving_average_window: 5,
        };
        let table = sample_complexity_sweep(&spec, 0).unwrap();
        for row in &table.rows {
            assert!(!row.censored, "row censored: {row:?}");
            assert!(row.episodes_to_success <= 100);
        }
    }
}
