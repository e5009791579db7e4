//! Quantitative seed evaluation: perturb the trajectory targets, solve from
//! competing seed sets, and report gated per-step, whole-trajectory and
//! total IK success ratios.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ik::{solve, IkRequest, Tolerances};
use crate::pose::{rotation_from_rpy, Pose};
use crate::scenario::Scenario;

/// Target perturbation: uniform per-axis position offsets and uniform RPY
/// orientation offsets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// ± bound per position axis (meters).
    pub position_range: f64,
    /// ± bound per RPY axis (radians).
    pub orientation_range: f64,
    /// Extra stream id folded into the per-trial rng derivation.
    #[serde(default)]
    pub rng_stream: u64,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.position_range < 0.0 || self.orientation_range < 0.0 {
            return Err(Error::EvalConfig("perturbation ranges must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Applies one random perturbation drawn from `rng`.
pub fn perturb<R: Rng>(target: &Pose, spec: &PerturbationSpec, rng: &mut R) -> Pose {
    let p = spec.position_range;
    let o = spec.orientation_range;
    let dx = rng.gen_range(-p..=p);
    let dy = rng.gen_range(-p..=p);
    let dz = rng.gen_range(-p..=p);
    let roll = rng.gen_range(-o..=o);
    let pitch = rng.gen_range(-o..=o);
    let yaw = rng.gen_range(-o..=o);
    Pose {
        rotation: rotation_from_rpy(roll, pitch, yaw) * target.rotation,
        translation: target.translation + nalgebra::Vector3::new(dx, dy, dz),
    }
}

/// Per-goal seed states of one competitor, as written by the seed generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSet {
    pub label: String,
    pub fitness: f64,
    #[serde(default)]
    pub generation: Option<usize>,
    pub goals: Vec<SeedGoal>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedGoal {
    pub label: String,
    pub via_index: usize,
    /// Full joint state (every movable joint).
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepStats {
    pub via_index: usize,
    /// Trials that reached this step (prior step's successes).
    pub attempts: usize,
    pub successes: usize,
}

impl StepStats {
    pub fn ratio(&self) -> f64 {
        if self.attempts == 0 {
            f64::NAN
        } else {
            self.successes as f64 / self.attempts as f64
        }
    }
}

/// Gated success report for one seed set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub fitness: f64,
    pub trials: usize,
    pub steps: Vec<StepStats>,
    /// Trials where every step succeeded.
    pub whole_trajectory_successes: usize,
    pub total_successes: usize,
    pub total_attempts: usize,
}

impl EvalReport {
    pub fn total_ratio(&self) -> f64 {
        if self.total_attempts == 0 {
            f64::NAN
        } else {
            self.total_successes as f64 / self.total_attempts as f64
        }
    }

    pub fn whole_trajectory_ratio(&self) -> f64 {
        self.whole_trajectory_successes as f64 / self.trials as f64
    }

    /// Wilson 95% interval of the total success ratio.
    pub fn total_ci(&self) -> [f64; 2] {
        wilson_interval(self.total_successes, self.total_attempts)
    }
}

pub fn wilson_interval(successes: usize, attempts: usize) -> [f64; 2] {
    if attempts == 0 {
        return [f64::NAN, f64::NAN];
    }
    let z = 1.96_f64;
    let n = attempts as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    [(center - half).max(0.0), (center + half).min(1.0)]
}

/// Runs the evaluation protocol: `trials` rounds, each independently
/// perturbing every trajectory target, then solving the gated trajectory
/// from each seed set. All seed sets see bit-identical perturbed targets in
/// each trial (paired comparison), and the whole run is deterministic for a
/// given `rng_seed`.
pub fn evaluate(
    scenario: &Scenario,
    seed_sets: &[SeedSet],
    spec: &PerturbationSpec,
    trials: usize,
    rng_seed: u64,
) -> Result<Vec<EvalReport>> {
    evaluate_with_budget(scenario, seed_sets, spec, trials, rng_seed, SolverBudget::default())
}

/// Online-solver budget used by the evaluation; success under a finite
/// budget is what separates seed qualities.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverBudget {
    pub max_iterations: usize,
    pub tolerances: Tolerances,
}

impl Default for SolverBudget {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerances: Tolerances::default(),
        }
    }
}

/// [`evaluate`] with an explicit online-solver budget.
pub fn evaluate_with_budget(
    scenario: &Scenario,
    seed_sets: &[SeedSet],
    spec: &PerturbationSpec,
    trials: usize,
    rng_seed: u64,
    budget: SolverBudget,
) -> Result<Vec<EvalReport>> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::EvalConfig("trials must be ≥ 1".into()));
    }
    if seed_sets.is_empty() {
        return Err(Error::EvalConfig("at least one seed set is required".into()));
    }
    let plans: Vec<SeedPlan> = seed_sets
        .iter()
        .map(|s| SeedPlan::resolve(scenario, s))
        .collect::<Result<_>>()?;
    let arm_split = ArmSplit::resolve(scenario)?;

    let n_steps = scenario.trajectory.len();
    let trial_results: Vec<Vec<Vec<bool>>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            // Per-trial substream: same seed, stream = trial index (the
            // spec's stream id shifts the trial block).
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(spec.rng_stream.wrapping_mul(1 << 32).wrapping_add(trial as u64));
            let perturbed: Vec<BTreeMap<String, Pose>> = scenario
                .trajectory
                .iter()
                .map(|via| {
                    via.targets
                        .iter()
                        .map(|(arm, pose)| (arm.clone(), perturb(pose, spec, &mut rng)))
                        .collect()
                })
                .collect();
            plans
                .iter()
                .map(|plan| run_trajectory(scenario, &arm_split, plan, &perturbed, budget))
                .collect()
        })
        .collect();

    let mut reports = Vec::with_capacity(seed_sets.len());
    for (s, seed_set) in seed_sets.iter().enumerate() {
        let mut steps: Vec<StepStats> = (0..n_steps)
            .map(|v| StepStats {
                via_index: v,
                attempts: 0,
                successes: 0,
            })
            .collect();
        let mut whole = 0;
        for trial in &trial_results {
            let outcome = &trial[s];
            for (k, &ok) in outcome.iter().enumerate() {
                steps[k].attempts += 1;
                if ok {
                    steps[k].successes += 1;
                }
            }
            if outcome.len() == n_steps && outcome.iter().all(|&ok| ok) {
                whole += 1;
            }
        }
        let total_successes = steps.iter().map(|s| s.successes).sum();
        let total_attempts = steps.iter().map(|s| s.attempts).sum();
        reports.push(EvalReport {
            label: seed_set.label.clone(),
            fitness: seed_set.fitness,
            trials,
            steps,
            whole_trajectory_successes: whole,
            total_successes,
            total_attempts,
        });
    }
    Ok(reports)
}

/// Which joints each arm may move online, split once up front.
struct ArmSplit {
    /// Arm id → active movable indices for that arm's solves.
    per_arm: BTreeMap<String, Vec<usize>>,
}

impl ArmSplit {
    fn resolve(scenario: &Scenario) -> Result<Self> {
        let chain = &scenario.chain;
        let online = scenario.online_movable();
        let multi_arm = scenario.trajectory.iter().any(|v| v.targets.len() > 1);
        let mut per_arm = BTreeMap::new();
        for via in &scenario.trajectory {
            for arm in via.targets.keys() {
                if per_arm.contains_key(arm) {
                    continue;
                }
                let info = chain.arm(arm).expect("validated arm");
                let active: Vec<usize> = if multi_arm {
                    online
                        .iter()
                        .copied()
                        .filter(|m| info.arm_movable.contains(m))
                        .collect()
                } else {
                    online.to_vec()
                };
                if active.is_empty() {
                    return Err(Error::EvalConfig(format!(
                        "online_dof contains no joints of arm `{arm}`"
                    )));
                }
                per_arm.insert(arm.clone(), active);
            }
        }
        if multi_arm {
            // Arms solve independently, so shared joints cannot be online.
            let arm_joint_count: usize = per_arm.values().map(Vec::len).sum();
            if arm_joint_count != online.len() {
                return Err(Error::EvalConfig(
                    "multi-arm trajectories require online_dof to contain arm joints only \
                     (shared trunk joints cannot be solved per arm)"
                        .into(),
                ));
            }
        }
        Ok(Self { per_arm })
    }
}

/// A seed set resolved to `via index → full state`.
struct SeedPlan {
    seeds: BTreeMap<usize, Vec<f64>>,
}

impl SeedPlan {
    fn resolve(scenario: &Scenario, set: &SeedSet) -> Result<Self> {
        let mut seeds = BTreeMap::new();
        for goal in &set.goals {
            if goal.via_index >= scenario.trajectory.len() {
                return Err(Error::EvalConfig(format!(
                    "seed set `{}` seeds via {} beyond the trajectory",
                    set.label, goal.via_index
                )));
            }
            if goal.state.len() != scenario.chain.movable_count() {
                return Err(Error::EvalConfig(format!(
                    "seed set `{}` state for via {} has wrong length",
                    set.label, goal.via_index
                )));
            }
            if !scenario.chain.within_limits(&goal.state) {
                return Err(Error::EvalConfig(format!(
                    "seed set `{}` state for via {} violates joint limits",
                    set.label, goal.via_index
                )));
            }
            seeds.insert(goal.via_index, goal.state.clone());
        }
        for via in scenario.seeded_steps().keys() {
            if !seeds.contains_key(via) {
                return Err(Error::EvalConfig(format!(
                    "seed set `{}` is missing a seed for via {via}",
                    set.label
                )));
            }
        }
        if !seeds.contains_key(&0) {
            return Err(Error::EvalConfig(format!(
                "seed set `{}` has no seed for step 0",
                set.label
            )));
        }
        Ok(Self { seeds })
    }
}

/// One gated trajectory: per-step success flags, stopping after the first
/// failed step (that step included).
fn run_trajectory(
    scenario: &Scenario,
    split: &ArmSplit,
    plan: &SeedPlan,
    perturbed: &[BTreeMap<String, Pose>],
    budget: SolverBudget,
) -> Vec<bool> {
    let chain = &scenario.chain;
    let mut flags = Vec::with_capacity(perturbed.len());
    let mut state: Vec<f64> = Vec::new();
    for (step, targets) in perturbed.iter().enumerate() {
        if let Some(seed) = plan.seeds.get(&step) {
            state = seed.clone();
        }
        let mut ok = true;
        for (arm, target) in targets {
            let info = chain.arm(arm).expect("validated arm");
            let mut request = IkRequest::new(
                chain,
                split.per_arm[arm].clone(),
                state.clone(),
                &info.hand,
                *target,
            );
            request.max_iterations = budget.max_iterations;
            request.tolerances = budget.tolerances;
            match solve(&request) {
                Ok(outcome) => {
                    state = outcome.solution.clone();
                    if !outcome.is_success() {
                        ok = false;
                        break;
                    }
                }
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        flags.push(ok);
        if !ok {
            break;
        }
    }
    flags
}

// ---------------------------------------------------------------------------
// Fitness-vs-success trend
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairDelta {
    pub low_fitness: String,
    pub high_fitness: String,
    /// Total-ratio difference (higher-fitness minus lower-fitness set).
    pub delta: f64,
    /// Normal-approximation 95% interval of the difference.
    pub ci: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendSummary {
    /// Spearman rank correlation between fitness and total success ratio;
    /// `None` when one of the sides has zero variance (undefined).
    pub spearman: Option<f64>,
    pub pairs: Vec<PairDelta>,
}

/// Rank correlation and pairwise deltas across reports of distinct fitness.
pub fn fitness_vs_success(reports: &[EvalReport]) -> Result<TrendSummary> {
    if reports.len() < 2 {
        return Err(Error::EvalConfig(
            "fitness/success trend needs at least 2 seed sets".into(),
        ));
    }
    let fitness: Vec<f64> = reports.iter().map(|r| r.fitness).collect();
    let ratios: Vec<f64> = reports.iter().map(|r| r.total_ratio()).collect();
    let spearman = spearman_rank(&fitness, &ratios);

    let mut pairs = Vec::new();
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
    for i in 0..order.len() {
        for j in (i + 1)..order.len() {
            let (lo, hi) = (&reports[order[i]], &reports[order[j]]);
            let (p1, n1) = (lo.total_ratio(), lo.total_attempts as f64);
            let (p2, n2) = (hi.total_ratio(), hi.total_attempts as f64);
            let delta = p2 - p1;
            let se = (p1 * (1.0 - p1) / n1 + p2 * (1.0 - p2) / n2).sqrt();
            pairs.push(PairDelta {
                low_fitness: lo.label.clone(),
                high_fitness: hi.label.clone(),
                delta,
                ci: [delta - 1.96 * se, delta + 1.96 * se],
            });
        }
    }
    Ok(TrendSummary { spearman, pairs })
}

/// Average ranks (ties shared), `None` when either side is constant.
fn spearman_rank(a: &[f64], b: &[f64]) -> Option<f64> {
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - mean) * (y - mean);
        da += (x - mean).powi(2);
        db += (y - mean).powi(2);
    }
    if da == 0.0 || db == 0.0 {
        return None;
    }
    Some(num / (da * db).sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}
