//! IK seed generation: a GA over trunk/base gene variables whose fitness is
//! the minimum goodness over all goals and arms, with arm joints filled in
//! by the reachability-map candidate provider.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::candidates::{apply_candidate, arm_candidates};
use crate::error::{Error, Result};
use crate::ga::{run_ga, GaRun, Improvement, INFEASIBLE};
use crate::goodness::goodness;
use crate::scenario::Scenario;

/// Evaluation of one goal under one gene: the full robot state with the
/// best candidate per arm applied, and the goodness each arm achieved.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoalState {
    pub label: String,
    pub via_index: usize,
    /// Full joint state (every movable joint, base DOF included).
    pub state: Vec<f64>,
    /// Per-arm goodness of the chosen candidates.
    pub per_arm_goodness: BTreeMap<String, f64>,
}

impl GoalState {
    pub fn goodness(&self) -> f64 {
        self.per_arm_goodness
            .values()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

/// Result of a seed-generation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedResult {
    pub best_gene: Vec<f64>,
    pub best_fitness: f64,
    pub goals: Vec<GoalState>,
    /// Best fitness per generation (non-decreasing).
    pub history: Vec<f64>,
    /// Generations where the best fitness improved, with their genes.
    pub improvements: Vec<Improvement>,
    pub generations: usize,
}

impl SeedResult {
    /// Best improvement known at the end of the given 1-based generation.
    pub fn improvement_at(&self, generation: usize) -> Option<&Improvement> {
        self.improvements
            .iter()
            .rev()
            .find(|imp| imp.generation <= generation)
    }
}

/// Evaluates one gene: per goal, enumerate candidates for every targeted
/// arm, keep the argmax-goodness candidate, and return the assembled states.
/// `None` when any goal yields no candidate (or a coupling leaves limits).
pub fn evaluate_gene(scenario: &Scenario, gene: &[f64]) -> Option<Vec<GoalState>> {
    let chain = &scenario.chain;
    let online = scenario.online_movable();
    let mut out = Vec::with_capacity(scenario.goals.len());
    for (goal_idx, goal) in scenario.goals.iter().enumerate() {
        let mut state = scenario.trunk_state(gene, goal_idx)?;
        let mut per_arm = BTreeMap::new();
        for (arm, world_pose) in &goal.targets {
            let info = chain.arm(arm).expect("validated arm");
            let arm_base = chain
                .forward_kinematics(&state, &info.arm_base)
                .expect("validated frame");
            let hand_in_base = arm_base.inverse().compose(world_pose);
            let map = scenario.maps.get(arm).expect("validated map");
            let cands = arm_candidates(map, chain, arm, &hand_in_base, scenario.query_radius)
                .expect("map hash validated at scenario load");
            if cands.is_empty() {
                return None;
            }
            // Argmax goodness; candidates arrive sorted by center error, so
            // strict improvement keeps the first of any tie.
            let mut best_f = f64::NEG_INFINITY;
            let mut best = None;
            let mut scratch = state.clone();
            for cand in &cands {
                scratch.copy_from_slice(&state);
                apply_candidate(chain, arm, cand, &mut scratch);
                let f = goodness(chain, &scratch, online, &info.hand, &scenario.goodness)
                    .expect("validated online set");
                if f > best_f {
                    best_f = f;
                    best = Some(cand);
                }
            }
            apply_candidate(chain, arm, best.expect("non-empty candidates"), &mut state);
            per_arm.insert(arm.clone(), best_f);
        }
        out.push(GoalState {
            label: goal.label.clone(),
            via_index: goal.via_index,
            state,
            per_arm_goodness: per_arm,
        });
    }
    Some(out)
}

/// Fitness of a gene: the minimum over goals of `weight × goal goodness`,
/// or `NEG_INFINITY` when the gene is infeasible.
pub fn fitness(scenario: &Scenario, gene: &[f64]) -> f64 {
    match evaluate_gene(scenario, gene) {
        Some(goals) => goals
            .iter()
            .zip(&scenario.goals)
            .map(|(gs, goal)| goal.weight * gs.goodness())
            .fold(f64::INFINITY, f64::min),
        None => INFEASIBLE,
    }
}

/// Per-goal full robot states for a feasible gene.
pub fn goal_states(scenario: &Scenario, gene: &[f64]) -> Result<Vec<GoalState>> {
    evaluate_gene(scenario, gene).ok_or(Error::Infeasible(0))
}

/// Runs the seed generator. Deterministic for a given scenario and
/// `rng_seed` (taken from the scenario's GA parameters unless overridden).
pub fn evolve(scenario: &Scenario, rng_seed: Option<u64>) -> Result<SeedResult> {
    let mut params = scenario.ga.clone();
    if let Some(seed) = rng_seed {
        params.rng_seed = seed;
    }
    let ranges = scenario.gene_ranges();
    let run: GaRun = run_ga(&ranges, &params, |gene| fitness(scenario, gene))?;
    let goals = goal_states(scenario, &run.best_gene)?;
    Ok(SeedResult {
        best_gene: run.best_gene,
        best_fitness: run.best_fitness,
        goals,
        history: run.history,
        improvements: run.improvements,
        generations: run.generations,
    })
}
