//! Scenario: the task description the seed generator optimizes over.
//!
//! A scenario names a robot model and per-arm reachability maps, a list of
//! goals (via-points of a trajectory with world-frame hand poses per arm),
//! the gene variables with their ranges, fixed and coupled DOF, the online
//! joint set, and the goodness/GA parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain::{Coupling, KinematicChain};
use crate::error::{Error, Result};
use crate::ga::GaParams;
use crate::goodness::GoodnessParams;
use crate::pose::{Pose, PoseSpec};
use crate::reachability::ReachabilityMap;

/// Whether a gene variable is one slot shared by every goal or one slot per
/// goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneScope {
    Shared,
    PerGoal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneVar {
    /// Movable joint (or base DOF joint) name.
    pub dof: String,
    pub range: [f64; 2],
    #[serde(default = "default_scope")]
    pub scope: GeneScope,
}

fn default_scope() -> GeneScope {
    GeneScope::Shared
}

/// One GA goal: a via-point of the trajectory with its world-frame hand
/// targets.
#[derive(Debug, Clone)]
pub struct Goal {
    pub label: String,
    pub via_index: usize,
    /// Arm id → hand pose in the world (chain base) frame.
    pub targets: BTreeMap<String, Pose>,
    pub weight: f64,
}

/// One via-point of the evaluated trajectory.
#[derive(Debug, Clone)]
pub struct ViaPoint {
    pub targets: BTreeMap<String, Pose>,
}

/// One slot of the gene vector.
#[derive(Debug, Clone)]
pub struct GeneSlot {
    pub var: usize,
    /// `None` for shared variables, `Some(goal index)` for per-goal ones.
    pub goal: Option<usize>,
    pub movable: usize,
    pub range: [f64; 2],
}

#[derive(Debug)]
pub struct Scenario {
    pub chain: KinematicChain,
    pub maps: BTreeMap<String, ReachabilityMap>,
    pub goals: Vec<Goal>,
    pub trajectory: Vec<ViaPoint>,
    pub gene_vars: Vec<GeneVar>,
    pub fixed_dof: BTreeMap<String, f64>,
    pub coupled_dof: Vec<String>,
    pub online_dof: Vec<String>,
    pub goodness: GoodnessParams,
    pub ga: GaParams,
    pub query_radius: f64,
    /// Gene layout expanded from `gene_vars` (shared slots first per var,
    /// per-goal vars one slot per goal, in goal order).
    slots: Vec<GeneSlot>,
    /// Couplings to apply, in dependency order.
    active_couplings: Vec<Coupling>,
    /// Resolved movable indices of `online_dof`.
    online_movable: Vec<usize>,
}

// ---------------------------------------------------------------------------
// File schema
// ---------------------------------------------------------------------------

fn default_weight() -> f64 {
    1.0
}

fn default_query_radius() -> f64 {
    0.01
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GoalFile {
    pub label: String,
    #[serde(default)]
    pub via_index: Option<usize>,
    #[serde(default)]
    pub targets: Option<BTreeMap<String, PoseSpec>>,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ViaPointFile {
    pub targets: BTreeMap<String, PoseSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub robot: PathBuf,
    pub maps: BTreeMap<String, PathBuf>,
    pub goals: Vec<GoalFile>,
    #[serde(default)]
    pub trajectory: Vec<ViaPointFile>,
    pub gene_vars: Vec<GeneVar>,
    #[serde(default)]
    pub fixed_dof: BTreeMap<String, f64>,
    #[serde(default)]
    pub coupled_dof: Vec<String>,
    pub online_dof: Vec<String>,
    #[serde(default)]
    pub goodness: GoodnessParams,
    #[serde(default)]
    pub ga: GaParams,
    #[serde(default = "default_query_radius")]
    pub query_radius: f64,
}

impl Scenario {
    /// Loads a scenario file; the robot model and map paths inside it are
    /// resolved relative to the scenario file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ScenarioFile =
            serde_json::from_str(&text).map_err(|e| Error::ScenarioInvalid(e.to_string()))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_file(file, dir)
    }

    pub fn from_file(file: ScenarioFile, base_dir: &Path) -> Result<Self> {
        let resolve = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base_dir.join(p)
            }
        };
        let model_text = std::fs::read_to_string(resolve(&file.robot))?;
        let chain = crate::chain::load_chain(&model_text)?;
        let mut maps = BTreeMap::new();
        for (arm, map_path) in &file.maps {
            maps.insert(arm.clone(), ReachabilityMap::load(&resolve(map_path))?);
        }
        Self::assemble(chain, maps, file)
    }

    /// Builds a scenario from already-loaded parts (tests and programmatic
    /// callers).
    pub fn assemble(
        chain: KinematicChain,
        maps: BTreeMap<String, ReachabilityMap>,
        file: ScenarioFile,
    ) -> Result<Self> {
        file.goodness.validate()?;
        file.ga.validate()?;
        if !(file.query_radius > 0.0) {
            return Err(Error::ScenarioInvalid("query_radius must be > 0".into()));
        }
        if file.goals.is_empty() {
            return Err(Error::ScenarioInvalid("at least one goal is required".into()));
        }

        // Trajectory: explicit section, or the goals in listed order.
        let trajectory: Vec<ViaPoint> = if file.trajectory.is_empty() {
            file.goals
                .iter()
                .map(|g| {
                    let targets = g.targets.as_ref().ok_or_else(|| {
                        Error::ScenarioInvalid(format!(
                            "goal `{}` needs targets when no trajectory section exists",
                            g.label
                        ))
                    })?;
                    Ok(ViaPoint {
                        targets: parse_targets(targets)?,
                    })
                })
                .collect::<Result<_>>()?
        } else {
            file.trajectory
                .iter()
                .map(|v| {
                    Ok(ViaPoint {
                        targets: parse_targets(&v.targets)?,
                    })
                })
                .collect::<Result<_>>()?
        };

        let mut goals = Vec::with_capacity(file.goals.len());
        let mut seen_via = BTreeSet::new();
        for (idx, g) in file.goals.iter().enumerate() {
            let via_index = g.via_index.unwrap_or(idx);
            if via_index >= trajectory.len() {
                return Err(Error::ScenarioInvalid(format!(
                    "goal `{}` via_index {via_index} out of range (trajectory has {} steps)",
                    g.label,
                    trajectory.len()
                )));
            }
            if !seen_via.insert(via_index) {
                return Err(Error::ScenarioInvalid(format!(
                    "duplicate goal via_index {via_index}"
                )));
            }
            if !file.trajectory.is_empty() && g.targets.is_some() {
                return Err(Error::ScenarioInvalid(format!(
                    "goal `{}`: targets belong in the trajectory section when one exists",
                    g.label
                )));
            }
            if !(g.weight > 0.0) {
                return Err(Error::ScenarioInvalid(format!(
                    "goal `{}` weight must be > 0",
                    g.label
                )));
            }
            goals.push(Goal {
                label: g.label.clone(),
                via_index,
                targets: trajectory[via_index].targets.clone(),
                weight: g.weight,
            });
        }

        // Every targeted arm must exist and have a map built for this chain.
        for via in &trajectory {
            for arm in via.targets.keys() {
                let _ = chain.arm(arm)?;
                let map = maps
                    .get(arm)
                    .ok_or_else(|| Error::ScenarioInvalid(format!("no map for arm `{arm}`")))?;
                if map.metadata().chain_arm_hash != chain.arm_hash(arm)? {
                    return Err(Error::MapChainMismatch);
                }
            }
        }

        // Gene variables.
        let mut determined: BTreeSet<usize> = BTreeSet::new();
        let mut fixed = BTreeMap::new();
        for (name, &value) in &file.fixed_dof {
            let m = chain
                .movable_index(name)
                .ok_or_else(|| Error::UnknownJoint(name.clone()))?;
            let [lo, hi] = chain.movable_joint(m).limits;
            if value < lo || value > hi {
                return Err(Error::ScenarioInvalid(format!(
                    "fixed_dof `{name}` = {value} is outside limits [{lo}, {hi}]"
                )));
            }
            determined.insert(m);
            fixed.insert(name.clone(), value);
        }

        let mut slots = Vec::new();
        for (var, gv) in file.gene_vars.iter().enumerate() {
            let m = chain
                .movable_index(&gv.dof)
                .ok_or_else(|| Error::UnknownJoint(gv.dof.clone()))?;
            if !(gv.range[0] < gv.range[1]) {
                return Err(Error::ScenarioInvalid(format!(
                    "gene var `{}` has empty range",
                    gv.dof
                )));
            }
            let [lo, hi] = chain.movable_joint(m).limits;
            if gv.range[0] < lo || gv.range[1] > hi {
                return Err(Error::ScenarioInvalid(format!(
                    "gene var `{}` range [{}, {}] exceeds joint limits [{lo}, {hi}]",
                    gv.dof, gv.range[0], gv.range[1]
                )));
            }
            if !determined.insert(m) {
                return Err(Error::ScenarioInvalid(format!(
                    "dof `{}` is both fixed and a gene variable (or listed twice)",
                    gv.dof
                )));
            }
            match gv.scope {
                GeneScope::Shared => slots.push(GeneSlot {
                    var,
                    goal: None,
                    movable: m,
                    range: gv.range,
                }),
                GeneScope::PerGoal => {
                    for goal in 0..goals.len() {
                        slots.push(GeneSlot {
                            var,
                            goal: Some(goal),
                            movable: m,
                            range: gv.range,
                        });
                    }
                }
            }
        }
        if slots.is_empty() {
            return Err(Error::ScenarioInvalid("no gene variables".into()));
        }

        // Couplings: activate in model order, each source must already be
        // determined (fixed, gene, or an earlier activated coupling).
        let mut active_couplings: Vec<Coupling> = Vec::new();
        let mut pending: BTreeSet<&str> = file.coupled_dof.iter().map(|s| s.as_str()).collect();
        if pending.len() != file.coupled_dof.len() {
            return Err(Error::ScenarioInvalid("duplicate coupled_dof entry".into()));
        }
        for c in chain.couplings() {
            let target_name = &chain.movable_joint(c.joint).name;
            if !pending.remove(target_name.as_str()) {
                continue;
            }
            if determined.contains(&c.joint) {
                return Err(Error::ScenarioInvalid(format!(
                    "coupled dof `{target_name}` is also fixed or a gene variable"
                )));
            }
            if !determined.contains(&c.source) {
                return Err(Error::ScenarioInvalid(format!(
                    "coupling source `{}` of `{target_name}` is not determined by \
                     fixed_dof, gene_vars or an earlier coupling",
                    chain.movable_joint(c.source).name
                )));
            }
            determined.insert(c.joint);
            active_couplings.push(c.clone());
        }
        if let Some(name) = pending.into_iter().next() {
            return Err(Error::ScenarioInvalid(format!(
                "coupled dof `{name}` has no coupling declared in the model"
            )));
        }

        // Online joint set.
        if file.online_dof.is_empty() {
            return Err(Error::ScenarioInvalid("online_dof must not be empty".into()));
        }
        let mut online_movable = Vec::with_capacity(file.online_dof.len());
        let mut seen_online = BTreeSet::new();
        for name in &file.online_dof {
            let m = chain
                .movable_index(name)
                .ok_or_else(|| Error::UnknownJoint(name.clone()))?;
            if !seen_online.insert(m) {
                return Err(Error::ScenarioInvalid(format!(
                    "duplicate online dof `{name}`"
                )));
            }
            online_movable.push(m);
        }

        Ok(Scenario {
            chain,
            maps,
            goals,
            trajectory,
            gene_vars: file.gene_vars,
            fixed_dof: fixed,
            coupled_dof: file.coupled_dof,
            online_dof: file.online_dof,
            goodness: file.goodness,
            ga: file.ga,
            query_radius: file.query_radius,
            slots,
            active_couplings,
            online_movable,
        })
    }

    pub fn gene_slots(&self) -> &[GeneSlot] {
        &self.slots
    }

    pub fn gene_ranges(&self) -> Vec<[f64; 2]> {
        self.slots.iter().map(|s| s.range).collect()
    }

    pub fn online_movable(&self) -> &[usize] {
        &self.online_movable
    }

    /// Full-chain state for one goal: neutral values overlaid with fixed
    /// DOF, the gene slots visible to that goal, and the active couplings.
    /// `None` when a coupling drives its joint out of limits.
    pub fn trunk_state(&self, gene: &[f64], goal_idx: usize) -> Option<Vec<f64>> {
        debug_assert_eq!(gene.len(), self.slots.len());
        let mut q = self.chain.neutral_state();
        for (name, &value) in &self.fixed_dof {
            q[self.chain.movable_index(name).expect("validated")] = value;
        }
        for (slot, &value) in self.slots.iter().zip(gene) {
            match slot.goal {
                None => q[slot.movable] = value,
                Some(g) if g == goal_idx => q[slot.movable] = value,
                Some(_) => {}
            }
        }
        for c in &self.active_couplings {
            let value = c.scale * q[c.source] + c.offset;
            let [lo, hi] = self.chain.movable_joint(c.joint).limits;
            if value < lo || value > hi {
                return None;
            }
            q[c.joint] = value;
        }
        Some(q)
    }

    /// Steps of the trajectory that carry a seed (the goals), as
    /// `via_index → goal index`, ascending.
    pub fn seeded_steps(&self) -> BTreeMap<usize, usize> {
        self.goals
            .iter()
            .enumerate()
            .map(|(g, goal)| (goal.via_index, g))
            .collect()
    }
}

fn parse_targets(specs: &BTreeMap<String, PoseSpec>) -> Result<BTreeMap<String, Pose>> {
    if specs.is_empty() {
        return Err(Error::ScenarioInvalid(
            "a via-point must target at least one arm".into(),
        ));
    }
    specs
        .iter()
        .map(|(arm, spec)| Ok((arm.clone(), spec.to_pose()?)))
        .collect()
}
