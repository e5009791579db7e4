//! Kinematic chains: ordered joints over a link tree, loaded from a robot
//! model file, with forward kinematics for any named frame.
//!
//! A chain is a tree (two arms hang off one trunk). Each joint owns the
//! fixed transform from its parent link to its own frame, an axis, limits
//! and a child link name. Mobile-base freedom is modeled as virtual joints
//! (`base_x`, `base_y`, `base_z`, `base_theta`) synthesized at the root, so
//! base DOF share the joint/Jacobian code path with everything else.
//!
//! Revolute values are kept unwrapped (no mod-2π); limits live on the
//! unwrapped line.

use std::collections::BTreeMap;
use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pose::{Pose, PoseSpec};

pub const AXIS_TOL: f64 = 1e-9;
/// Tolerance on the fixed transforms between spherical-wrist joints.
pub const WRIST_STRUCT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointKind {
    pub fn is_movable(self) -> bool {
        !matches!(self, JointKind::Fixed)
    }
}

/// One joint of the chain, after topology resolution.
#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    /// Unit axis in this joint's local frame (ignored for fixed joints).
    pub axis: Vector3<f64>,
    /// Fixed transform from the parent link frame to this joint's frame.
    pub origin: Pose,
    /// `[q_min, q_max]` in radians or meters.
    pub limits: [f64; 2],
    /// Name of the child link (the frame after joint motion).
    pub link: String,
    /// Index of the parent joint, `None` when attached to the root link.
    pub parent: Option<usize>,
}

impl Joint {
    /// Local transform contributed by the joint value `q`.
    pub fn motion(&self, q: f64) -> Pose {
        match self.kind {
            JointKind::Revolute => Pose::from_axis_angle(&self.axis, q),
            JointKind::Prismatic => Pose::from_translation(self.axis * q),
            JointKind::Fixed => Pose::identity(),
        }
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.limits[0], self.limits[1])
    }
}

/// Definition used to build a chain programmatically (the model file maps
/// onto a list of these).
#[derive(Debug, Clone)]
pub struct JointDef {
    pub name: String,
    pub kind: JointKind,
    pub axis: Vector3<f64>,
    pub origin: Pose,
    pub limits: [f64; 2],
    /// Parent link name; defaults to the previous joint's child link.
    pub parent: Option<String>,
    /// Child link name; defaults to the joint name.
    pub link: Option<String>,
}

impl JointDef {
    pub fn revolute(name: &str, axis: Vector3<f64>, origin: Pose, limits: [f64; 2]) -> Self {
        Self {
            name: name.to_string(),
            kind: JointKind::Revolute,
            axis,
            origin,
            limits,
            parent: None,
            link: None,
        }
    }

    pub fn prismatic(name: &str, axis: Vector3<f64>, origin: Pose, limits: [f64; 2]) -> Self {
        Self {
            kind: JointKind::Prismatic,
            ..Self::revolute(name, axis, origin, limits)
        }
    }

    pub fn fixed(name: &str, origin: Pose) -> Self {
        Self {
            name: name.to_string(),
            kind: JointKind::Fixed,
            axis: Vector3::z(),
            origin,
            limits: [0.0, 0.0],
            parent: None,
            link: None,
        }
    }

    pub fn parent(mut self, link: &str) -> Self {
        self.parent = Some(link.to_string());
        self
    }

    pub fn link(mut self, link: &str) -> Self {
        self.link = Some(link.to_string());
        self
    }
}

/// Designated frames of one arm as named in the model file.
#[derive(Debug, Clone)]
pub struct ArmFramesDef {
    pub arm_base: String,
    pub lower_arm: String,
    pub wrist_joints: Vec<String>,
    pub hand: String,
}

/// A linear joint coupling `joint = scale · source + offset` declared by the
/// model; scenarios choose which couplings are active.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub joint: usize,
    pub source: usize,
    pub scale: f64,
    pub offset: f64,
}

/// Resolved structure of one arm: designated frames plus the precomputed
/// constants the wrist solver needs.
#[derive(Debug, Clone)]
pub struct ArmInfo {
    pub arm_base: String,
    pub lower_arm: String,
    pub hand: String,
    /// Joint indices of the Z-X-Z wrist triple, in order.
    pub wrist_joints: [usize; 3],
    /// Movable indices of the wrist triple.
    pub wrist_movable: [usize; 3],
    /// Movable indices of all arm joints (arm-base → hand path), wrist last.
    pub arm_movable: Vec<usize>,
    /// Movable indices of the non-wrist arm joints (the sampled ones).
    pub non_wrist_movable: Vec<usize>,
    /// Rotation from the lower-arm link frame to the first wrist joint's
    /// pre-motion frame (fixed structure).
    pub wrist_pre_rotation: Matrix3<f64>,
    /// Fixed rotation from the last wrist joint's post-motion frame to the
    /// hand frame.
    pub wrist_post_rotation: Matrix3<f64>,
    /// Offset from the wrist center to the hand origin, expressed in the
    /// hand frame: `p_hand = p_center + R_hand · offset`.
    pub wrist_to_hand: Vector3<f64>,
    first_wrist_joint: usize,
}

/// An ordered-joint kinematic chain over a link tree.
///
/// Immutable after load; every operation is a pure function of `(self, q)`.
#[derive(Debug, Clone)]
pub struct KinematicChain {
    name: String,
    joints: Vec<Joint>,
    root_link: String,
    link_to_joint: HashMap<String, usize>,
    /// Joint indices of movable joints, in chain order.
    movable: Vec<usize>,
    movable_of_joint: Vec<Option<usize>>,
    movable_by_name: HashMap<String, usize>,
    arms: BTreeMap<String, ArmInfo>,
    couplings: Vec<Coupling>,
    base_dof: Vec<String>,
    hash: u64,
}

pub const ROOT_LINK: &str = "base";

const BASE_DOF_ORDER: [&str; 4] = ["x", "y", "z", "theta"];

fn default_base_limits(dof: &str) -> [f64; 2] {
    if dof == "theta" {
        [-std::f64::consts::PI, std::f64::consts::PI]
    } else {
        [-10.0, 10.0]
    }
}

fn base_dof_def(dof: &str, limits: [f64; 2]) -> JointDef {
    let name = format!("base_{dof}");
    match dof {
        "x" => JointDef::prismatic(&name, Vector3::x(), Pose::identity(), limits),
        "y" => JointDef::prismatic(&name, Vector3::y(), Pose::identity(), limits),
        "z" => JointDef::prismatic(&name, Vector3::z(), Pose::identity(), limits),
        "theta" => JointDef::revolute(&name, Vector3::z(), Pose::identity(), limits),
        _ => unreachable!(),
    }
}

// ---------------------------------------------------------------------------
// Model file schema
// ---------------------------------------------------------------------------

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn default_origin() -> PoseSpec {
    PoseSpec {
        translation: [0.0; 3],
        quaternion: [1.0, 0.0, 0.0, 0.0],
    }
}

#[derive(Debug, Deserialize)]
struct ModelFile {
    name: String,
    #[serde(default)]
    base_dof: Vec<String>,
    #[serde(default)]
    base_limits: BTreeMap<String, [f64; 2]>,
    joints: Vec<ModelJoint>,
    #[serde(default)]
    frames: BTreeMap<String, ModelArmFrames>,
    #[serde(default)]
    couplings: Vec<ModelCoupling>,
}

#[derive(Debug, Deserialize)]
struct ModelJoint {
    name: String,
    kind: String,
    #[serde(default = "default_axis")]
    axis: [f64; 3],
    #[serde(default = "default_origin")]
    origin: PoseSpec,
    #[serde(default)]
    limits: [f64; 2],
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    link: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ModelArmFrames {
    arm_base: String,
    lower_arm: String,
    wrist_joints: Vec<String>,
    hand: String,
}

#[derive(Debug, Deserialize)]
struct ModelCoupling {
    joint: String,
    source: String,
    #[serde(default)]
    scale: f64,
    #[serde(default)]
    offset: f64,
}

/// Parses and validates a robot model file (see the README for the format).
pub fn load_chain(model_text: &str) -> Result<KinematicChain> {
    let file: ModelFile =
        serde_json::from_str(model_text).map_err(|e| Error::ModelParse(e.to_string()))?;

    let mut seen = std::collections::HashSet::new();
    for dof in &file.base_dof {
        if !BASE_DOF_ORDER.contains(&dof.as_str()) {
            return Err(Error::ModelInvalid(format!(
                "unknown base dof `{dof}` (expected x, y, z or theta)"
            )));
        }
        if !seen.insert(dof.clone()) {
            return Err(Error::ModelInvalid(format!("duplicate base dof `{dof}`")));
        }
    }

    let mut defs = Vec::with_capacity(file.joints.len());
    for j in &file.joints {
        let kind = match j.kind.as_str() {
            "revolute" => JointKind::Revolute,
            "prismatic" => JointKind::Prismatic,
            "fixed" => JointKind::Fixed,
            other => {
                return Err(Error::ModelInvalid(format!(
                    "joint `{}` has unknown kind `{other}`",
                    j.name
                )))
            }
        };
        defs.push(JointDef {
            name: j.name.clone(),
            kind,
            axis: Vector3::new(j.axis[0], j.axis[1], j.axis[2]),
            origin: j.origin.to_pose()?,
            limits: j.limits,
            parent: j.parent.clone(),
            link: j.link.clone(),
        });
    }

    let frames = file
        .frames
        .iter()
        .map(|(arm, f)| {
            (
                arm.clone(),
                ArmFramesDef {
                    arm_base: f.arm_base.clone(),
                    lower_arm: f.lower_arm.clone(),
                    wrist_joints: f.wrist_joints.clone(),
                    hand: f.hand.clone(),
                },
            )
        })
        .collect();

    let couplings = file
        .couplings
        .iter()
        .map(|c| (c.joint.clone(), c.source.clone(), c.scale, c.offset))
        .collect::<Vec<_>>();

    KinematicChain::build(
        &file.name,
        &file.base_dof,
        &file.base_limits,
        defs,
        frames,
        couplings,
    )
}

impl KinematicChain {
    /// Builds a chain from parts; `load_chain` is the file-facing wrapper.
    pub fn build(
        name: &str,
        base_dof: &[String],
        base_limits: &BTreeMap<String, [f64; 2]>,
        defs: Vec<JointDef>,
        frames: BTreeMap<String, ArmFramesDef>,
        couplings: Vec<(String, String, f64, f64)>,
    ) -> Result<Self> {
        let mut all_defs: Vec<JointDef> = Vec::new();
        for dof in BASE_DOF_ORDER {
            if base_dof.iter().any(|d| d == dof) {
                let limits = base_limits
                    .get(dof)
                    .copied()
                    .unwrap_or_else(|| default_base_limits(dof));
                all_defs.push(base_dof_def(dof, limits));
            }
        }
        all_defs.extend(defs);

        let mut joints: Vec<Joint> = Vec::with_capacity(all_defs.len());
        let mut link_to_joint: HashMap<String, usize> = HashMap::new();
        let mut joint_names = std::collections::HashSet::new();

        for (idx, def) in all_defs.into_iter().enumerate() {
            if !joint_names.insert(def.name.clone()) {
                return Err(Error::ModelInvalid(format!(
                    "duplicate joint name `{}`",
                    def.name
                )));
            }
            let link = def.link.clone().unwrap_or_else(|| def.name.clone());
            if link == ROOT_LINK || link_to_joint.contains_key(&link) {
                return Err(Error::ModelInvalid(format!("duplicate link name `{link}`")));
            }
            let parent = match &def.parent {
                Some(p) if p == ROOT_LINK => None,
                Some(p) => match link_to_joint.get(p) {
                    Some(&j) => Some(j),
                    None => {
                        return Err(Error::ModelInvalid(format!(
                            "joint `{}` references unknown parent link `{p}` \
                             (parents must be declared before use)",
                            def.name
                        )))
                    }
                },
                // Default: chain from the previous joint's child link.
                None => idx.checked_sub(1),
            };
            if def.kind.is_movable() {
                if def.limits[0] >= def.limits[1] {
                    return Err(Error::ModelInvalid(format!(
                        "joint `{}` has reversed or empty limits [{}, {}]",
                        def.name, def.limits[0], def.limits[1]
                    )));
                }
                if (def.axis.norm() - 1.0).abs() > AXIS_TOL {
                    return Err(Error::ModelInvalid(format!(
                        "joint `{}` axis is not unit length",
                        def.name
                    )));
                }
            }
            if !def.origin.rotation_is_orthonormal() {
                return Err(Error::ModelInvalid(format!(
                    "joint `{}` origin rotation is not orthonormal",
                    def.name
                )));
            }
            link_to_joint.insert(link.clone(), idx);
            joints.push(Joint {
                name: def.name,
                kind: def.kind,
                axis: def.axis,
                origin: def.origin,
                limits: def.limits,
                link,
                parent,
            });
        }

        let movable: Vec<usize> = joints
            .iter()
            .enumerate()
            .filter(|(_, j)| j.kind.is_movable())
            .map(|(i, _)| i)
            .collect();
        let mut movable_of_joint = vec![None; joints.len()];
        let mut movable_by_name = HashMap::new();
        for (m, &j) in movable.iter().enumerate() {
            movable_of_joint[j] = Some(m);
            movable_by_name.insert(joints[j].name.clone(), m);
        }

        let mut chain = KinematicChain {
            name: name.to_string(),
            joints,
            root_link: ROOT_LINK.to_string(),
            link_to_joint,
            movable,
            movable_of_joint,
            movable_by_name,
            arms: BTreeMap::new(),
            couplings: Vec::new(),
            base_dof: base_dof.to_vec(),
            hash: 0,
        };

        for (arm_id, f) in &frames {
            let info = chain.resolve_arm(arm_id, f)?;
            chain.arms.insert(arm_id.clone(), info);
        }

        for (joint, source, scale, offset) in couplings {
            let j = chain
                .movable_by_name
                .get(&joint)
                .copied()
                .ok_or_else(|| Error::UnknownJoint(joint.clone()))?;
            let s = chain
                .movable_by_name
                .get(&source)
                .copied()
                .ok_or_else(|| Error::UnknownJoint(source.clone()))?;
            if j == s {
                return Err(Error::ModelInvalid(format!(
                    "coupling of `{joint}` to itself"
                )));
            }
            chain.couplings.push(Coupling {
                joint: j,
                source: s,
                scale,
                offset,
            });
        }

        chain.hash = chain.compute_hash();
        Ok(chain)
    }

    fn resolve_arm(&self, arm_id: &str, f: &ArmFramesDef) -> Result<ArmInfo> {
        for link in [&f.arm_base, &f.lower_arm, &f.hand] {
            if !self.has_link(link) {
                return Err(Error::ModelInvalid(format!(
                    "arm `{arm_id}` designates unknown link `{link}`"
                )));
            }
        }
        if f.wrist_joints.len() != 3 {
            return Err(Error::ModelInvalid(format!(
                "arm `{arm_id}` must list exactly 3 wrist joints (the Z-X-Z triple), got {}",
                f.wrist_joints.len()
            )));
        }
        let mut wrist_joints = [0usize; 3];
        for (k, name) in f.wrist_joints.iter().enumerate() {
            let idx = self
                .joints
                .iter()
                .position(|j| &j.name == name)
                .ok_or_else(|| Error::UnknownJoint(name.clone()))?;
            if self.joints[idx].kind != JointKind::Revolute {
                return Err(Error::ModelInvalid(format!(
                    "wrist joint `{name}` must be revolute"
                )));
            }
            wrist_joints[k] = idx;
        }

        // Path of joints from arm_base down to hand.
        let path = self.path_between(&f.arm_base, &f.hand).ok_or_else(|| {
            Error::ModelInvalid(format!(
                "arm `{arm_id}`: hand `{}` is not a descendant of arm base `{}`",
                f.hand, f.arm_base
            ))
        })?;
        let arm_movable: Vec<usize> = path
            .iter()
            .filter_map(|&j| self.movable_of_joint[j])
            .collect();
        let wrist_movable: Vec<usize> = wrist_joints
            .iter()
            .map(|&j| {
                self.movable_of_joint[j].ok_or_else(|| {
                    Error::ModelInvalid(format!(
                        "wrist joint `{}` is fixed; list only the movable Z-X-Z triple",
                        self.joints[j].name
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if arm_movable.len() < 3 || arm_movable[arm_movable.len() - 3..] != wrist_movable[..] {
            return Err(Error::ModelInvalid(format!(
                "arm `{arm_id}`: wrist joints must be the contiguous suffix of the arm's \
                 movable joints"
            )));
        }

        // Lower-arm link must sit just before the wrist: no movable joint
        // between it and the first wrist joint.
        let pre_wrist_path = self
            .path_between(&f.lower_arm, &self.joints[wrist_joints[0]].link)
            .ok_or_else(|| {
                Error::ModelInvalid(format!(
                    "arm `{arm_id}`: first wrist joint is not below lower-arm link `{}`",
                    f.lower_arm
                ))
            })?;
        // The path ends at the first wrist joint itself; everything before it
        // must be fixed structure.
        if pre_wrist_path
            .iter()
            .take(pre_wrist_path.len().saturating_sub(1))
            .any(|&j| self.joints[j].kind.is_movable())
        {
            return Err(Error::ModelInvalid(format!(
                "arm `{arm_id}`: a movable joint sits between lower-arm link `{}` and the wrist",
                f.lower_arm
            )));
        }
        if *pre_wrist_path.last().unwrap() != wrist_joints[0] {
            return Err(Error::ModelInvalid(format!(
                "arm `{arm_id}`: lower-arm path does not end at the first wrist joint"
            )));
        }

        // Z-X-Z structure: local axes and identity transforms in between.
        let expected_axes = [Vector3::z(), Vector3::x(), Vector3::z()];
        for (k, &j) in wrist_joints.iter().enumerate() {
            if (self.joints[j].axis - expected_axes[k]).norm() > WRIST_STRUCT_TOL {
                return Err(Error::ModelInvalid(format!(
                    "arm `{arm_id}`: wrist joint `{}` axis must be local {} for the Z-X-Z solve",
                    self.joints[j].name,
                    ["+z", "+x", "+z"][k]
                )));
            }
        }
        for w in 0..2 {
            let seg = self
                .path_between(&self.joints[wrist_joints[w]].link, &self.joints[wrist_joints[w + 1]].link)
                .ok_or_else(|| {
                    Error::ModelInvalid(format!(
                        "arm `{arm_id}`: wrist joints are not chained in the listed order"
                    ))
                })?;
            let mut t = Pose::identity();
            for &j in &seg {
                if self.joints[j].kind.is_movable() && j != wrist_joints[w + 1] {
                    return Err(Error::ModelInvalid(format!(
                        "arm `{arm_id}`: movable joint between wrist joints"
                    )));
                }
                t = t.compose(&self.joints[j].origin);
            }
            if (t.rotation - Matrix3::identity()).norm() > WRIST_STRUCT_TOL
                || t.translation.norm() > WRIST_STRUCT_TOL
            {
                return Err(Error::ModelInvalid(format!(
                    "arm `{arm_id}`: transform between wrist joints `{}` and `{}` must be \
                     identity for a spherical Z-X-Z wrist",
                    self.joints[wrist_joints[w]].name,
                    self.joints[wrist_joints[w + 1]].name
                )));
            }
        }

        // Fixed rotation from the lower-arm link to the first wrist joint's
        // pre-motion frame.
        let mut wrist_pre = Pose::identity();
        for &j in &pre_wrist_path {
            wrist_pre = wrist_pre.compose(&self.joints[j].origin);
        }

        // Fixed transform from the last wrist joint's post-motion frame down
        // to the hand link (only fixed joints allowed).
        let post_path = self
            .path_between(&self.joints[wrist_joints[2]].link, &f.hand)
            .ok_or_else(|| {
                Error::ModelInvalid(format!(
                    "arm `{arm_id}`: hand `{}` is not below the last wrist joint",
                    f.hand
                ))
            })?;
        if post_path.iter().any(|&j| self.joints[j].kind.is_movable()) {
            return Err(Error::ModelInvalid(format!(
                "arm `{arm_id}`: a movable joint sits between the wrist and the hand"
            )));
        }
        let mut post = Pose::identity();
        for &j in &post_path {
            post = post.compose(&self.joints[j].origin);
        }

        let non_wrist_movable = arm_movable[..arm_movable.len() - 3].to_vec();
        Ok(ArmInfo {
            arm_base: f.arm_base.clone(),
            lower_arm: f.lower_arm.clone(),
            hand: f.hand.clone(),
            wrist_joints,
            wrist_movable: [wrist_movable[0], wrist_movable[1], wrist_movable[2]],
            arm_movable,
            non_wrist_movable,
            wrist_pre_rotation: wrist_pre.rotation,
            wrist_post_rotation: post.rotation,
            wrist_to_hand: post.rotation.transpose() * post.translation,
            first_wrist_joint: wrist_joints[0],
        })
    }

    /// Joints from (exclusive) `from` link down to (inclusive) `to`'s joint,
    /// or `to` itself if `to` is a link. `None` if `to` is not a descendant.
    fn path_between(&self, from: &str, to: &str) -> Option<Vec<usize>> {
        if from == to {
            return Some(Vec::new());
        }
        let mut path = Vec::new();
        let mut cur = self.joint_of_link(to)?;
        loop {
            path.push(cur);
            let parent_link = match self.joints[cur].parent {
                Some(p) => &self.joints[p].link,
                None => &self.root_link,
            };
            if parent_link == from {
                path.reverse();
                return Some(path);
            }
            cur = match self.joints[cur].parent {
                Some(p) => p,
                None => return None,
            };
        }
    }

    fn joint_of_link(&self, link: &str) -> Option<usize> {
        self.link_to_joint.get(link).copied()
    }

    fn compute_hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        h.update([0u8]);
        for j in &self.joints {
            h.update(j.name.as_bytes());
            h.update([0u8]);
            h.update([match j.kind {
                JointKind::Revolute => 1u8,
                JointKind::Prismatic => 2,
                JointKind::Fixed => 3,
            }]);
            for v in j.axis.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
            for v in j.origin.rotation.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
            for v in j.origin.translation.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
            for v in j.limits {
                h.update(v.to_bits().to_le_bytes());
            }
            h.update((j.parent.map(|p| p as u64 + 1).unwrap_or(0)).to_le_bytes());
            h.update(j.link.as_bytes());
            h.update([0u8]);
        }
        for (arm, info) in &self.arms {
            h.update(arm.as_bytes());
            h.update([0u8]);
            for &w in &info.wrist_joints {
                h.update((w as u64).to_le_bytes());
            }
            for link in [&info.arm_base, &info.lower_arm, &info.hand] {
                h.update(link.as_bytes());
                h.update([0u8]);
            }
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    // -- accessors ----------------------------------------------------------

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root_link(&self) -> &str {
        &self.root_link
    }

    /// Structural hash; maps record it to detect chain mismatches.
    pub fn hash(&self) -> u64 {
        self.hash
    }

    /// Hash binding this chain to one arm (what map files store).
    pub fn arm_hash(&self, arm: &str) -> Result<u64> {
        self.arm(arm)?;
        let mut h = Sha256::new();
        h.update(self.hash.to_le_bytes());
        h.update(arm.as_bytes());
        let digest = h.finalize();
        Ok(u64::from_le_bytes(digest[..8].try_into().unwrap()))
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn movable_count(&self) -> usize {
        self.movable.len()
    }

    /// Joint behind a movable index.
    pub fn movable_joint(&self, movable_idx: usize) -> &Joint {
        &self.joints[self.movable[movable_idx]]
    }

    pub fn movable_index(&self, joint_name: &str) -> Option<usize> {
        self.movable_by_name.get(joint_name).copied()
    }

    pub fn movable_names(&self) -> Vec<&str> {
        self.movable
            .iter()
            .map(|&j| self.joints[j].name.as_str())
            .collect()
    }

    pub fn has_link(&self, name: &str) -> bool {
        name == self.root_link || self.link_to_joint.contains_key(name)
    }

    pub fn arm(&self, id: &str) -> Result<&ArmInfo> {
        self.arms.get(id).ok_or_else(|| Error::UnknownArm(id.to_string()))
    }

    pub fn arms(&self) -> &BTreeMap<String, ArmInfo> {
        &self.arms
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn base_dof(&self) -> &[String] {
        &self.base_dof
    }

    /// A joint state with every movable joint at 0, clamped into limits.
    pub fn neutral_state(&self) -> Vec<f64> {
        self.movable
            .iter()
            .map(|&j| self.joints[j].clamp(0.0))
            .collect()
    }

    /// Midpoints of the joint limits, per movable joint.
    pub fn midpoint_state(&self) -> Vec<f64> {
        self.movable
            .iter()
            .map(|&j| 0.5 * (self.joints[j].limits[0] + self.joints[j].limits[1]))
            .collect()
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(&self.movable)
            .all(|(&v, &j)| v >= self.joints[j].limits[0] && v <= self.joints[j].limits[1])
    }

    fn check_len(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.movable.len() {
            return Err(Error::LengthMismatch {
                expected: self.movable.len(),
                got: q.len(),
            });
        }
        Ok(())
    }

    // -- forward kinematics --------------------------------------------------

    /// Sequence of joint indices from the root down to the given link.
    fn path_to_link(&self, frame: &str) -> Result<Vec<usize>> {
        if frame == self.root_link {
            return Ok(Vec::new());
        }
        let mut path = Vec::new();
        let mut cur = self
            .joint_of_link(frame)
            .ok_or_else(|| Error::UnknownFrame(frame.to_string()))?;
        loop {
            path.push(cur);
            match self.joints[cur].parent {
                Some(p) => cur = p,
                None => break,
            }
        }
        path.reverse();
        Ok(path)
    }

    /// Pose of the named link frame in the chain base frame.
    pub fn forward_kinematics(&self, q: &[f64], frame: &str) -> Result<Pose> {
        self.check_len(q)?;
        let path = self.path_to_link(frame)?;
        let mut t = Pose::identity();
        for &j in &path {
            t = t.compose(&self.joints[j].origin);
            if let Some(m) = self.movable_of_joint[j] {
                t = t.compose(&self.joints[j].motion(q[m]));
            }
        }
        Ok(t)
    }

    /// Pose of `to` expressed in the `from` link frame.
    pub fn relative_pose(&self, q: &[f64], from: &str, to: &str) -> Result<Pose> {
        let a = self.forward_kinematics(q, from)?;
        let b = self.forward_kinematics(q, to)?;
        Ok(a.inverse().compose(&b))
    }

    /// Pose of a joint's frame after its fixed origin but before its motion.
    /// The first wrist joint's pre-motion origin is the wrist center.
    pub fn joint_pre_motion_pose(&self, q: &[f64], joint_idx: usize) -> Result<Pose> {
        self.check_len(q)?;
        let link = &self.joints[joint_idx].link;
        let path = self.path_to_link(link)?;
        let mut t = Pose::identity();
        for &j in &path {
            t = t.compose(&self.joints[j].origin);
            if j == joint_idx {
                return Ok(t);
            }
            if let Some(m) = self.movable_of_joint[j] {
                t = t.compose(&self.joints[j].motion(q[m]));
            }
        }
        unreachable!("joint is always on the path to its own link");
    }

    /// Wrist-center position of an arm in the arm-base frame, from a full
    /// joint state. Only the arm's non-wrist joints influence the result.
    pub fn wrist_center_fk(&self, q: &[f64], arm: &str) -> Result<Vector3<f64>> {
        let info = self.arm(arm)?;
        let base = self.forward_kinematics(q, &info.arm_base)?;
        let pre = self.joint_pre_motion_pose(q, info.first_wrist_joint)?;
        Ok(base.inverse().compose(&pre).translation)
    }

    /// FK path with per-joint world axis and frame origin, used by the
    /// Jacobian. Returns the frame pose and, for each movable joint on the
    /// path, `(movable index, world axis, world origin of the joint frame)`.
    pub(crate) fn fk_with_frames(
        &self,
        q: &[f64],
        frame: &str,
    ) -> Result<(Pose, Vec<(usize, Vector3<f64>, Vector3<f64>)>)> {
        self.check_len(q)?;
        let path = self.path_to_link(frame)?;
        let mut t = Pose::identity();
        let mut frames = Vec::with_capacity(path.len());
        for &j in &path {
            t = t.compose(&self.joints[j].origin);
            if let Some(m) = self.movable_of_joint[j] {
                frames.push((m, t.rotation * self.joints[j].axis, t.translation));
                t = t.compose(&self.joints[j].motion(q[m]));
            }
        }
        Ok((t, frames))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Planar 2R arm with unit links along +x and z-axis joints.
    pub fn planar_2r() -> KinematicChain {
        let defs = vec![
            JointDef::revolute(
                "j1",
                Vector3::z(),
                Pose::identity(),
                [-std::f64::consts::PI, std::f64::consts::PI],
            ),
            JointDef::revolute(
                "j2",
                Vector3::z(),
                Pose::from_translation(Vector3::new(1.0, 0.0, 0.0)),
                [-std::f64::consts::PI, std::f64::consts::PI],
            ),
            JointDef::fixed("ee", Pose::from_translation(Vector3::new(1.0, 0.0, 0.0))),
        ];
        KinematicChain::build("planar2r", &[], &BTreeMap::new(), defs, BTreeMap::new(), vec![])
            .unwrap()
    }

    #[test]
    fn minimal_one_joint_model_loads() {
        let text = r#"{
            "name": "mini",
            "joints": [
                {"name": "j1", "kind": "revolute", "axis": [0, 0, 1], "limits": [-1.0, 1.0]}
            ]
        }"#;
        let chain = load_chain(text).unwrap();
        assert_eq!(chain.movable_count(), 1);
        assert_eq!(chain.movable_names(), vec!["j1"]);
    }

    #[test]
    fn reversed_limits_rejected() {
        let text = r#"{
            "name": "bad",
            "joints": [
                {"name": "j1", "kind": "revolute", "axis": [0, 0, 1], "limits": [1.0, -1.0]}
            ]
        }"#;
        assert!(matches!(load_chain(text), Err(Error::ModelInvalid(_))));
    }

    #[test]
    fn zero_axis_rejected() {
        let text = r#"{
            "name": "bad",
            "joints": [
                {"name": "j1", "kind": "revolute", "axis": [0, 0, 0], "limits": [-1.0, 1.0]}
            ]
        }"#;
        assert!(matches!(load_chain(text), Err(Error::ModelInvalid(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = r#"{
            "name": "bad",
            "joints": [
                {"name": "j1", "kind": "revolute", "axis": [0, 0, 1], "limits": [-1.0, 1.0]},
                {"name": "j1", "kind": "revolute", "axis": [0, 0, 1], "limits": [-1.0, 1.0]}
            ]
        }"#;
        assert!(matches!(load_chain(text), Err(Error::ModelInvalid(_))));
    }

    #[test]
    fn dangling_frame_reference_rejected() {
        let text = r#"{
            "name": "bad",
            "joints": [
                {"name": "j1", "kind": "revolute", "axis": [0, 0, 1], "limits": [-1.0, 1.0]}
            ],
            "frames": {
                "left": {"arm_base": "nope", "lower_arm": "j1", "wrist_joints": ["j1"], "hand": "j1"}
            }
        }"#;
        assert!(matches!(load_chain(text), Err(Error::ModelInvalid(_))));
    }

    #[test]
    fn malformed_text_is_parse_error() {
        assert!(matches!(load_chain("{ not json"), Err(Error::ModelParse(_))));
    }

    #[test]
    fn fk_identity_motion_composes_origins() {
        let chain = planar_2r();
        let p = chain.forward_kinematics(&[0.0, 0.0], "ee").unwrap();
        assert_relative_eq!(p.translation, Vector3::new(2.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn fk_quarter_turn() {
        let chain = planar_2r();
        let p = chain
            .forward_kinematics(&[std::f64::consts::FRAC_PI_2, 0.0], "ee")
            .unwrap();
        assert_relative_eq!(p.translation, Vector3::new(0.0, 2.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn fk_matches_planar_trigonometry() {
        let chain = planar_2r();
        let q1 = std::f64::consts::FRAC_PI_6;
        let q2 = std::f64::consts::FRAC_PI_4;
        let p = chain.forward_kinematics(&[q1, q2], "ee").unwrap();
        let expect = Vector3::new(
            q1.cos() + (q1 + q2).cos(),
            q1.sin() + (q1 + q2).sin(),
            0.0,
        );
        assert_relative_eq!(p.translation, expect, epsilon = 1e-12);
    }

    #[test]
    fn fk_unknown_frame_errors() {
        let chain = planar_2r();
        assert!(matches!(
            chain.forward_kinematics(&[0.0, 0.0], "nope"),
            Err(Error::UnknownFrame(_))
        ));
    }

    #[test]
    fn fk_length_mismatch_errors() {
        let chain = planar_2r();
        assert!(matches!(
            chain.forward_kinematics(&[0.0], "ee"),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn base_dof_are_prepended_in_canonical_order() {
        let text = r#"{
            "name": "mobile",
            "base_dof": ["theta", "y", "x"],
            "joints": [
                {"name": "j1", "kind": "revolute", "axis": [0, 0, 1], "limits": [-1.0, 1.0]}
            ]
        }"#;
        let chain = load_chain(text).unwrap();
        assert_eq!(chain.movable_names(), vec!["base_x", "base_y", "base_theta", "j1"]);
        // Base transform is Trans(x, y) ∘ Rz(theta): translation is
        // world-aligned because theta comes last.
        let p = chain
            .forward_kinematics(&[1.0, 2.0, std::f64::consts::FRAC_PI_2, 0.0], "j1")
            .unwrap();
        assert_relative_eq!(p.translation, Vector3::new(1.0, 2.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn fk_chains_frame_by_frame() {
        let chain = planar_2r();
        let q = [0.3, -0.8];
        let to_j1 = chain.forward_kinematics(&q, "j1").unwrap();
        let local = chain.joints()[1]
            .origin
            .compose(&chain.joints()[1].motion(q[1]));
        let to_j2 = chain.forward_kinematics(&q, "j2").unwrap();
        let chained = to_j1.compose(&local);
        assert_relative_eq!(to_j2.translation, chained.translation, epsilon = 1e-12);
        assert_relative_eq!(to_j2.rotation, chained.rotation, epsilon = 1e-12);
    }
}
