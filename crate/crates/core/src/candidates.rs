//! Arm initial-guess provider: full arm-joint candidates for a target hand
//! pose, from a reachability-map query plus the analytic wrist solve.

use crate::chain::KinematicChain;
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::reachability::ReachabilityMap;
use crate::wrist::{solve_zxz, wrist_center, Branch};

/// A full arm joint state that reaches the target hand orientation exactly
/// and its position up to the lattice error.
#[derive(Debug, Clone)]
pub struct ArmCandidate {
    /// Values for all of the arm's movable joints (non-wrist then wrist),
    /// aligned with `ArmInfo::arm_movable`.
    pub q_arm: Vec<f64>,
    /// Distance between the map sample's wrist center and the target wrist
    /// center (meters).
    pub center_error: f64,
    pub branch: Branch,
}

/// Enumerates arm candidates for a hand pose given in the arm-base frame.
///
/// Every map sample within `r` of the implied wrist center contributes one
/// candidate per limit-feasible wrist branch. Candidates arrive sorted by
/// center error (primary branch before mirror at equal error); they are not
/// deduplicated — the caller picks by goodness.
pub fn arm_candidates(
    map: &ReachabilityMap,
    chain: &KinematicChain,
    arm: &str,
    hand_pose_in_arm_base: &Pose,
    r: f64,
) -> Result<Vec<ArmCandidate>> {
    let info = chain.arm(arm)?;
    if map.metadata().chain_arm_hash != chain.arm_hash(arm)? {
        return Err(Error::MapChainMismatch);
    }
    let wrist_limits = [
        chain.movable_joint(info.wrist_movable[0]).limits,
        chain.movable_joint(info.wrist_movable[1]).limits,
        chain.movable_joint(info.wrist_movable[2]).limits,
    ];
    let target_center = wrist_center(hand_pose_in_arm_base, chain, arm)?;

    let pre_t = info.wrist_pre_rotation.transpose();
    let post_t = info.wrist_post_rotation.transpose();
    let mut out = Vec::new();
    for (_, sample) in map.query(&target_center, r) {
        // Rz(α)·Rx(β)·Rz(γ) = R_preᵀ · R_lowerᵀ · R_hand · R_postᵀ
        let relative =
            pre_t * sample.lower_arm_rotation().transpose() * hand_pose_in_arm_base.rotation * post_t;
        for sol in solve_zxz(&relative, &wrist_limits) {
            let mut q_arm = sample.q_partial.clone();
            q_arm.extend_from_slice(&sol.angles);
            out.push(ArmCandidate {
                q_arm,
                center_error: (sample.wrist_center - target_center).norm(),
                branch: sol.branch,
            });
        }
    }
    Ok(out)
}

/// Writes a candidate's joint values into a full-chain state vector.
pub fn apply_candidate(chain: &KinematicChain, arm: &str, candidate: &ArmCandidate, q: &mut [f64]) {
    let info = chain.arm(arm).expect("validated arm id");
    for (&m, &v) in info.arm_movable.iter().zip(&candidate.q_arm) {
        q[m] = v;
    }
}
