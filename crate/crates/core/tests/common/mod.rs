//! Shared generators and independent oracles for the integration suites.
//! Oracle code here must stay independent of the library paths it checks.

use std::collections::BTreeMap;

use ikseed_core::chain::{ArmFramesDef, JointDef, KinematicChain, ROOT_LINK};
use ikseed_core::pose::Pose;
use nalgebra::{Matrix3, Vector3};
use rand::Rng;

pub fn random_unit_vector<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let axis = random_unit_vector(rng);
    let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    ikseed_core::pose::rotation_about(&axis, angle)
}

/// Random serial chain with mixed revolute/prismatic joints.
pub fn random_chain<R: Rng>(rng: &mut R, dof: usize) -> KinematicChain {
    let defs: Vec<JointDef> = (0..dof)
        .map(|i| {
            let name = format!("j{i}");
            let axis = random_unit_vector(rng);
            let origin = Pose::new(
                random_rotation(rng),
                Vector3::new(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(0.1..0.6),
                ),
            );
            let half_range = rng.gen_range(0.5..2.5);
            let mid = rng.gen_range(-0.3..0.3);
            let limits = [mid - half_range, mid + half_range];
            if rng.gen_bool(0.7) {
                JointDef::revolute(&name, axis, origin, limits)
            } else {
                JointDef::prismatic(&name, axis, origin, limits)
            }
        })
        .collect();
    KinematicChain::build("random", &[], &BTreeMap::new(), defs, BTreeMap::new(), vec![])
        .expect("random chain is valid")
}

pub fn random_state<R: Rng>(rng: &mut R, chain: &KinematicChain) -> Vec<f64> {
    (0..chain.movable_count())
        .map(|m| {
            let [lo, hi] = chain.movable_joint(m).limits;
            rng.gen_range(lo..hi)
        })
        .collect()
}

pub fn ee_frame(chain: &KinematicChain) -> String {
    chain
        .joints()
        .last()
        .map(|j| j.link.clone())
        .expect("non-empty chain")
}

/// Rotation logarithm, reimplemented for the finite-difference oracle.
pub fn oracle_rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos_theta = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let vee = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    ) * 0.5;
    if theta < 1e-7 {
        vee
    } else {
        vee * theta / theta.sin()
    }
}

/// Central finite differences of the pose of `frame` with respect to one
/// movable joint: position rows from the translation delta, orientation
/// rows from the rotation-log delta.
pub fn fd_jacobian_column(
    chain: &KinematicChain,
    q: &[f64],
    frame: &str,
    movable_idx: usize,
    step: f64,
) -> [f64; 6] {
    let mut qp = q.to_vec();
    let mut qm = q.to_vec();
    qp[movable_idx] += step;
    qm[movable_idx] -= step;
    let fp = chain.forward_kinematics(&qp, frame).unwrap();
    let fm = chain.forward_kinematics(&qm, frame).unwrap();
    let dv = (fp.translation - fm.translation) / (2.0 * step);
    let dw = oracle_rotation_log(&(fp.rotation * fm.rotation.transpose())) / (2.0 * step);
    [dv.x, dv.y, dv.z, dw.x, dw.y, dw.z]
}

/// 3-DOF positioning arm with a Z-X-Z wrist: the toy arm of the
/// reachability and candidate oracles.
pub fn toy_arm_3dof() -> KinematicChain {
    let defs = vec![
        JointDef::revolute("s1", Vector3::z(), Pose::identity(), [-1.4, 1.4]).link("l1"),
        JointDef::revolute(
            "s2",
            Vector3::y(),
            Pose::from_translation(Vector3::new(0.0, 0.0, 0.2)),
            [-1.4, 1.4],
        )
        .link("l2"),
        JointDef::revolute(
            "s3",
            Vector3::y(),
            Pose::from_translation(Vector3::new(0.0, 0.0, 0.22)),
            [-1.9, 0.1],
        )
        .link("forearm"),
        JointDef::revolute(
            "w1",
            Vector3::z(),
            Pose::from_translation(Vector3::new(0.0, 0.0, 0.2)),
            [-2.6, 2.6],
        ),
        JointDef::revolute("w2", Vector3::x(), Pose::identity(), [-1.6, 1.6]),
        JointDef::revolute("w3", Vector3::z(), Pose::identity(), [-2.6, 2.6]),
        JointDef::fixed("hand", Pose::from_translation(Vector3::new(0.0, 0.0, 0.09))),
    ];
    let mut frames = BTreeMap::new();
    frames.insert(
        "main".to_string(),
        ArmFramesDef {
            arm_base: ROOT_LINK.to_string(),
            lower_arm: "forearm".to_string(),
            wrist_joints: vec!["w1".into(), "w2".into(), "w3".into()],
            hand: "hand".to_string(),
        },
    );
    KinematicChain::build("toy3", &[], &BTreeMap::new(), defs, frames, vec![]).unwrap()
}
