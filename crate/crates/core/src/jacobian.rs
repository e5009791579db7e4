//! Geometric Jacobians for arbitrary frames of a chain.

use nalgebra::DMatrix;

use crate::chain::{JointKind, KinematicChain};
use crate::error::{Error, Result};

/// Geometric Jacobian of `frame` with respect to the `active` movable
/// joints, columns ordered as in `active`.
///
/// Rows are `(v_x, v_y, v_z, ω_x, ω_y, ω_z)`. A revolute column is
/// `(z_i × (p − p_i), z_i)`, a prismatic column `(z_i, 0)`. Joints that are
/// not ancestors of `frame` (the other arm, say) contribute zero columns:
/// moving them does not move the frame.
pub fn geometric_jacobian(
    chain: &KinematicChain,
    q: &[f64],
    frame: &str,
    active: &[usize],
) -> Result<DMatrix<f64>> {
    if active.is_empty() {
        return Err(Error::EmptyActiveSet);
    }
    for &m in active {
        if m >= chain.movable_count() {
            return Err(Error::UnknownJoint(format!("movable index {m}")));
        }
    }
    let (pose, frames) = chain.fk_with_frames(q, frame)?;
    let p_ee = pose.translation;

    let mut jac = DMatrix::zeros(6, active.len());
    for (col, &m) in active.iter().enumerate() {
        let Some(&(_, z, p)) = frames.iter().find(|(fm, _, _)| *fm == m) else {
            continue; // not an ancestor of `frame`
        };
        match chain.movable_joint(m).kind {
            JointKind::Revolute => {
                let lin = z.cross(&(p_ee - p));
                for r in 0..3 {
                    jac[(r, col)] = lin[r];
                    jac[(r + 3, col)] = z[r];
                }
            }
            JointKind::Prismatic => {
                for r in 0..3 {
                    jac[(r, col)] = z[r];
                }
            }
            JointKind::Fixed => unreachable!("movable indices never point at fixed joints"),
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::JointDef;
    use crate::pose::Pose;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use std::collections::BTreeMap;

    fn planar_2r() -> KinematicChain {
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
    fn planar_2r_determinant_at_right_angle() {
        let chain = planar_2r();
        let jac = geometric_jacobian(&chain, &[0.0, std::f64::consts::FRAC_PI_2], "ee", &[0, 1])
            .unwrap();
        // 2×2 planar block (x, y rows): |det| = l1 l2 |sin q2| = 1.
        let det = jac[(0, 0)] * jac[(1, 1)] - jac[(0, 1)] * jac[(1, 0)];
        assert_relative_eq!(det.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn prismatic_column_is_axis() {
        let defs = vec![JointDef::prismatic(
            "slide",
            Vector3::x(),
            Pose::identity(),
            [-2.0, 2.0],
        )];
        let chain =
            KinematicChain::build("slider", &[], &BTreeMap::new(), defs, BTreeMap::new(), vec![])
                .unwrap();
        for q in [-1.3, 0.0, 0.7] {
            let jac = geometric_jacobian(&chain, &[q], "slide", &[0]).unwrap();
            let col: Vec<f64> = (0..6).map(|r| jac[(r, 0)]).collect();
            assert_eq!(col, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn empty_active_set_rejected() {
        let chain = planar_2r();
        assert!(matches!(
            geometric_jacobian(&chain, &[0.0, 0.0], "ee", &[]),
            Err(Error::EmptyActiveSet)
        ));
    }

    #[test]
    fn unknown_frame_rejected() {
        let chain = planar_2r();
        assert!(matches!(
            geometric_jacobian(&chain, &[0.0, 0.0], "nope", &[0]),
            Err(Error::UnknownFrame(_))
        ));
    }

    #[test]
    fn columns_follow_active_order() {
        let chain = planar_2r();
        let q = [0.4, -0.9];
        let fwd = geometric_jacobian(&chain, &q, "ee", &[0, 1]).unwrap();
        let rev = geometric_jacobian(&chain, &q, "ee", &[1, 0]).unwrap();
        for r in 0..6 {
            assert_eq!(fwd[(r, 0)], rev[(r, 1)]);
            assert_eq!(fwd[(r, 1)], rev[(r, 0)]);
        }
    }
}
