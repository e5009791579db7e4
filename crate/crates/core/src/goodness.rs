//! Joint-limit-aware manipulability: the goodness value of a robot state.
//!
//! Each Jacobian column is weighted by the clipped distance of its joint to
//! the nearer limit, orientation rows are weighted by `1/w`, and the
//! goodness is the manipulability index of the weighted matrix,
//! `f = sqrt(det(J̃ J̃ᵀ))`. A joint at its limit zeroes its column; fewer
//! than six effective columns force `f = 0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::chain::KinematicChain;
use crate::error::{Error, Result};
use crate::jacobian::geometric_jacobian;

/// Determinants below this clamp to zero before the square root.
const DET_FLOOR: f64 = 1e-300;

/// Parameters of the goodness metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoodnessParams {
    /// Clipping value for the limit distances (radians / meters).
    pub d_max: f64,
    /// Expected position/orientation correction ratio (meters per radian);
    /// orientation rows are divided by it.
    pub w: f64,
    /// Optional per-joint overrides of `d_max`, keyed by joint name.
    #[serde(default)]
    pub d_max_per_joint: BTreeMap<String, f64>,
}

impl Default for GoodnessParams {
    fn default() -> Self {
        Self {
            d_max: 0.25,
            w: 1.0,
            d_max_per_joint: BTreeMap::new(),
        }
    }
}

impl GoodnessParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_max > 0.0) {
            return Err(Error::ScenarioInvalid("goodness d_max must be > 0".into()));
        }
        if !(self.w > 0.0) {
            return Err(Error::ScenarioInvalid("goodness w must be > 0".into()));
        }
        if let Some((k, _)) = self.d_max_per_joint.iter().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::ScenarioInvalid(format!(
                "per-joint d_max for `{k}` must be > 0"
            )));
        }
        Ok(())
    }

    /// Clip value for one active joint, honoring per-joint overrides.
    pub fn d_max_for(&self, joint_name: &str) -> f64 {
        self.d_max_per_joint
            .get(joint_name)
            .copied()
            .unwrap_or(self.d_max)
    }
}

/// Clipped distances to the joint limits for the active joints.
#[derive(Debug, Clone)]
pub struct LimitDistances {
    /// `d_i = min(q_max − q_i, q_i − q_min, d_max)`, clamped below at 0;
    /// aligned with the active set.
    pub values: Vec<f64>,
    /// Active-set positions whose joint sat outside its limits (distance was
    /// forced to 0). A warning, not an error: the seed generator must score
    /// such states as worthless rather than abort.
    pub violations: Vec<usize>,
}

impl LimitDistances {
    pub fn out_of_limits(&self) -> bool {
        !self.violations.is_empty()
    }
}

/// Distances of the active joints to their limits, clipped at `d_max`.
pub fn limit_distances(
    chain: &KinematicChain,
    q: &[f64],
    active: &[usize],
    d_max: f64,
) -> Result<LimitDistances> {
    let per: Vec<f64> = vec![d_max; active.len()];
    limit_distances_clipped(chain, q, active, &per)
}

/// Same as [`limit_distances`] with one clip value per active joint.
pub fn limit_distances_clipped(
    chain: &KinematicChain,
    q: &[f64],
    active: &[usize],
    d_max: &[f64],
) -> Result<LimitDistances> {
    if q.len() != chain.movable_count() {
        return Err(Error::LengthMismatch {
            expected: chain.movable_count(),
            got: q.len(),
        });
    }
    if d_max.len() != active.len() {
        return Err(Error::LengthMismatch {
            expected: active.len(),
            got: d_max.len(),
        });
    }
    let mut values = Vec::with_capacity(active.len());
    let mut violations = Vec::new();
    for (pos, &m) in active.iter().enumerate() {
        if m >= chain.movable_count() {
            return Err(Error::UnknownJoint(format!("movable index {m}")));
        }
        let [lo, hi] = chain.movable_joint(m).limits;
        let d = (hi - q[m]).min(q[m] - lo).min(d_max[pos]);
        if d < 0.0 {
            violations.push(pos);
        }
        values.push(d.max(0.0));
    }
    Ok(LimitDistances { values, violations })
}

/// Scales Jacobian columns by the limit distances and divides the
/// orientation rows by `w`: `J̃ = W_x⁻¹ J W_q`.
pub fn scaled_jacobian(jac: &DMatrix<f64>, d: &LimitDistances, w: f64) -> Result<DMatrix<f64>> {
    if jac.nrows() != 6 {
        return Err(Error::BadJacobianShape(jac.nrows()));
    }
    if jac.ncols() != d.values.len() {
        return Err(Error::LengthMismatch {
            expected: jac.ncols(),
            got: d.values.len(),
        });
    }
    let mut out = jac.clone();
    for (c, &dv) in d.values.iter().enumerate() {
        for r in 0..6 {
            out[(r, c)] *= dv;
            if r >= 3 {
                out[(r, c)] /= w;
            }
        }
    }
    Ok(out)
}

/// Manipulability index of an already-scaled Jacobian.
///
/// Exactly-zero columns are dropped first: a joint at its limit (or an
/// active joint that cannot move the frame) must annihilate `f` exactly
/// when fewer than six effective columns remain, not merely up to rounding.
pub fn manipulability(scaled: &DMatrix<f64>) -> Result<f64> {
    if scaled.nrows() != 6 {
        return Err(Error::BadJacobianShape(scaled.nrows()));
    }
    let cols: Vec<usize> = (0..scaled.ncols())
        .filter(|&c| (0..6).any(|r| scaled[(r, c)] != 0.0))
        .collect();
    if cols.len() < 6 {
        return Ok(0.0);
    }
    // Gram matrix J̃J̃ᵀ is symmetric PSD; its eigenvalues give the
    // determinant without sign noise near singularity.
    let mut gram = nalgebra::Matrix6::<f64>::zeros();
    for &c in &cols {
        for r in 0..6 {
            for s in r..6 {
                gram[(r, s)] += scaled[(r, c)] * scaled[(s, c)];
            }
        }
    }
    for r in 0..6 {
        for s in 0..r {
            gram[(r, s)] = gram[(s, r)];
        }
    }
    let eig = gram.symmetric_eigenvalues();
    let det: f64 = eig.iter().map(|&l| l.max(0.0)).product();
    if det < DET_FLOOR {
        return Ok(0.0);
    }
    Ok(det.sqrt())
}

/// Goodness value `f` of a robot state: manipulability of the limit-scaled
/// Jacobian of `hand_frame` over the `active` joints.
pub fn goodness(
    chain: &KinematicChain,
    q: &[f64],
    active: &[usize],
    hand_frame: &str,
    params: &GoodnessParams,
) -> Result<f64> {
    if active.is_empty() {
        return Err(Error::EmptyActiveSet);
    }
    let d_max: Vec<f64> = active
        .iter()
        .map(|&m| params.d_max_for(&chain.movable_joint(m).name))
        .collect();
    let d = limit_distances_clipped(chain, q, active, &d_max)?;
    let jac = geometric_jacobian(chain, q, hand_frame, active)?;
    let scaled = scaled_jacobian(&jac, &d, params.w)?;
    manipulability(&scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{JointDef, KinematicChain};
    use crate::pose::Pose;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use std::collections::BTreeMap;

    fn one_joint(limits: [f64; 2]) -> KinematicChain {
        let defs = vec![JointDef::revolute(
            "j1",
            Vector3::z(),
            Pose::identity(),
            limits,
        )];
        KinematicChain::build("one", &[], &BTreeMap::new(), defs, BTreeMap::new(), vec![]).unwrap()
    }

    #[test]
    fn distance_zero_at_limit() {
        let chain = one_joint([-0.5, 0.8]);
        let d = limit_distances(&chain, &[0.8], &[0], 0.25).unwrap();
        assert_eq!(d.values, vec![0.0]);
        assert!(!d.out_of_limits());
    }

    #[test]
    fn distance_half_range_below_clip() {
        let chain = one_joint([-0.1, 0.1]);
        let d = limit_distances(&chain, &[0.0], &[0], 0.25).unwrap();
        assert_relative_eq!(d.values[0], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn distance_clips_at_d_max() {
        let chain = one_joint([-2.0, 2.0]);
        let d = limit_distances(&chain, &[0.0], &[0], 0.25).unwrap();
        assert_eq!(d.values, vec![0.25]);
    }

    #[test]
    fn out_of_limit_flags_and_zeroes() {
        let chain = one_joint([-0.5, 0.5]);
        let d = limit_distances(&chain, &[0.7], &[0], 0.25).unwrap();
        assert_eq!(d.values, vec![0.0]);
        assert_eq!(d.violations, vec![0]);
    }

    #[test]
    fn scaled_jacobian_identity_weights() {
        let jac = DMatrix::from_fn(6, 3, |r, c| (r * 3 + c) as f64);
        let d = LimitDistances {
            values: vec![1.0; 3],
            violations: vec![],
        };
        let out = scaled_jacobian(&jac, &d, 1.0).unwrap();
        assert_eq!(out, jac);
    }

    #[test]
    fn zero_distance_kills_column() {
        let jac = DMatrix::from_element(6, 2, 1.0);
        let d = LimitDistances {
            values: vec![0.0, 1.0],
            violations: vec![],
        };
        let out = scaled_jacobian(&jac, &d, 1.0).unwrap();
        assert!((0..6).all(|r| out[(r, 0)] == 0.0));
        assert!((0..6).all(|r| out[(r, 1)] == 1.0));
    }

    #[test]
    fn w_halves_orientation_rows() {
        let jac = DMatrix::from_element(6, 2, 2.0);
        let d = LimitDistances {
            values: vec![1.0, 1.0],
            violations: vec![],
        };
        let out = scaled_jacobian(&jac, &d, 2.0).unwrap();
        for c in 0..2 {
            for r in 0..3 {
                assert_eq!(out[(r, c)], 2.0);
                assert_eq!(out[(r + 3, c)], 1.0);
            }
        }
    }

    #[test]
    fn non_six_rows_rejected() {
        let jac = DMatrix::from_element(5, 2, 1.0);
        let d = LimitDistances {
            values: vec![1.0, 1.0],
            violations: vec![],
        };
        assert!(matches!(
            scaled_jacobian(&jac, &d, 1.0),
            Err(Error::BadJacobianShape(5))
        ));
    }

    #[test]
    fn fewer_than_six_active_gives_exact_zero() {
        let chain = one_joint([-1.0, 1.0]);
        let f = goodness(&chain, &[0.0], &[0], "j1", &GoodnessParams::default()).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn manipulability_of_identity_columns() {
        // Six orthonormal columns: det(J̃J̃ᵀ) = 1.
        let jac = DMatrix::<f64>::identity(6, 6);
        let d = LimitDistances {
            values: vec![1.0; 6],
            violations: vec![],
        };
        let f = manipulability(&scaled_jacobian(&jac, &d, 1.0).unwrap()).unwrap();
        assert_relative_eq!(f, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn planar_2r_restriction_has_unit_index() {
        // Full 6-row f vanishes (2 active < 6); the planar 2-row block of
        // the scaled Jacobian carries the classic l1·l2·|sin q2| = 1.
        let defs = vec![
            JointDef::revolute(
                "j1",
                Vector3::z(),
                Pose::identity(),
                [-4.0, 4.0],
            ),
            JointDef::revolute(
                "j2",
                Vector3::z(),
                Pose::from_translation(Vector3::new(1.0, 0.0, 0.0)),
                [-4.0, 4.0],
            ),
            JointDef::fixed("ee", Pose::from_translation(Vector3::new(1.0, 0.0, 0.0))),
        ];
        let chain =
            KinematicChain::build("p2r", &[], &BTreeMap::new(), defs, BTreeMap::new(), vec![])
                .unwrap();
        let q = [0.0, std::f64::consts::FRAC_PI_2];
        let params = GoodnessParams {
            d_max: 1.0,
            ..GoodnessParams::default()
        };
        let full = goodness(&chain, &q, &[0, 1], "ee", &params).unwrap();
        assert_eq!(full, 0.0);

        let jac = crate::jacobian::geometric_jacobian(&chain, &q, "ee", &[0, 1]).unwrap();
        let d = limit_distances(&chain, &q, &[0, 1], 1.0).unwrap();
        let scaled = scaled_jacobian(&jac, &d, 1.0).unwrap();
        let planar = scaled[(0, 0)] * scaled[(1, 1)] - scaled[(0, 1)] * scaled[(1, 0)];
        assert!((planar.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f_invariant_under_column_permutation() {
        let jac = DMatrix::from_fn(6, 7, |r, c| ((r * 7 + c) as f64 * 0.37).sin());
        let d = LimitDistances {
            values: (0..7).map(|i| 0.1 + 0.1 * i as f64).collect(),
            violations: vec![],
        };
        let f = manipulability(&scaled_jacobian(&jac, &d, 1.3).unwrap()).unwrap();
        // Reverse the column order.
        let mut rjac = DMatrix::zeros(6, 7);
        for c in 0..7 {
            for r in 0..6 {
                rjac[(r, c)] = jac[(r, 6 - c)];
            }
        }
        let rd = LimitDistances {
            values: d.values.iter().rev().copied().collect(),
            violations: vec![],
        };
        let rf = manipulability(&scaled_jacobian(&rjac, &rd, 1.3).unwrap()).unwrap();
        assert!((f - rf).abs() <= 1e-12 * f.max(1.0));
    }

    #[test]
    fn f_non_decreasing_in_each_distance() {
        let jac = DMatrix::from_fn(6, 7, |r, c| ((r as f64 + 1.3) * (c as f64 + 0.7)).cos());
        let base: Vec<f64> = (0..7).map(|i| 0.2 + 0.05 * i as f64).collect();
        let f0 = manipulability(
            &scaled_jacobian(
                &jac,
                &LimitDistances {
                    values: base.clone(),
                    violations: vec![],
                },
                1.0,
            )
            .unwrap(),
        )
        .unwrap();
        for i in 0..7 {
            let mut bumped = base.clone();
            bumped[i] += 0.1;
            let f1 = manipulability(
                &scaled_jacobian(
                    &jac,
                    &LimitDistances {
                        values: bumped,
                        violations: vec![],
                    },
                    1.0,
                )
                .unwrap(),
            )
            .unwrap();
            assert!(f1 >= f0 - 1e-15, "bumping d_{i} decreased f: {f0} -> {f1}");
        }
    }

    #[test]
    fn zero_column_with_six_active_gives_exact_zero() {
        let mut jac = DMatrix::<f64>::identity(6, 6);
        for r in 0..6 {
            jac[(r, 2)] = if r == 2 { 1.0 } else { 0.3 };
        }
        let d = LimitDistances {
            values: vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0],
            violations: vec![],
        };
        let f = manipulability(&scaled_jacobian(&jac, &d, 1.0).unwrap()).unwrap();
        assert_eq!(f, 0.0);
    }
}
