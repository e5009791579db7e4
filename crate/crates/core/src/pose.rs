//! Rigid transforms in 3-D: a rotation matrix plus a translation vector.
//!
//! Rotations are kept as 3×3 matrices internally because the Jacobian and
//! Euler math read off matrix entries directly; file formats carry unit
//! quaternions `(w, x, y, z)` instead.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `RᵀR − I` and `det R − 1` for a pose rotation to be valid.
pub const ROTATION_TOL: f64 = 1e-9;

/// A rigid transform: `p ↦ rotation · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// Rotation about the given unit axis by `angle` (Rodrigues).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        Self::from_rotation(rotation_about(axis, angle))
    }

    /// Build from a translation and a unit quaternion `(w, x, y, z)`.
    ///
    /// The quaternion must have unit norm within `1e-6`; it is renormalized
    /// before conversion so the resulting matrix is orthonormal to machine
    /// precision.
    pub fn from_translation_quaternion(translation: [f64; 3], quat_wxyz: [f64; 4]) -> Result<Self> {
        let [w, x, y, z] = quat_wxyz;
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::ModelInvalid(format!(
                "quaternion ({w}, {x}, {y}, {z}) has norm {norm}, expected 1"
            )));
        }
        let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        Ok(Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation: Vector3::new(translation[0], translation[1], translation[2]),
        })
    }

    /// Rotation as a unit quaternion `(w, x, y, z)` with `w ≥ 0`.
    ///
    /// The sign convention makes the conversion canonical, so identical
    /// rotations always serialize to identical bytes.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        rotation_to_quat_wxyz(&self.rotation)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Checks the rotation-matrix invariants: `RᵀR = I` and `det R = 1`
    /// within [`ROTATION_TOL`].
    pub fn rotation_is_orthonormal(&self) -> bool {
        let gram = self.rotation.transpose() * self.rotation;
        let drift = (gram - Matrix3::identity()).norm();
        drift <= ROTATION_TOL && (self.rotation.determinant() - 1.0).abs() <= ROTATION_TOL
    }
}

/// Rotation matrix about a unit axis by `angle` (Rodrigues formula).
pub fn rotation_about(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    let k = skew(axis);
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

/// Skew-symmetric matrix `[v]×` such that `[v]× a = v × a`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation logarithm: the axis-angle vector `ω` with `‖ω‖ ∈ [0, π]` such
/// that `exp([ω]×) = r`.
///
/// Stable at both ends: near the identity it falls back to the
/// skew-symmetric part, near π it recovers the axis from the diagonal.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos_theta = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let vee = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    ) * 0.5;
    if theta < 1e-7 {
        // sin θ ≈ θ, so vee already approximates ω.
        return vee;
    }
    if std::f64::consts::PI - theta < 1e-5 {
        // Near π the off-diagonal difference vanishes; use R + I, whose
        // columns are parallel to the axis.
        let b = r + Matrix3::identity();
        let (mut axis, norm) = (0..3)
            .map(|c| {
                let col = b.column(c).into_owned();
                (col, col.norm())
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        axis /= norm;
        // Pick the sign consistent with the (tiny) skew part.
        if axis.dot(&vee) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    vee * (theta / theta.sin())
}

/// Rotation matrix from roll-pitch-yaw (extrinsic X-Y-Z: `Rz(yaw)·Ry(pitch)·Rx(roll)`).
pub fn rotation_from_rpy(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    rotation_about(&Vector3::z(), yaw)
        * rotation_about(&Vector3::y(), pitch)
        * rotation_about(&Vector3::x(), roll)
}

fn rotation_to_quat_wxyz(r: &Matrix3<f64>) -> [f64; 4] {
    // Shepperd's method: pick the largest of (w, x, y, z) as pivot.
    let tr = r.trace();
    let (w, x, y, z);
    if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        w = 0.25 * s;
        x = (r[(2, 1)] - r[(1, 2)]) / s;
        y = (r[(0, 2)] - r[(2, 0)]) / s;
        z = (r[(1, 0)] - r[(0, 1)]) / s;
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        w = (r[(2, 1)] - r[(1, 2)]) / s;
        x = 0.25 * s;
        y = (r[(0, 1)] + r[(1, 0)]) / s;
        z = (r[(0, 2)] + r[(2, 0)]) / s;
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        w = (r[(0, 2)] - r[(2, 0)]) / s;
        x = (r[(0, 1)] + r[(1, 0)]) / s;
        y = 0.25 * s;
        z = (r[(1, 2)] + r[(2, 1)]) / s;
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        w = (r[(1, 0)] - r[(0, 1)]) / s;
        x = (r[(0, 2)] + r[(2, 0)]) / s;
        y = (r[(1, 2)] + r[(2, 1)]) / s;
        z = 0.25 * s;
    }
    let norm = (w * w + x * x + y * y + z * z).sqrt();
    let mut q = [w / norm, x / norm, y / norm, z / norm];
    if q[0] < 0.0 || (q[0] == 0.0 && (q[1] < 0.0 || (q[1] == 0.0 && (q[2] < 0.0 || (q[2] == 0.0 && q[3] < 0.0))))) {
        for v in &mut q {
            *v = -*v;
        }
    }
    q
}

/// Unit quaternion `(w, x, y, z)` to rotation matrix.
pub fn quat_wxyz_to_rotation(q: [f64; 4]) -> Matrix3<f64> {
    let uq = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
    *uq.to_rotation_matrix().matrix()
}

/// Pose as it appears in model, scenario and result files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseSpec {
    pub translation: [f64; 3],
    /// Unit quaternion `(w, x, y, z)`.
    pub quaternion: [f64; 4],
}

impl PoseSpec {
    pub fn to_pose(&self) -> Result<Pose> {
        Pose::from_translation_quaternion(self.translation, self.quaternion)
    }

    pub fn from_pose(pose: &Pose) -> Self {
        Self {
            translation: [pose.translation.x, pose.translation.y, pose.translation.z],
            quaternion: pose.quaternion_wxyz(),
        }
    }
}
