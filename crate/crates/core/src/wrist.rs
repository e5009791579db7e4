//! Analytic Z-X-Z spherical-wrist solving.

use nalgebra::{Matrix3, Vector3};

use crate::chain::KinematicChain;
use crate::error::Result;
use crate::pose::{rotation_about, Pose};

/// Reconstruction tolerance of a wrist solution (Frobenius norm).
pub const WRIST_TOL: f64 = 1e-9;

/// Below this |sin β| the Z-X-Z decomposition is treated as degenerate.
const DEGENERATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Primary,
    Mirror,
}

/// One solution of `Rz(α)·Rx(β)·Rz(γ) = R`.
#[derive(Debug, Clone, Copy)]
pub struct WristSolution {
    /// `(α, β, γ)` in radians.
    pub angles: [f64; 3],
    pub branch: Branch,
}

impl WristSolution {
    /// Recomposes `Rz(α)·Rx(β)·Rz(γ)`.
    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_about(&Vector3::z(), self.angles[0])
            * rotation_about(&Vector3::x(), self.angles[1])
            * rotation_about(&Vector3::z(), self.angles[2])
    }
}

/// Wrist-center position implied by a hand pose: the hand position minus the
/// hand rotation applied to the arm's fixed wrist-to-hand offset. The result
/// is expressed in the same frame as `hand_pose`.
pub fn wrist_center(hand_pose: &Pose, chain: &KinematicChain, arm: &str) -> Result<Vector3<f64>> {
    let info = chain.arm(arm)?;
    Ok(hand_pose.translation - hand_pose.rotation * info.wrist_to_hand)
}

/// Shift `angle` by multiples of 2π until it lands inside `[lo, hi]`; among
/// feasible representatives the one closest to the interval midpoint wins.
fn fit_into_limits(angle: f64, lo: f64, hi: f64) -> Option<f64> {
    let tau = std::f64::consts::TAU;
    let k_min = ((lo - angle) / tau).ceil() as i64;
    let k_max = ((hi - angle) / tau).floor() as i64;
    if k_min > k_max {
        return None;
    }
    let mid = 0.5 * (lo + hi);
    (k_min..=k_max)
        .map(|k| angle + k as f64 * tau)
        .min_by(|a, b| (a - mid).abs().total_cmp(&(b - mid).abs()))
}

fn normalize_pi(angle: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut a = angle % tau;
    if a > std::f64::consts::PI {
        a -= tau;
    } else if a <= -std::f64::consts::PI {
        a += tau;
    }
    a
}

fn accept(
    alpha: f64,
    beta: f64,
    gamma: f64,
    limits: &[[f64; 2]; 3],
    branch: Branch,
    out: &mut Vec<WristSolution>,
) {
    let (Some(a), Some(b), Some(g)) = (
        fit_into_limits(alpha, limits[0][0], limits[0][1]),
        fit_into_limits(beta, limits[1][0], limits[1][1]),
        fit_into_limits(gamma, limits[2][0], limits[2][1]),
    ) else {
        return;
    };
    out.push(WristSolution {
        angles: [a, b, g],
        branch,
    });
}

/// Solves `Rz(α)·Rx(β)·Rz(γ) = rotation` for all limit-feasible branches.
///
/// The primary branch has `β ∈ [0, π]`; the mirror branch flips β and shifts
/// α, γ by π. Near β = 0 (or π) only α±γ is determined; the convention is
/// γ = 0 with α carrying the full angle, retrying with the roles swapped
/// when α alone violates its limits.
pub fn solve_zxz(rotation: &Matrix3<f64>, limits: &[[f64; 2]; 3]) -> Vec<WristSolution> {
    let r = rotation;
    let cos_beta = r[(2, 2)].clamp(-1.0, 1.0);
    let sin_beta = (1.0 - cos_beta * cos_beta).max(0.0).sqrt();
    let mut out = Vec::with_capacity(2);

    if sin_beta < DEGENERATE_TOL {
        if cos_beta > 0.0 {
            // R = Rz(α + γ).
            let theta = f64::atan2(r[(1, 0)], r[(0, 0)]);
            let before = out.len();
            accept(theta, 0.0, 0.0, limits, Branch::Primary, &mut out);
            if out.len() == before {
                accept(0.0, 0.0, theta, limits, Branch::Primary, &mut out);
            }
        } else {
            // R = Rz(α − γ)·Rx(π); π and −π are the same middle rotation, so
            // probe both signs against the middle joint's limits.
            let theta = f64::atan2(r[(1, 0)], r[(0, 0)]);
            for beta in [std::f64::consts::PI, -std::f64::consts::PI] {
                let before = out.len();
                accept(theta, beta, 0.0, limits, Branch::Primary, &mut out);
                if out.len() == before {
                    accept(0.0, beta, -theta, limits, Branch::Primary, &mut out);
                }
                if out.len() > before {
                    break;
                }
            }
        }
        return out;
    }

    let beta = cos_beta.acos();
    let alpha = f64::atan2(r[(0, 2)], -r[(1, 2)]);
    let gamma = f64::atan2(r[(2, 0)], r[(2, 1)]);
    accept(alpha, beta, gamma, limits, Branch::Primary, &mut out);
    accept(
        normalize_pi(alpha + std::f64::consts::PI),
        -beta,
        normalize_pi(gamma + std::f64::consts::PI),
        limits,
        Branch::Mirror,
        &mut out,
    );
    out
}
