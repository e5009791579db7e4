//! Online numerical IK: damped-least-squares iteration over an active joint
//! set from a given seed, plus trajectory solving where each step seeds the
//! next.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::chain::KinematicChain;
use crate::error::{Error, Result};
use crate::jacobian::geometric_jacobian;
use crate::pose::{rotation_log, Pose};

/// Step norms below this mark the iteration as stalled.
const STALL_EPS: f64 = 1e-12;
const LAMBDA_MIN: f64 = 1e-9;
const LAMBDA_MAX: f64 = 1e3;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    /// Position residual bound (meters).
    pub position: f64,
    /// Orientation residual bound (radians, rotation-log norm).
    pub orientation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            position: 1e-4,
            orientation: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IkRequest<'a> {
    pub chain: &'a KinematicChain,
    /// Movable indices the solver may move.
    pub active: Vec<usize>,
    /// Full joint state to start from; inactive joints stay put.
    pub seed: Vec<f64>,
    /// Link whose pose is driven to `target`.
    pub frame: String,
    pub target: Pose,
    pub tolerances: Tolerances,
    pub max_iterations: usize,
    /// Initial damping λ₀.
    pub damping: f64,
    /// Position/orientation weight: orientation error rows are divided by
    /// it, matching the goodness convention.
    pub orientation_weight: f64,
}

impl<'a> IkRequest<'a> {
    pub fn new(
        chain: &'a KinematicChain,
        active: Vec<usize>,
        seed: Vec<f64>,
        frame: &str,
        target: Pose,
    ) -> Self {
        Self {
            chain,
            active,
            seed,
            frame: frame.to_string(),
            target,
            tolerances: Tolerances::default(),
            max_iterations: 200,
            damping: 1e-3,
            orientation_weight: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.active.is_empty() {
            return Err(Error::EmptyActiveSet);
        }
        if self.seed.len() != self.chain.movable_count() {
            return Err(Error::LengthMismatch {
                expected: self.chain.movable_count(),
                got: self.seed.len(),
            });
        }
        if !(self.tolerances.position > 0.0) || !(self.tolerances.orientation > 0.0) {
            return Err(Error::IkInvalid("tolerances must be > 0".into()));
        }
        if !(self.damping > 0.0) {
            return Err(Error::IkInvalid("damping must be > 0".into()));
        }
        if !(self.orientation_weight > 0.0) {
            return Err(Error::IkInvalid("orientation weight must be > 0".into()));
        }
        for &m in &self.active {
            if m >= self.chain.movable_count() {
                return Err(Error::UnknownJoint(format!("movable index {m}")));
            }
            let [lo, hi] = self.chain.movable_joint(m).limits;
            if self.seed[m] < lo || self.seed[m] > hi {
                return Err(Error::IkInvalid(format!(
                    "seed value {} of `{}` violates limits [{lo}, {hi}]",
                    self.seed[m],
                    self.chain.movable_joint(m).name
                )));
            }
        }
        if !self.chain.has_link(&self.frame) {
            return Err(Error::UnknownFrame(self.frame.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IkStatus {
    Success,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Residual {
    pub position: f64,
    pub orientation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IkOutcome {
    pub status: IkStatus,
    /// Full joint state (inactive joints unchanged from the seed).
    pub solution: Vec<f64>,
    pub residual: Residual,
    pub iterations: usize,
}

impl IkOutcome {
    pub fn is_success(&self) -> bool {
        self.status == IkStatus::Success
    }
}

/// Task-space error `target ⊖ current`: position delta stacked on the
/// rotation log of the orientation mismatch, orientation rows divided by
/// the weight.
fn task_error(current: &Pose, target: &Pose, w: f64) -> (Vector6<f64>, f64, f64) {
    let dp: Vector3<f64> = target.translation - current.translation;
    let dr = rotation_log(&(target.rotation * current.rotation.transpose()));
    let mut e = Vector6::zeros();
    for i in 0..3 {
        e[i] = dp[i];
        e[i + 3] = dr[i] / w;
    }
    (e, dp.norm(), dr.norm())
}

/// Damped-least-squares IK.
///
/// Iterates `Δq = J̃ᵀ (J̃J̃ᵀ + λI)⁻¹ e` with orientation-weighted `J̃` and
/// `e`, clamping the active joints to their limits every step. λ shrinks
/// (÷10) after a step that reduced the residual and grows (×10, step
/// rejected) after one that increased it, within `[1e-9, 1e3]`.
pub fn solve(request: &IkRequest) -> Result<IkOutcome> {
    request.validate()?;
    let chain = request.chain;
    let w = request.orientation_weight;
    let mut q = request.seed.clone();
    let mut lambda = request.damping;

    let fk = |q: &[f64]| chain.forward_kinematics(q, &request.frame);
    let start = fk(&q)?;
    let (mut err, mut pos_res, mut rot_res) = task_error(&start, &request.target, w);

    let done = |p: f64, r: f64| p <= request.tolerances.position && r <= request.tolerances.orientation;

    let mut iterations = 0;
    let mut status = IkStatus::MaxIterations;
    if done(pos_res, rot_res) {
        status = IkStatus::Success;
    } else {
        'outer: while iterations < request.max_iterations {
            iterations += 1;

            let mut jac = geometric_jacobian(chain, &q, &request.frame, &request.active)?;
            for c in 0..jac.ncols() {
                for r in 3..6 {
                    jac[(r, c)] /= w;
                }
            }
            let jjt = &jac * jac.transpose();

            // One iteration: retry with growing λ until the step reduces
            // the residual (or damping is exhausted).
            loop {
                // (J̃J̃ᵀ + λI) y = e, Δq = J̃ᵀ y.
                let damped = &jjt + DMatrix::identity(6, 6) * lambda;
                let Some(chol) = damped.cholesky() else {
                    // λI keeps this SPD for λ > 0; failure means numbers
                    // went bad.
                    status = IkStatus::Stalled;
                    break 'outer;
                };
                let y = chol.solve(&DVector::from_column_slice(err.as_slice()));
                let dq = jac.transpose() * y;

                if dq.norm() < STALL_EPS {
                    status = IkStatus::Stalled;
                    break 'outer;
                }

                let mut candidate = q.clone();
                for (k, &m) in request.active.iter().enumerate() {
                    candidate[m] = chain.movable_joint(m).clamp(candidate[m] + dq[k]);
                }
                let cand_pose = fk(&candidate)?;
                let (cand_err, cand_pos, cand_rot) = task_error(&cand_pose, &request.target, w);

                if cand_err.norm() < err.norm() {
                    q = candidate;
                    err = cand_err;
                    pos_res = cand_pos;
                    rot_res = cand_rot;
                    lambda = (lambda / 10.0).max(LAMBDA_MIN);
                    if done(pos_res, rot_res) {
                        status = IkStatus::Success;
                        break 'outer;
                    }
                    break;
                }
                if lambda >= LAMBDA_MAX {
                    // Cannot damp further; the iteration is pinned.
                    status = IkStatus::Stalled;
                    break 'outer;
                }
                lambda = (lambda * 10.0).min(LAMBDA_MAX);
            }
        }
    }
    Ok(IkOutcome {
        status,
        solution: q,
        residual: Residual {
            position: pos_res,
            orientation: rot_res,
        },
        iterations,
    })
}

/// Solves a trajectory: step `k` seeds from `seeds[k]` when present, else
/// from step `k−1`'s solution. Aborts at the first failure, returning the
/// outcomes up to and including the failed step.
pub fn solve_trajectory(
    chain: &KinematicChain,
    active: &[usize],
    seeds: &BTreeMap<usize, Vec<f64>>,
    targets: &[Pose],
    frame: &str,
    tolerances: Tolerances,
    max_iterations: usize,
) -> Result<Vec<IkOutcome>> {
    if !seeds.contains_key(&0) {
        return Err(Error::IkInvalid("trajectory needs a seed for step 0".into()));
    }
    let mut outcomes = Vec::with_capacity(targets.len());
    let mut state: Option<Vec<f64>> = None;
    for (step, target) in targets.iter().enumerate() {
        let seed = match seeds.get(&step) {
            Some(s) => s.clone(),
            None => state.clone().expect("previous step succeeded"),
        };
        let mut request = IkRequest::new(chain, active.to_vec(), seed, frame, *target);
        request.tolerances = tolerances;
        request.max_iterations = max_iterations;
        let outcome = solve(&request)?;
        let ok = outcome.is_success();
        state = Some(outcome.solution.clone());
        outcomes.push(outcome);
        if !ok {
            break;
        }
    }
    Ok(outcomes)
}
