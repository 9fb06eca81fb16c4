//! Damped least-squares inverse kinematics with seeded restarts.

use nalgebra::{DVector, Isometry3, Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arm::ArmModel;
use super::TransferError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkParams {
    /// Meters.
    pub position_tol: f64,
    /// Radians.
    pub orientation_tol: f64,
    pub max_iter: usize,
    /// Extra attempts after the one started at `q_init`.
    pub restarts: usize,
    pub damping: f64,
    /// Largest joint change per iteration, radians.
    pub max_step: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self { position_tol: 0.005, orientation_tol: 0.05, max_iter: 150, restarts: 20, damping: 0.02, max_step: 0.3 }
    }
}

/// Position error (m) and geodesic orientation error (rad) between two poses.
pub fn pose_error(actual: &Isometry3<f64>, goal: &Isometry3<f64>) -> (f64, f64) {
    let dp = (goal.translation.vector - actual.translation.vector).norm();
    (dp, actual.rotation.angle_to(&goal.rotation))
}

pub fn within_tolerance(arm: &ArmModel, q: &[f64], goal: &Isometry3<f64>, params: &IkParams) -> bool {
    let (dp, dr) = pose_error(&arm.forward_kinematics(q), goal);
    dp <= params.position_tol && dr <= params.orientation_tol && arm.within_limits(q)
}

/// Solves for a configuration reaching `goal`; see [`inverse_kinematics_where`].
pub fn inverse_kinematics(
    arm: &ArmModel,
    goal: &Isometry3<f64>,
    q_init: &DVector<f64>,
    params: &IkParams,
    seed: u64,
) -> Result<DVector<f64>, TransferError> {
    inverse_kinematics_where(arm, goal, q_init, params, seed, |_| true)
}

/// Like [`inverse_kinematics`], discarding converged solutions `accept`
/// rejects. Attempt 0 starts at `q_init`; attempt k perturbs it uniformly by up
/// to `0.3 + 2.7·k/restarts` radians per joint.
pub fn inverse_kinematics_where(
    arm: &ArmModel,
    goal: &Isometry3<f64>,
    q_init: &DVector<f64>,
    params: &IkParams,
    seed: u64,
    accept: impl Fn(&[f64]) -> bool,
) -> Result<DVector<f64>, TransferError> {
    if !(params.position_tol > 0.0 && params.orientation_tol > 0.0) {
        return Err(TransferError::Config("IK tolerances must be positive".into()));
    }
    let base = arm.joint_frames(&arm.spec().home)[0].translation.vector;
    let reach = arm.reach_beyond()[0] + params.position_tol;
    if (goal.translation.vector - base).norm() > reach {
        return Err(TransferError::IkFailure);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..=params.restarts {
        let mut q = q_init.clone();
        if attempt > 0 {
            let scale = 0.3 + 2.7 * attempt as f64 / params.restarts.max(1) as f64;
            for v in q.iter_mut() {
                *v += rng.random_range(-scale..=scale);
            }
        }
        arm.clamp(&mut q);
        if let Some(solution) = descend(arm, goal, q, params) {
            if accept(solution.as_slice()) {
                return Ok(solution);
            }
        }
    }
    Err(TransferError::IkFailure)
}

fn descend(arm: &ArmModel, goal: &Isometry3<f64>, mut q: DVector<f64>, params: &IkParams) -> Option<DVector<f64>> {
    let lambda2 = params.damping * params.damping;
    for _ in 0..params.max_iter {
        let (tip, j) = arm.jacobian(q.as_slice());
        let dp = goal.translation.vector - tip.translation.vector;
        let dr = (goal.rotation * tip.rotation.inverse()).scaled_axis();
        if dp.norm() <= params.position_tol * 0.1 && dr.norm() <= params.orientation_tol * 0.1 {
            break;
        }
        let e = Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z);
        let jjt: Matrix6<f64> = &j * j.transpose() + Matrix6::identity() * lambda2;
        let y = jjt.cholesky()?.solve(&e);
        let mut dq = j.transpose() * y;
        let largest = dq.amax();
        if largest > params.max_step {
            dq *= params.max_step / largest;
        }
        q += dq;
        arm.clamp(&mut q);
    }
    within_tolerance(arm, q.as_slice(), goal, params).then_some(q)
}
