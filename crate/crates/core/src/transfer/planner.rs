//! Joint-space trajectory search: straight line to an IK solution, falling
//! back to a goal-biased sampling tree.

use nalgebra::{DVector, Isometry3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arm::ArmModel;
use super::collision::SceneObstacles;
use super::ik::{inverse_kinematics_where, IkParams};
use super::TransferError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub ik: IkParams,
    /// Every check keeps this clearance, meters.
    pub collision_margin: f64,
    /// Largest per-joint change between consecutive collision checks, radians.
    pub check_resolution: f64,
    pub tree_step: f64,
    pub goal_bias: f64,
    pub max_iterations: usize,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            ik: IkParams::default(),
            collision_margin: 0.005,
            check_resolution: 0.02,
            tree_step: 0.1,
            goal_bias: 0.2,
            max_iterations: 5000,
        }
    }
}

pub type Trajectory = Vec<DVector<f64>>;

/// Checks the open segment `(a, b]`. The number of checks bounds how far any
/// point of the arm can travel between two of them by twice the margin, so a
/// clear result implies clearance everywhere along the segment.
pub fn motion_is_clear(
    arm: &ArmModel,
    obstacles: &SceneObstacles,
    a: &DVector<f64>,
    b: &DVector<f64>,
    params: &PlannerParams,
) -> bool {
    let delta = b - a;
    let sweep: f64 = delta.iter().zip(arm.reach_beyond()).map(|(d, r)| d.abs() * r).sum();
    let by_resolution = (delta.amax() / params.check_resolution).ceil();
    let by_sweep = (sweep / (2.0 * params.collision_margin)).ceil();
    let n = by_resolution.max(by_sweep).max(1.0) as usize;
    let mut q = a.clone();
    (1..=n).all(|k| {
        q.copy_from(a);
        q.axpy(k as f64 / n as f64, &delta, 1.0);
        obstacles.is_clear(arm, q.as_slice(), params.collision_margin)
    })
}

pub fn plan_trajectory(
    arm: &ArmModel,
    q_start: &DVector<f64>,
    goal: &Isometry3<f64>,
    obstacles: &SceneObstacles,
    params: &PlannerParams,
    seed: u64,
) -> Result<Trajectory, TransferError> {
    if !obstacles.is_clear(arm, q_start.as_slice(), params.collision_margin) {
        return Err(TransferError::StartInCollision);
    }
    let q_goal = inverse_kinematics_where(arm, goal, q_start, &params.ik, seed, |q| {
        obstacles.is_clear(arm, q, params.collision_margin)
    })?;
    if motion_is_clear(arm, obstacles, q_start, &q_goal, params) {
        return Ok(vec![q_start.clone(), q_goal]);
    }
    grow_tree(arm, q_start, &q_goal, obstacles, params, seed ^ 0x9e37_79b9_7f4a_7c15)
}

fn grow_tree(
    arm: &ArmModel,
    q_start: &DVector<f64>,
    q_goal: &DVector<f64>,
    obstacles: &SceneObstacles,
    params: &PlannerParams,
    seed: u64,
) -> Result<Trajectory, TransferError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![q_start.clone()];
    let mut parents = vec![usize::MAX];
    for _ in 0..params.max_iterations {
        let target = if rng.random::<f64>() < params.goal_bias {
            q_goal.clone()
        } else {
            DVector::from_fn(arm.dof(), |i, _| {
                let (lo, hi) = arm.limits(i);
                rng.random_range(lo..=hi)
            })
        };
        let nearest = (0..nodes.len())
            .min_by(|&i, &j| (&nodes[i] - &target).norm_squared().total_cmp(&(&nodes[j] - &target).norm_squared()))
            .expect("tree is never empty");
        let direction = &target - &nodes[nearest];
        let distance = direction.norm();
        if distance == 0.0 {
            continue;
        }
        let new = if distance > params.tree_step {
            &nodes[nearest] + direction * (params.tree_step / distance)
        } else {
            target
        };
        if !motion_is_clear(arm, obstacles, &nodes[nearest], &new, params) {
            continue;
        }
        nodes.push(new);
        parents.push(nearest);
        let last = nodes.len() - 1;
        if (&nodes[last] - q_goal).norm() <= params.tree_step
            && motion_is_clear(arm, obstacles, &nodes[last], q_goal, params)
        {
            let mut path = vec![q_goal.clone()];
            if nodes[last] != *q_goal {
                path.push(nodes[last].clone());
            }
            let mut i = parents[last];
            while i != usize::MAX {
                path.push(nodes[i].clone());
                i = parents[i];
            }
            path.reverse();
            return Ok(shortcut(arm, obstacles, path, params));
        }
    }
    Err(TransferError::PlanFailure)
}

/// Greedy pass joining each waypoint to the farthest later one it can see.
fn shortcut(arm: &ArmModel, obstacles: &SceneObstacles, path: Trajectory, params: &PlannerParams) -> Trajectory {
    let mut out = vec![path[0].clone()];
    let mut i = 0;
    while i + 1 < path.len() {
        let mut j = path.len() - 1;
        while j > i + 1 && !motion_is_clear(arm, obstacles, &path[i], &path[j], params) {
            j -= 1;
        }
        out.push(path[j].clone());
        i = j;
    }
    out
}
