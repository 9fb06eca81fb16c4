//! Bite-transfer planning over head-pose manifolds.

mod arm;
mod collision;
mod ik;
mod planner;
mod policy;
mod pose;

use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arm::{ArmModel, ArmSpec, Capsule, JointSpec, ToolSpec, ARM_PRESETS};
pub use collision::{Obstacle, SceneObstacles};
pub use ik::{inverse_kinematics, inverse_kinematics_where, pose_error, within_tolerance, IkParams};
pub use planner::{motion_is_clear, plan_trajectory, PlannerParams, Trajectory};
pub use policy::{
    evaluate_policies, is_valid_success, mean_sd, mix_seed, policy_baseline, policy_fixed, policy_muf_informed,
    sample_candidates, user_test_poses, Evaluation, PlanResult, Policy, PolicyMetrics, PoseOutcome, TransferSession,
    METRICS_HEADER,
};
pub use pose::{goal_pose, relative_angle, transfer_transform, HeadGeometry, HeadPose};

use crate::blocks::HeadPoseManifold;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransferError {
    #[error("invalid planner configuration: {0}")]
    Config(String),
    #[error("head pose {0:?} lies outside the manifold")]
    PoseOutsideManifold(HeadPose),
    #[error("inverse kinematics found no solution")]
    IkFailure,
    #[error("start configuration is in collision")]
    StartInCollision,
    #[error("no collision-free trajectory found")]
    PlanFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArmChoice {
    Preset(String),
    Custom(ArmSpec),
}

fn default_candidates() -> usize {
    64
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

/// Planner configuration document shipped with each feeding scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub arm: ArmChoice,
    pub head: HeadGeometry,
    /// Meters beyond the mouth along its normal; negative is inside the mouth.
    pub standoff: f64,
    pub h_fixed: HeadPose,
    pub obstacles: SceneObstacles,
    #[serde(default = "default_candidates")]
    pub n_candidates: usize,
    #[serde(default)]
    pub planner: PlannerParams,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Overrides the shipped full-mobility manifold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_mobility: Option<HeadPoseManifold>,
}

impl PlannerConfig {
    pub fn parse(document: &str) -> Result<Self, TransferError> {
        serde_json::from_str(document).map_err(|e| TransferError::Config(e.to_string()))
    }

    pub fn to_canonical(&self) -> String {
        crate::canonical::to_canonical_string(self)
    }
}

/// Everything a policy needs: arm, scene, head, and both manifolds.
#[derive(Debug, Clone)]
pub struct TransferScenario {
    pub arm: ArmModel,
    pub obstacles: SceneObstacles,
    pub head: HeadGeometry,
    pub transfer: Isometry3<f64>,
    pub h_fixed: HeadPose,
    pub user_manifold: HeadPoseManifold,
    pub full_manifold: HeadPoseManifold,
    pub params: PlannerParams,
    pub n_candidates: usize,
}

impl TransferScenario {
    pub fn from_config(config: &PlannerConfig, user_manifold: HeadPoseManifold) -> Result<Self, TransferError> {
        let arm = match &config.arm {
            ArmChoice::Preset(name) => ArmModel::preset(name)?,
            ArmChoice::Custom(spec) => ArmModel::new(spec.clone())?,
        };
        if let Some(bad) = config.obstacles.iter().find(|o| !o.is_valid()) {
            return Err(TransferError::Config(format!("obstacle `{}` has invalid extents", bad.name())));
        }
        if !config.h_fixed.is_finite() || !user_manifold.contains(&config.h_fixed) {
            return Err(TransferError::PoseOutsideManifold(config.h_fixed));
        }
        let p = &config.planner;
        if !(p.collision_margin > 0.0 && p.check_resolution > 0.0 && p.check_resolution <= 0.02 && p.tree_step > 0.0)
            || !(0.0..=1.0).contains(&p.goal_bias)
        {
            return Err(TransferError::Config("planner parameters out of range".into()));
        }
        Ok(Self {
            arm,
            obstacles: config.obstacles.clone(),
            head: config.head.clone(),
            transfer: transfer_transform(config.standoff),
            h_fixed: config.h_fixed,
            user_manifold,
            full_manifold: config.full_mobility.unwrap_or_else(HeadPoseManifold::full_mobility),
            params: config.planner,
            n_candidates: config.n_candidates,
        })
    }

    /// Same scene with another arm.
    pub fn with_arm(&self, arm: ArmModel) -> Self {
        Self { arm, ..self.clone() }
    }
}
