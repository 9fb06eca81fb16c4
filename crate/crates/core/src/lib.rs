//! Caregiving-scenario workbench: building blocks, structured workflows,
//! bite-transfer planning and bite-sequencing models.

pub mod blocks;
pub mod canonical;
pub mod harness;
pub mod hmm;
pub mod transfer;
pub mod workflow;

pub use blocks::{
    head_pose_manifold, parse_building_blocks, AngleRange, AttributeValue, BlockError, BlockKind, BuildingBlock,
    BuildingBlockSet, HeadPoseManifold, Quantity, Unit,
};
pub use canonical::to_canonical_string;
pub use transfer::{HeadPose, PlanResult, Policy, TransferError, TransferScenario};
pub use workflow::{parse_workflow, validate_hierarchy, Blackboard, Workflow, WorkflowError, WorkflowNode};
