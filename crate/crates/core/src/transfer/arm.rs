//! Serial revolute chains with capsule collision geometry.

use nalgebra::{DVector, Isometry3, Matrix6xX, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::TransferError;

/// One revolute joint: a fixed transform from the previous joint frame, then a
/// rotation about the local z axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub origin_xyz: [f64; 3],
    pub origin_rpy: [f64; 3],
    pub lower: f64,
    pub upper: f64,
    /// Radius of the capsule from this joint to the next frame.
    pub link_radius: f64,
}

/// Gripper and fork, both along the flange z axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub gripper_length: f64,
    pub gripper_radius: f64,
    pub fork_length: f64,
    pub fork_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub name: String,
    pub base_xyz: [f64; 3],
    pub base_rpy: [f64; 3],
    pub joints: Vec<JointSpec>,
    pub flange_xyz: [f64; 3],
    pub flange_rpy: [f64; 3],
    pub tool: ToolSpec,
    /// Resting configuration the planner starts from.
    pub home: Vec<f64>,
}

fn isometry(xyz: [f64; 3], rpy: [f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(xyz[0], xyz[1], xyz[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
    pub radius: f64,
    /// Fork segment; may touch obstacles marked as tool contact.
    pub is_fork: bool,
}

#[derive(Debug, Clone)]
pub struct ArmModel {
    spec: ArmSpec,
    base: Isometry3<f64>,
    origins: Vec<Isometry3<f64>>,
    flange: Isometry3<f64>,
    tool_tip: Isometry3<f64>,
    /// Upper bound on the distance from joint i's axis to any point on the
    /// arm beyond it.
    reach_beyond: Vec<f64>,
}

impl ArmModel {
    pub fn new(spec: ArmSpec) -> Result<Self, TransferError> {
        if spec.joints.len() < 3 {
            return Err(TransferError::Config(format!("arm `{}` needs at least 3 joints", spec.name)));
        }
        for j in &spec.joints {
            if j.lower >= j.upper || !j.lower.is_finite() || !j.upper.is_finite() {
                return Err(TransferError::Config(format!("joint `{}` has invalid limits", j.name)));
            }
            if j.link_radius < 0.0 {
                return Err(TransferError::Config(format!("joint `{}` has negative radius", j.name)));
            }
        }
        let t = &spec.tool;
        if t.gripper_length < 0.0 || t.fork_length < 0.0 || t.gripper_radius < 0.0 || t.fork_radius < 0.0 {
            return Err(TransferError::Config("tool dimensions must be nonnegative".into()));
        }
        if spec.home.len() != spec.joints.len() {
            return Err(TransferError::Config(format!("arm `{}` home has wrong length", spec.name)));
        }
        let base = isometry(spec.base_xyz, spec.base_rpy);
        let origins: Vec<_> = spec.joints.iter().map(|j| isometry(j.origin_xyz, j.origin_rpy)).collect();
        let flange = isometry(spec.flange_xyz, spec.flange_rpy);
        let tool_tip = Isometry3::translation(0.0, 0.0, t.gripper_length + t.fork_length);

        let n = origins.len();
        let mut reach_beyond = vec![0.0; n];
        let mut tail =
            flange.translation.vector.norm() + t.gripper_length + t.fork_length + t.gripper_radius.max(t.fork_radius);
        for i in (0..n).rev() {
            let radius = spec.joints[i].link_radius;
            reach_beyond[i] = tail + radius;
            tail += origins[i].translation.vector.norm();
        }
        let model = Self { spec, base, origins, flange, tool_tip, reach_beyond };
        if !model.within_limits(&model.spec.home) {
            return Err(TransferError::Config(format!("arm `{}` home violates joint limits", model.spec.name)));
        }
        Ok(model)
    }

    pub fn spec(&self) -> &ArmSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn dof(&self) -> usize {
        self.origins.len()
    }

    pub fn home(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.spec.home)
    }

    pub fn limits(&self, i: usize) -> (f64, f64) {
        (self.spec.joints[i].lower, self.spec.joints[i].upper)
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof() && q.iter().zip(&self.spec.joints).all(|(v, j)| *v >= j.lower && *v <= j.upper)
    }

    pub fn clamp(&self, q: &mut DVector<f64>) {
        for (v, j) in q.iter_mut().zip(&self.spec.joints) {
            *v = v.clamp(j.lower, j.upper);
        }
    }

    pub fn reach_beyond(&self) -> &[f64] {
        &self.reach_beyond
    }

    /// World frames of every joint after its rotation, then the flange.
    pub fn joint_frames(&self, q: &[f64]) -> Vec<Isometry3<f64>> {
        debug_assert_eq!(q.len(), self.dof());
        let mut frames = Vec::with_capacity(self.dof() + 1);
        let mut current = self.base;
        for (origin, angle) in self.origins.iter().zip(q) {
            current = current * origin * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), *angle);
            frames.push(current);
        }
        frames.push(current * self.flange);
        frames
    }

    /// Fork-tip pose.
    pub fn forward_kinematics(&self, q: &[f64]) -> Isometry3<f64> {
        let frames = self.joint_frames(q);
        frames[self.dof()] * self.tool_tip
    }

    /// Geometric Jacobian of the fork tip: rows are linear then angular
    /// velocity, world frame.
    pub fn jacobian(&self, q: &[f64]) -> (Isometry3<f64>, Matrix6xX<f64>) {
        let frames = self.joint_frames(q);
        let tip = frames[self.dof()] * self.tool_tip;
        let p = tip.translation.vector;
        let mut j = Matrix6xX::zeros(self.dof());
        for (i, f) in frames[..self.dof()].iter().enumerate() {
            let axis = f.rotation * Vector3::z();
            let lin = axis.cross(&(p - f.translation.vector));
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, i).copy_from(&axis);
        }
        (tip, j)
    }

    /// Link capsules from the first joint outward, then gripper and fork.
    pub fn capsules(&self, q: &[f64]) -> Vec<Capsule> {
        let frames = self.joint_frames(q);
        let n = self.dof();
        let mut out = Vec::with_capacity(n + 2);
        for i in 0..n {
            out.push(Capsule {
                a: Point3::from(frames[i].translation.vector),
                b: Point3::from(frames[i + 1].translation.vector),
                radius: self.spec.joints[i].link_radius,
                is_fork: false,
            });
        }
        let flange = frames[n];
        let t = &self.spec.tool;
        let grip_end = flange * Point3::new(0.0, 0.0, t.gripper_length);
        let tip = flange * Point3::new(0.0, 0.0, t.gripper_length + t.fork_length);
        out.push(Capsule {
            a: Point3::from(flange.translation.vector),
            b: grip_end,
            radius: t.gripper_radius,
            is_fork: false,
        });
        out.push(Capsule { a: grip_end, b: tip, radius: t.fork_radius, is_fork: true });
        out
    }
}

const GEN3_6DOF: &str = include_str!("../../assets/arms/gen3_6dof.json");
const GEN3_7DOF: &str = include_str!("../../assets/arms/gen3_7dof.json");

/// Names accepted by [`ArmModel::preset`].
pub const ARM_PRESETS: [&str; 2] = ["gen3_6dof", "gen3_7dof"];

impl ArmModel {
    pub fn preset(name: &str) -> Result<Self, TransferError> {
        let text = match name {
            "gen3_6dof" => GEN3_6DOF,
            "gen3_7dof" => GEN3_7DOF,
            other => return Err(TransferError::Config(format!("unknown arm preset `{other}`"))),
        };
        let spec: ArmSpec = serde_json::from_str(text).map_err(|e| TransferError::Config(e.to_string()))?;
        Self::new(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load() {
        for name in ARM_PRESETS {
            let arm = ArmModel::preset(name).unwrap();
            assert!(arm.dof() >= 6);
            assert_eq!(arm.capsules(&arm.spec.home).len(), arm.dof() + 2);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let arm = ArmModel::preset("gen3_7dof").unwrap();
        let q = vec![0.3, -0.4, 0.2, 1.1, -0.5, 0.7, 0.1];
        let (tip, j) = arm.jacobian(&q);
        let h = 1e-6;
        for i in 0..q.len() {
            let mut qp = q.clone();
            qp[i] += h;
            let moved = arm.forward_kinematics(&qp);
            let dp = (moved.translation.vector - tip.translation.vector) / h;
            assert!((dp - j.fixed_view::<3, 1>(0, i)).norm() < 1e-5, "joint {i}");
            let dr = (moved.rotation * tip.rotation.inverse()).scaled_axis() / h;
            assert!((dr - j.fixed_view::<3, 1>(3, i)).norm() < 1e-5, "joint {i}");
        }
    }

    #[test]
    fn rejects_short_chains() {
        let mut spec: ArmSpec = serde_json::from_str(GEN3_6DOF).unwrap();
        spec.joints.truncate(2);
        spec.home.truncate(2);
        assert!(ArmModel::new(spec).is_err());
    }
}
