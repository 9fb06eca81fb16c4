//! Head poses and the frames derived from them.
//!
//! Head-local frame: x toward the user's left, y along the facing direction
//! (mouth normal), z down. Positive flexion tips the chin down, positive
//! rotation turns the face right, positive lateral flexion tilts the head
//! toward the right shoulder. In the world frame (z up) the user faces +x.

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub flexion: f64,
    pub rotation: f64,
    pub lateral: f64,
}

impl HeadPose {
    pub const fn new(flexion: f64, rotation: f64, lateral: f64) -> Self {
        Self { flexion, rotation, lateral }
    }

    pub const fn neutral() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn from_degrees(flexion: f64, rotation: f64, lateral: f64) -> Self {
        Self::new(flexion.to_radians(), rotation.to_radians(), lateral.to_radians())
    }

    pub fn is_finite(&self) -> bool {
        self.flexion.is_finite() && self.rotation.is_finite() && self.lateral.is_finite()
    }

    /// Rz(rotation) · Ry(lateral) · Rx(flexion), relative to the neutral head.
    pub fn orientation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_euler_angles(self.flexion, self.lateral, self.rotation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.orientation().to_rotation_matrix().into_inner()
    }

    /// Bit pattern of the three angles; equal poses give equal keys.
    pub fn key(&self) -> [u64; 3] {
        [self.flexion.to_bits(), self.rotation.to_bits(), self.lateral.to_bits()]
    }
}

/// Geodesic distance between the two head orientations, in `[0, π]`.
pub fn relative_angle(a: &HeadPose, b: &HeadPose) -> f64 {
    let d = a.orientation().inverse() * b.orientation();
    2.0 * d.imag().norm().atan2(d.w.abs())
}

/// Where the head sits in the world and where the mouth sits on the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadGeometry {
    /// Center of neck rotation, world frame, meters.
    pub pivot: [f64; 3],
    /// Pivot to mouth, head-local frame, meters.
    pub mouth_offset: [f64; 3],
}

impl HeadGeometry {
    /// Maps head-local axes (left, forward, down) onto world axes for a user
    /// facing +x.
    pub fn neutral_orientation() -> UnitQuaternion<f64> {
        let m = Matrix3::from_columns(&[Vector3::y(), Vector3::x(), -Vector3::z()]);
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
    }

    pub fn head_frame(&self, pose: &HeadPose) -> Isometry3<f64> {
        let rotation = Self::neutral_orientation() * pose.orientation();
        Isometry3::from_parts(Translation3::from(Vector3::from(self.pivot)), rotation)
    }

    /// Mouth frame: head orientation, origin at the mouth. Its y axis is the
    /// outward mouth normal.
    pub fn mouth_frame(&self, pose: &HeadPose) -> Isometry3<f64> {
        self.head_frame(pose) * Translation3::from(Vector3::from(self.mouth_offset))
    }
}

/// Mouth frame to fork tip: `standoff` meters out along the mouth normal, tool
/// z axis pointing back into the mouth. Negative standoff places the tip inside
/// the mouth cavity.
pub fn transfer_transform(standoff: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(0.0, standoff, 0.0),
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::FRAC_PI_2),
    )
}

/// End-effector goal for a candidate head pose.
pub fn goal_pose(head: &HeadGeometry, candidate: &HeadPose, transfer: &Isometry3<f64>) -> Isometry3<f64> {
    head.mouth_frame(candidate) * transfer
}
