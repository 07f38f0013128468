//! Kinematic models of the follower ring robot and the leader haptic device.

pub mod hc;
pub mod model;
pub mod rsr;

use thiserror::Error;

pub use hc::{
    delta_forward_kinematics, hc_delta_inverse_kinematics, hc_inverse_kinematics, hc_wrist_angles, hc_wrist_rotation,
    HcGeometry, HcJointState, WristOrder,
};
pub use model::{validate_model, Joint, JointKind, KinematicModel, Link, Mechanism, ModelDiagnostics};
pub use rsr::{
    rsr_forward_kinematics, rsr_inverse_kinematics, rsr_joint_sensitivity, FkSolution, RsrGeometry, RsrJointState,
};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("arm {arm}: actuator length {length:.6} m outside [{min}, {max}]")]
    Unreachable { arm: usize, length: f64, min: f64, max: f64 },
    #[error("arm {arm}: no real solution for the requested position")]
    NoSolution { arm: usize },
    #[error("arm {arm}: leg is parallel to the rotary axis, angle undefined")]
    Singular { arm: usize },
    #[error("forward kinematics did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("forward kinematics near a singular configuration (condition number {condition:e})")]
    AmbiguousBranch { condition: f64 },
    #[error("invalid geometry: {0}")]
    Geometry(String),
}

impl KinematicsError {
    pub fn is_unreachable(&self) -> bool {
        matches!(self, KinematicsError::Unreachable { .. } | KinematicsError::NoSolution { .. })
    }
}
