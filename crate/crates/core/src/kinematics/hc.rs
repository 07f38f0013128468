//! Leader device: a rotary delta stage for translation plus a three-joint
//! serial wrist for orientation.
//!
//! Delta frame: base plane at `z = 0`, effector below it. Arm `i` sits at
//! azimuth `120 deg * i`; its shoulder angle is positive when the upper arm
//! tilts downward. The device pose reported to teleoperation is relative to
//! `workspace_center`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::KinematicsError;
use crate::geom::{euler_to_rotation, rotation_to_euler_flagged, EulerAngles, Pose, Rotation, Vec3};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WristOrder {
    /// Joints F, G, H carry alpha, beta, gamma.
    #[default]
    Xyz,
    /// Joints F, G, H carry gamma, beta, alpha.
    Zyx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HcGeometry {
    pub base_radius: f64,
    pub effector_radius: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    /// Delta-frame effector position that corresponds to the device origin.
    pub workspace_center: Vec3,
    #[serde(default)]
    pub wrist_order: WristOrder,
}

impl Default for HcGeometry {
    fn default() -> Self {
        Self {
            base_radius: 0.08,
            effector_radius: 0.03,
            upper_arm: 0.1,
            forearm: 0.2,
            workspace_center: Vec3::new(0.0, 0.0, -0.17),
            wrist_order: WristOrder::Xyz,
        }
    }
}

impl HcGeometry {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let lengths = [self.base_radius, self.effector_radius, self.upper_arm, self.forearm];
        if lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(KinematicsError::Geometry("delta lengths must be positive".into()));
        }
        hc_delta_inverse_kinematics(&Vec3::zeros(), self)
            .map(|_| ())
            .map_err(|_| KinematicsError::Geometry("delta workspace center is unreachable".into()))
    }

    fn arm_azimuth(i: usize) -> f64 {
        2.0 * PI * i as f64 / 3.0
    }

    fn radial(i: usize) -> Vec3 {
        let a = Self::arm_azimuth(i);
        Vec3::new(a.cos(), a.sin(), 0.0)
    }

    /// Elbow position of arm `i` in the delta frame.
    pub fn elbow(&self, i: usize, theta: f64) -> Vec3 {
        Self::radial(i) * (self.base_radius + self.upper_arm * theta.cos()) - Vec3::z() * (self.upper_arm * theta.sin())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HcJointState {
    /// Three delta shoulders then three wrist joints, rad.
    pub theta: [f64; 6],
    /// Grasp pass-through in `[0, 1]`.
    pub grip: f64,
}

/// Shoulder angles placing the effector at `position` (device frame),
/// elbow-out branch.
pub fn hc_delta_inverse_kinematics(position: &Vec3, geom: &HcGeometry) -> Result<[f64; 3], KinematicsError> {
    let p = position + geom.workspace_center;
    let mut out = [0.0; 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let az = HcGeometry::arm_azimuth(i);
        let (s, c) = az.sin_cos();
        // Effector joint in the arm's vertical plane.
        let x = p.x * c + p.y * s + geom.effector_radius;
        let y = -p.x * s + p.y * c;
        let z = p.z;
        let a = geom.base_radius - x;
        let rho = a.hypot(z);
        let k = (geom.forearm.powi(2) - y * y - a * a - z * z - geom.upper_arm.powi(2)) / (2.0 * geom.upper_arm);
        if !(rho > 0.0) || (k / rho).abs() > 1.0 || !k.is_finite() {
            return Err(KinematicsError::NoSolution { arm: i });
        }
        let psi = z.atan2(a);
        let spread = (k / rho).acos();
        let (t1, t2) = (psi + spread, psi - spread);
        let theta = if t1.cos() >= t2.cos() { t1 } else { t2 };
        *slot = crate::geom::wrap_angle(theta);
    }
    Ok(out)
}

/// Effector position (device frame) for the given shoulder angles: the
/// lower intersection of three spheres of forearm radius.
pub fn delta_forward_kinematics(theta: &[f64; 3], geom: &HcGeometry) -> Result<Vec3, KinematicsError> {
    let centers: [Vec3; 3] =
        std::array::from_fn(|i| geom.elbow(i, theta[i]) - HcGeometry::radial(i) * geom.effector_radius);
    let r = geom.forearm;
    let ex = centers[1] - centers[0];
    let d = ex.norm();
    let ex = ex / d;
    let t = centers[2] - centers[0];
    let i = ex.dot(&t);
    let ey_raw = t - ex * i;
    let j = ey_raw.norm();
    if d < 1e-12 || j < 1e-12 {
        return Err(KinematicsError::NoSolution { arm: 0 });
    }
    let ey = ey_raw / j;
    let ez = ex.cross(&ey);
    // Equal radii simplify the trilateration formulas.
    let x = d / 2.0;
    let y = (i * i + j * j - 2.0 * i * x) / (2.0 * j);
    let h2 = r * r - x * x - y * y;
    if h2 < 0.0 {
        return Err(KinematicsError::NoSolution { arm: 0 });
    }
    let h = h2.sqrt();
    let base = centers[0] + ex * x + ey * y;
    let (a, b) = (base + ez * h, base - ez * h);
    let low = if a.z <= b.z { a } else { b };
    Ok(low - geom.workspace_center)
}

/// Wrist joint angles F, G, H for a device orientation, plus the gimbal-lock
/// flag from the Euler decomposition.
pub fn hc_wrist_angles(orientation: &Rotation, order: WristOrder) -> ([f64; 3], bool) {
    let (e, locked) = rotation_to_euler_flagged(orientation);
    let angles = match order {
        WristOrder::Xyz => [e.alpha, e.beta, e.gamma],
        WristOrder::Zyx => [e.gamma, e.beta, e.alpha],
    };
    (angles, locked)
}

pub fn hc_wrist_rotation(angles: &[f64; 3], order: WristOrder) -> Rotation {
    let e = match order {
        WristOrder::Xyz => EulerAngles::new(angles[0], angles[1], angles[2]),
        WristOrder::Zyx => EulerAngles::new(angles[2], angles[1], angles[0]),
    };
    euler_to_rotation(e)
}

/// All six active joints for a device pose.
pub fn hc_inverse_kinematics(pose: &Pose, grip: f64, geom: &HcGeometry) -> Result<HcJointState, KinematicsError> {
    let delta = hc_delta_inverse_kinematics(&pose.position, geom)?;
    let (wrist, _) = hc_wrist_angles(&pose.orientation, geom.wrist_order);
    Ok(HcJointState {
        theta: [delta[0], delta[1], delta[2], wrist[0], wrist[1], wrist[2]],
        grip: grip.clamp(0.0, 1.0),
    })
}
