//! Three-armed ring robot: each arm is a universal joint on the fixed ring
//! (first axis actuated), a prismatic actuator, and a spherical joint on the
//! moving ring.
//!
//! Leg vector of arm `i`: `l_i = p + R b_i - a_i`. The actuator length is
//! `|l_i|`. The rotary angle is the direction of `l_i` in the plane normal to
//! the arm's rotary axis `u_i`, measured from the projection of world Z
//! (`e1`) towards `e2 = u_i x e1`.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use super::KinematicsError;
use crate::geom::{Pose, Rotation, Vec3};

pub const FK_MAX_ITERATIONS: usize = 100;
/// Residual accepted as converged.
pub const FK_TOLERANCE: f64 = 1e-10;
/// Residual at which iteration stops early.
const FK_STOP: f64 = 1e-13;
pub const FK_MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsrGeometry {
    /// Universal-joint centers in the fixed-ring frame, m.
    pub fixed_anchors: [Vec3; 3],
    /// Spherical-joint centers in the moving-ring frame, m.
    pub moving_anchors: [Vec3; 3],
    pub actuator_min: f64,
    pub actuator_max: f64,
    /// Actuated axis of each universal joint (unit, not vertical).
    pub rotary_axes: [Vec3; 3],
}

impl RsrGeometry {
    /// Rings centered on the Z axis with arms at the given angles (radians),
    /// rotary axes pointing radially outward.
    pub fn rings(fixed_radius: f64, moving_radius: f64, arm_angles: [f64; 3], actuator: (f64, f64)) -> Self {
        let radial = arm_angles.map(|a| Vec3::new(a.cos(), a.sin(), 0.0));
        Self {
            fixed_anchors: radial.map(|r| r * fixed_radius),
            moving_anchors: radial.map(|r| r * moving_radius),
            actuator_min: actuator.0,
            actuator_max: actuator.1,
            rotary_axes: radial,
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |m: &str| Err(KinematicsError::Geometry(m.to_string()));
        let collinear = |p: &[Vec3; 3]| (p[1] - p[0]).cross(&(p[2] - p[0])).norm() < 1e-9;
        if collinear(&self.fixed_anchors) {
            return bad("fixed-ring anchors are collinear");
        }
        if collinear(&self.moving_anchors) {
            return bad("moving-ring anchors are collinear");
        }
        if !(self.actuator_min >= 0.0 && self.actuator_min < self.actuator_max && self.actuator_max.is_finite()) {
            return bad("actuator range must satisfy 0 <= min < max");
        }
        for (i, u) in self.rotary_axes.iter().enumerate() {
            if (u.norm() - 1.0).abs() > 1e-9 {
                return Err(KinematicsError::Geometry(format!("rotary axis {i} is not unit length")));
            }
            if u.cross(&Vec3::z()).norm() < 1e-6 {
                return Err(KinematicsError::Geometry(format!("rotary axis {i} is vertical")));
            }
        }
        Ok(())
    }

    /// `(u, e1, e2)` for arm `i`.
    pub fn arm_frame(&self, i: usize) -> (Vec3, Vec3, Vec3) {
        let u = self.rotary_axes[i];
        let e1 = (Vec3::z() - u * u.z).normalize();
        let e2 = u.cross(&e1);
        (u, e1, e2)
    }

    pub fn leg_vector(&self, pose: &Pose, i: usize) -> Vec3 {
        pose.position + pose.orientation.rotate(&self.moving_anchors[i]) - self.fixed_anchors[i]
    }
}

impl Default for RsrGeometry {
    fn default() -> Self {
        Self::rings(0.125, 0.1, [90f64, 210.0, 330.0].map(f64::to_radians), (0.05, 0.35))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RsrJointState {
    /// Actuator lengths, m.
    pub d: [f64; 3],
    /// Rotary angles, rad.
    pub theta: [f64; 3],
}

impl RsrJointState {
    pub fn as_array(&self) -> [f64; 6] {
        [self.d[0], self.d[1], self.d[2], self.theta[0], self.theta[1], self.theta[2]]
    }

    pub fn from_array(q: [f64; 6]) -> Self {
        Self { d: [q[0], q[1], q[2]], theta: [q[3], q[4], q[5]] }
    }
}

pub fn rsr_inverse_kinematics(pose: &Pose, geom: &RsrGeometry) -> Result<RsrJointState, KinematicsError> {
    let mut out = RsrJointState::default();
    for i in 0..3 {
        let l = geom.leg_vector(pose, i);
        let d = l.norm();
        if d < geom.actuator_min || d > geom.actuator_max || !d.is_finite() {
            return Err(KinematicsError::Unreachable { arm: i, length: d, min: geom.actuator_min, max: geom.actuator_max });
        }
        let (_, e1, e2) = geom.arm_frame(i);
        let (c, s) = (l.dot(&e1), l.dot(&e2));
        if c.hypot(s) < 1e-9 * d.max(1e-12) {
            return Err(KinematicsError::Singular { arm: i });
        }
        out.d[i] = d;
        out.theta[i] = s.atan2(c);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FkSolution {
    pub pose: Pose,
    pub iterations: usize,
    pub residual: f64,
}

/// Residuals of the six closure equations and their Jacobian with respect to
/// `(dp, dw)`, where `dw` is a world-frame rotation increment.
fn closure(pose: &Pose, joints: &RsrJointState, geom: &RsrGeometry) -> (Vector6<f64>, Matrix6<f64>) {
    let mut r = Vector6::zeros();
    let mut j = Matrix6::zeros();
    for i in 0..3 {
        let rb = pose.orientation.rotate(&geom.moving_anchors[i]);
        let l = pose.position + rb - geom.fixed_anchors[i];
        let len = l.norm();
        let lhat = l / len;
        let (_, e1, e2) = geom.arm_frame(i);
        let (s, c) = joints.theta[i].sin_cos();
        let n = e2 * c - e1 * s;
        r[i] = len - joints.d[i];
        r[3 + i] = l.dot(&n);
        let len_w = rb.cross(&lhat);
        let plane_w = rb.cross(&n);
        for k in 0..3 {
            j[(i, k)] = lhat[k];
            j[(i, 3 + k)] = len_w[k];
            j[(3 + i, k)] = n[k];
            j[(3 + i, 3 + k)] = plane_w[k];
        }
    }
    (r, j)
}

fn condition_number(j: &Matrix6<f64>) -> f64 {
    let sv = j.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Newton solve of the closure equations starting from `guess`.
pub fn rsr_forward_kinematics(
    joints: &RsrJointState,
    geom: &RsrGeometry,
    guess: &Pose,
) -> Result<FkSolution, KinematicsError> {
    let mut pose = *guess;
    let mut residual = f64::INFINITY;
    for iterations in 0..=FK_MAX_ITERATIONS {
        let (r, j) = closure(&pose, joints, geom);
        residual = r.amax();
        if r.iter().any(|x| !x.is_finite()) {
            residual = f64::NAN;
            break;
        }
        if residual < FK_STOP || (iterations == FK_MAX_ITERATIONS && residual < FK_TOLERANCE) {
            let condition = condition_number(&j);
            if condition > FK_MAX_CONDITION {
                return Err(KinematicsError::AmbiguousBranch { condition });
            }
            check_branch(&pose, joints, geom)?;
            return Ok(FkSolution { pose, iterations, residual });
        }
        if iterations == FK_MAX_ITERATIONS {
            break;
        }
        let Some(step) = j.lu().solve(&(-r)) else {
            return Err(KinematicsError::AmbiguousBranch { condition: f64::INFINITY });
        };
        let dp = Vec3::new(step[0], step[1], step[2]);
        let dw = Vec3::new(step[3], step[4], step[5]);
        pose = Pose::new(pose.position + dp, Rotation::from_scaled_axis(&dw) * pose.orientation);
    }
    Err(KinematicsError::NoConvergence { iterations: FK_MAX_ITERATIONS, residual })
}

/// The plane equation alone admits the leg pointing backwards in the plane
/// (angle + pi); reject that branch.
fn check_branch(pose: &Pose, joints: &RsrJointState, geom: &RsrGeometry) -> Result<(), KinematicsError> {
    for i in 0..3 {
        let l = geom.leg_vector(pose, i);
        let (_, e1, e2) = geom.arm_frame(i);
        let (s, c) = joints.theta[i].sin_cos();
        if l.dot(&(e1 * c + e2 * s)) <= 0.0 {
            return Err(KinematicsError::AmbiguousBranch { condition: f64::NAN });
        }
    }
    Ok(())
}

/// Sensitivity of the ring pose `(dp, dw)` to the joints `(dd, dtheta)` at a
/// closed configuration: column `k` is the pose motion per unit of joint `k`.
pub fn rsr_joint_sensitivity(
    pose: &Pose,
    joints: &RsrJointState,
    geom: &RsrGeometry,
) -> Result<Matrix6<f64>, KinematicsError> {
    let (_, jx) = closure(pose, joints, geom);
    // d(residual)/dq is diagonal: -1 for lengths, -(in-plane leg length) for angles.
    let mut jq = Matrix6::zeros();
    for i in 0..3 {
        let l = geom.leg_vector(pose, i);
        let (_, e1, e2) = geom.arm_frame(i);
        let (s, c) = joints.theta[i].sin_cos();
        jq[(i, i)] = -1.0;
        jq[(3 + i, 3 + i)] = -l.dot(&(e1 * c + e2 * s));
    }
    let inv = jx.try_inverse().ok_or(KinematicsError::AmbiguousBranch { condition: f64::INFINITY })?;
    Ok(-(inv * jq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{euler_to_rotation, EulerAngles};
    use proptest::prelude::*;

    fn home() -> Pose {
        Pose::from_translation(Vec3::new(0.0, 0.0, 0.2))
    }

    fn aligned(r: f64) -> RsrGeometry {
        RsrGeometry::rings(r, r, [90f64, 210.0, 330.0].map(f64::to_radians), (0.0, 0.5))
    }

    #[test]
    fn default_geometry_is_valid() {
        assert!(RsrGeometry::default().validate().is_ok());
        let g = RsrGeometry { moving_anchors: [Vec3::zeros(), Vec3::x() * 0.1, Vec3::x() * 0.2], ..Default::default() };
        assert!(g.validate().is_err());
        let g = RsrGeometry { actuator_min: 0.4, ..Default::default() };
        assert!(g.validate().is_err());
    }

    #[test]
    fn pure_lift_gives_equal_legs() {
        let g = aligned(0.1);
        let q = rsr_inverse_kinematics(&Pose::from_translation(Vec3::new(0.0, 0.0, 0.17)), &g).unwrap();
        for i in 0..3 {
            assert!((q.d[i] - 0.17).abs() < 1e-15);
            assert!((q.theta[i] - q.theta[0]).abs() < 1e-15);
        }
        let back = rsr_forward_kinematics(&q, &g, &Pose::from_translation(Vec3::new(0.01, -0.01, 0.15))).unwrap();
        assert!((back.pose.position - Vec3::new(0.0, 0.0, 0.17)).norm() < 1e-12);
    }

    #[test]
    fn coincident_rings_are_flagged_unreachable() {
        let mut g = aligned(0.1);
        g.actuator_min = 0.01;
        match rsr_inverse_kinematics(&Pose::identity(), &g) {
            Err(KinematicsError::Unreachable { arm: 0, length, .. }) => assert_eq!(length, 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn leg_along_rotary_axis_is_singular() {
        let g = RsrGeometry::rings(0.1, 0.1, [0.0, 120f64.to_radians(), 240f64.to_radians()], (0.0, 1.0));
        // Moving ring shifted so arm 0's leg points along +x (its rotary axis).
        let pose = Pose::from_translation(Vec3::new(0.2, 0.0, 0.0));
        assert_eq!(rsr_inverse_kinematics(&pose, &g), Err(KinematicsError::Singular { arm: 0 }));
    }

    #[test]
    fn far_target_is_unreachable_not_wrapped() {
        let g = RsrGeometry::default();
        let mut saw_unreachable = false;
        for k in 0..200 {
            let p = Pose::from_translation(Vec3::new(0.002 * k as f64, 0.0, 0.2));
            match rsr_inverse_kinematics(&p, &g) {
                Ok(_) => assert!(!saw_unreachable, "reachable again after leaving the workspace"),
                Err(e) => {
                    assert!(e.is_unreachable());
                    saw_unreachable = true;
                }
            }
        }
        assert!(saw_unreachable);
    }

    #[test]
    fn home_jacobian_is_well_conditioned() {
        let g = RsrGeometry::default();
        let q = rsr_inverse_kinematics(&home(), &g).unwrap();
        let (_, j) = closure(&home(), &q, &g);
        assert!(condition_number(&j) < 1e3);
    }

    #[test]
    fn joint_perturbation_moves_pose_proportionally() {
        let g = RsrGeometry::default();
        let target = Pose::from_euler(Vec3::new(0.01, -0.02, 0.21), EulerAngles::new(0.05, -0.03, 0.1));
        let q = rsr_inverse_kinematics(&target, &g).unwrap();
        let sens = rsr_joint_sensitivity(&target, &q, &g).unwrap();
        for k in 0..6 {
            let mut arr = q.as_array();
            arr[k] += 1e-6;
            let moved = rsr_forward_kinematics(&RsrJointState::from_array(arr), &g, &target).unwrap().pose;
            let dp = (moved.position - target.position) / 1e-6;
            let dw = (moved.orientation * target.orientation.inverse()).scaled_axis() / 1e-6;
            for r in 0..3 {
                assert!((dp[r] - sens[(r, k)]).abs() < 1e-4, "dp {k} {r}");
                assert!((dw[r] - sens[(3 + r, k)]).abs() < 1e-4, "dw {k} {r}");
            }
            assert!(dp.norm() < 100.0 && dw.norm() < 1000.0);
        }
    }

    #[test]
    fn bad_guess_does_not_panic() {
        let g = RsrGeometry::default();
        let q = rsr_inverse_kinematics(&home(), &g).unwrap();
        let guess = Pose::from_translation(Vec3::new(0.0, 0.0, -5.0));
        let _ = rsr_forward_kinematics(&q, &g, &guess);
        let q = RsrJointState { d: [f64::NAN; 3], theta: [0.0; 3] };
        assert!(rsr_forward_kinematics(&q, &g, &home()).is_err());
    }

    fn reachable_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-0.03..0.03f64),
            0.15..0.26f64,
            prop::array::uniform3(-0.2..0.2f64),
        )
            .prop_map(|(p, z, e)| Pose::new(Vec3::new(p[0], p[1], z), euler_to_rotation(EulerAngles::new(e[0], e[1], e[2]))))
    }

    proptest! {
        #[test]
        fn ik_fk_round_trip(target in reachable_pose()) {
            let g = RsrGeometry::default();
            let q = rsr_inverse_kinematics(&target, &g).unwrap();
            let sol = rsr_forward_kinematics(&q, &g, &target).unwrap();
            prop_assert!((sol.pose.position - target.position).norm() < 1e-9);
            prop_assert!(sol.pose.orientation.angle_to(&target.orientation) < 1e-9);
            // Also from a distant seed on the same branch.
            let sol = rsr_forward_kinematics(&q, &g, &home()).unwrap();
            prop_assert!((sol.pose.position - target.position).norm() < 1e-9);
            prop_assert!(sol.pose.orientation.angle_to(&target.orientation) < 1e-9);
        }

        #[test]
        fn ik_is_continuous(target in reachable_pose(), dir in prop::array::uniform3(-1.0..1.0f64)) {
            let g = RsrGeometry::default();
            let eps = 1e-7;
            let d = Vec3::from(dir);
            let moved = Pose::new(target.position + d * eps, Rotation::from_scaled_axis(&(d * eps)) * target.orientation);
            let a = rsr_inverse_kinematics(&target, &g).unwrap().as_array();
            let b = rsr_inverse_kinematics(&moved, &g).unwrap().as_array();
            for k in 0..6 {
                prop_assert!((a[k] - b[k]).abs() < 100.0 * eps);
            }
        }
    }
}
