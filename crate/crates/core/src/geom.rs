//! Rigid-body primitives: vectors, rotations, poses and twists.
//!
//! Everything is SI internally (meters, radians, seconds). Euler angles use
//! the extrinsic X-Y-Z convention: `alpha` about world X, then `beta` about
//! world Y, then `gamma` about world Z, i.e. `R = Rz(gamma) * Ry(beta) * Rx(alpha)`.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

pub type Vec3 = nalgebra::Vector3<f64>;

pub const MM_PER_M: f64 = 1000.0;

/// `|beta|` closer than this to `pi/2` is treated as gimbal lock.
pub const GIMBAL_TOLERANCE: f64 = 1e-9;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// An element of SO(3), stored as a unit quaternion.
///
/// Composition renormalizes, so arbitrarily long chains stay orthonormal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self(q)
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    /// A zero axis yields the identity.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        match Unit::try_new(*axis, 0.0) {
            Some(a) => Self(UnitQuaternion::from_axis_angle(&a, angle)),
            None => Self::identity(),
        }
    }

    /// Rotation vector (axis times angle) constructor.
    pub fn from_scaled_axis(v: &Vec3) -> Self {
        Self(UnitQuaternion::from_scaled_axis(*v))
    }

    /// Nearest rotation to an arbitrary 3x3 matrix.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let r = nalgebra::Rotation3::from_matrix_eps(m, 1e-15, 100, nalgebra::Rotation3::identity());
        Self(UnitQuaternion::from_rotation_matrix(&r))
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0.transform_vector(v)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        // atan2 form: exact zero for identity, accurate for small angles.
        2.0 * self.0.imag().norm().atan2(self.0.w.abs())
    }

    /// Axis times angle, angle in `[0, pi]`.
    pub fn scaled_axis(&self) -> Vec3 {
        self.0.scaled_axis()
    }

    /// Geodesic distance to `other` in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        // Half-angle between the quaternions as 4-vectors, sign-folded.
        let (a, b) = (self.0.coords, other.0.coords);
        let (d, s) = ((a - b).norm(), (a + b).norm());
        4.0 * d.min(s).atan2(d.max(s))
    }

    pub fn renormalized(&self) -> Self {
        let q: Quaternion<f64> = *self.0.quaternion();
        Self(UnitQuaternion::new_normalize(q))
    }

    /// Columns of the rotation matrix: the rotated world X, Y and Z axes.
    pub fn axes(&self) -> [Vec3; 3] {
        let m = self.matrix();
        [m.column(0).into(), m.column(1).into(), m.column(2).into()]
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0).renormalized()
    }
}

/// Extrinsic X-Y-Z angles in radians.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerAngles {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn from_degrees(a: f64, b: f64, g: f64) -> Self {
        Self::new(a.to_radians(), b.to_radians(), g.to_radians())
    }

    pub fn to_degrees(self) -> [f64; 3] {
        [self.alpha.to_degrees(), self.beta.to_degrees(), self.gamma.to_degrees()]
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite()
    }
}

pub fn euler_to_rotation(e: EulerAngles) -> Rotation {
    let rx = UnitQuaternion::from_axis_angle(&Vec3::x_axis(), e.alpha);
    let ry = UnitQuaternion::from_axis_angle(&Vec3::y_axis(), e.beta);
    let rz = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), e.gamma);
    Rotation(rz * ry * rx).renormalized()
}

/// Inverse of [`euler_to_rotation`]. At gimbal lock the `gamma = 0` branch is
/// returned; use [`rotation_to_euler_flagged`] to learn whether that happened.
pub fn rotation_to_euler(r: &Rotation) -> EulerAngles {
    rotation_to_euler_flagged(r).0
}

/// Returns the angles and `true` when the decomposition hit gimbal lock.
pub fn rotation_to_euler_flagged(r: &Rotation) -> (EulerAngles, bool) {
    let m = r.matrix();
    let cos_beta = m[(0, 0)].hypot(m[(1, 0)]);
    let beta = (-m[(2, 0)]).atan2(cos_beta);
    if cos_beta < GIMBAL_TOLERANCE {
        // With gamma = 0: R11 = cos(alpha), R12 = -sin(alpha) for either sign of beta.
        let alpha = (-m[(1, 2)]).atan2(m[(1, 1)]);
        let e = EulerAngles::new(wrap_angle(alpha), wrap_angle(beta), 0.0);
        return (e, true);
    }
    let alpha = m[(2, 1)].atan2(m[(2, 2)]);
    let gamma = m[(1, 0)].atan2(m[(0, 0)]);
    (EulerAngles::new(wrap_angle(alpha), wrap_angle(beta), wrap_angle(gamma)), false)
}

/// The rotation whose axis-angle is `s` times that of `r_prev^-1 * r_now`.
pub fn scaled_rotation_increment(r_prev: &Rotation, r_now: &Rotation, s: f64) -> Rotation {
    let rel = r_prev.inverse() * *r_now;
    if s == 1.0 {
        return rel;
    }
    if s == 0.0 {
        return Rotation::identity();
    }
    Rotation::from_scaled_axis(&(rel.scaled_axis() * s))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Rotation,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Rotation) -> Self {
        Self { position, orientation }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self::new(position, Rotation::identity())
    }

    pub fn from_euler(position: Vec3, e: EulerAngles) -> Self {
        Self::new(position, euler_to_rotation(e))
    }

    pub fn euler(&self) -> EulerAngles {
        rotation_to_euler(&self.orientation)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.orientation.rotate(p) + self.position
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.orientation.matrix());
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        h
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.orientation.quaternion().coords.iter().all(|c| c.is_finite())
    }

    /// Euclidean distance between positions and geodesic angle between
    /// orientations.
    pub fn distance_to(&self, other: &Pose) -> (f64, f64) {
        (
            (self.position - other.position).norm(),
            self.orientation.angle_to(&other.orientation),
        )
    }
}

/// `transform_point(pose_compose(a, b), p) == transform_point(a, transform_point(b, p))`.
pub fn pose_compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        position: a.orientation.rotate(&b.position) + a.position,
        orientation: a.orientation * b.orientation,
    }
}

pub fn pose_inverse(a: &Pose) -> Pose {
    let inv = a.orientation.inverse();
    Pose { position: -inv.rotate(&a.position), orientation: inv }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        pose_compose(&self, &rhs)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Twist {
    pub fn new(linear: Vec3, angular: Vec3) -> Self {
        Self { linear, angular }
    }

    /// Backward-difference twist between two poses `dt` apart. The angular
    /// part is the world-frame rotation vector of `prev -> now` over `dt`.
    pub fn from_pose_delta(prev: &Pose, now: &Pose, dt: f64) -> Self {
        let linear = (now.position - prev.position) / dt;
        let rel = now.orientation * prev.orientation.inverse();
        Self { linear, angular: rel.scaled_axis() / dt }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn max_abs(m: &Matrix3<f64>) -> f64 {
        m.iter().fold(0.0_f64, |a, &x| a.max(x.abs()))
    }

    fn orthonormality_error(r: &Rotation) -> f64 {
        let m = r.matrix();
        max_abs(&(m.transpose() * m - Matrix3::identity()))
    }

    #[test]
    fn zero_euler_is_identity() {
        let r = euler_to_rotation(EulerAngles::default());
        assert!(r.angle() < 1e-15);
    }

    #[test]
    fn half_turn_about_x_is_an_involution() {
        let r = euler_to_rotation(EulerAngles::new(PI, 0.0, 0.0));
        assert!((r * r).angle() < 1e-12);
    }

    #[test]
    fn euler_round_trip_fixed_sample() {
        let e = EulerAngles::new(0.1, 0.2, 0.3);
        let back = rotation_to_euler(&euler_to_rotation(e));
        assert_relative_eq!(back.alpha, 0.1, epsilon = 1e-12);
        assert_relative_eq!(back.beta, 0.2, epsilon = 1e-12);
        assert_relative_eq!(back.gamma, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn euler_convention_is_extrinsic_xyz() {
        // Pure rotations about each world axis map the expected basis vectors.
        let rx = euler_to_rotation(EulerAngles::new(PI / 2.0, 0.0, 0.0));
        assert_relative_eq!(rx.rotate(&Vec3::y()), Vec3::z(), epsilon = 1e-15);
        let ry = euler_to_rotation(EulerAngles::new(0.0, PI / 2.0, 0.0));
        assert_relative_eq!(ry.rotate(&Vec3::z()), Vec3::x(), epsilon = 1e-15);
        // alpha is applied first, about the fixed X axis.
        let both = euler_to_rotation(EulerAngles::new(PI / 2.0, 0.0, PI / 2.0));
        assert_relative_eq!(both.rotate(&Vec3::y()), Vec3::z(), epsilon = 1e-15);
        assert_relative_eq!(both.rotate(&Vec3::x()), Vec3::y(), epsilon = 1e-15);
    }

    #[test]
    fn identity_decomposes_to_zero() {
        let (e, locked) = rotation_to_euler_flagged(&Rotation::identity());
        assert_eq!((e.alpha, e.beta, e.gamma), (0.0, 0.0, 0.0));
        assert!(!locked);
    }

    #[test]
    fn gimbal_lock_takes_zero_gamma_branch() {
        for beta in [PI / 2.0, -PI / 2.0] {
            let r = euler_to_rotation(EulerAngles::new(0.4, beta, -0.7));
            let (e, locked) = rotation_to_euler_flagged(&r);
            assert!(locked);
            assert_eq!(e.gamma, 0.0);
            assert_relative_eq!(e.beta, beta, epsilon = 1e-7);
            // The canonical branch still reproduces the rotation.
            assert!(euler_to_rotation(e).angle_to(&r) < 1e-9);
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn compose_with_identity_and_inverse() {
        let a = Pose::from_euler(Vec3::new(0.1, -0.2, 0.3), EulerAngles::new(0.3, -0.5, 1.1));
        let b = pose_compose(&Pose::identity(), &a);
        assert_relative_eq!(b.position, a.position, epsilon = 1e-15);
        assert!(b.orientation.angle_to(&a.orientation) < 1e-15);
        let id = pose_compose(&a, &pose_inverse(&a));
        assert!(id.position.norm() < 1e-12);
        assert!(id.orientation.angle() < 1e-12);
        let inv_id = pose_inverse(&Pose::identity());
        assert_eq!(inv_id.position, Vec3::zeros());
        assert!(inv_id.orientation.angle() < 1e-15);
    }

    #[test]
    fn scaled_increment_endpoints_and_half_angle() {
        let a = euler_to_rotation(EulerAngles::new(0.2, -0.1, 0.4));
        let b = euler_to_rotation(EulerAngles::new(0.5, 0.3, -0.2));
        assert!(scaled_rotation_increment(&a, &b, 0.0).angle() < 1e-15);
        let full = scaled_rotation_increment(&a, &b, 1.0);
        assert_eq!(full, a.inverse() * b);

        let ten = 10f64.to_radians();
        let r0 = Rotation::identity();
        let r1 = Rotation::from_axis_angle(&Vec3::z(), ten);
        let half = scaled_rotation_increment(&r0, &r1, 0.5);
        let expected = Rotation::from_axis_angle(&Vec3::z(), ten / 2.0);
        assert!(half.angle_to(&expected) < 1e-12);
        assert_relative_eq!(half.angle(), ten / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn long_composition_chain_stays_orthonormal() {
        let step = euler_to_rotation(EulerAngles::new(0.0123, -0.0456, 0.0789));
        let mut r = Rotation::identity();
        for _ in 0..1_000_000 {
            r = r * step;
        }
        assert!(orthonormality_error(&r) < 1e-9);
        assert!((r.matrix().determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn twist_from_pose_delta() {
        let a = Pose::identity();
        let b = Pose::new(Vec3::new(0.001, 0.0, 0.0), Rotation::from_axis_angle(&Vec3::z(), 0.002));
        let t = Twist::from_pose_delta(&a, &b, 0.001);
        assert_relative_eq!(t.linear, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(t.angular, Vec3::new(0.0, 0.0, 2.0), epsilon = 1e-9);
    }

    fn angle() -> impl Strategy<Value = f64> {
        -PI..PI
    }

    fn euler_away_from_lock() -> impl Strategy<Value = EulerAngles> {
        (angle(), -1.5..1.5f64, angle()).prop_map(|(a, b, g)| EulerAngles::new(a, b, g))
    }

    fn pose() -> impl Strategy<Value = Pose> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, euler_away_from_lock())
            .prop_map(|(x, y, z, e)| Pose::from_euler(Vec3::new(x, y, z), e))
    }

    proptest! {
        #[test]
        fn euler_round_trip(e in euler_away_from_lock()) {
            let back = rotation_to_euler(&euler_to_rotation(e));
            prop_assert!((wrap_angle(back.alpha - e.alpha)).abs() < 1e-12);
            prop_assert!((back.beta - e.beta).abs() < 1e-12);
            prop_assert!((wrap_angle(back.gamma - e.gamma)).abs() < 1e-12);
        }

        #[test]
        fn compose_matches_homogeneous_matrices(a in pose(), b in pose()) {
            let c = pose_compose(&a, &b);
            let oracle = a.to_homogeneous() * b.to_homogeneous();
            let diff = c.to_homogeneous() - oracle;
            prop_assert!(diff.iter().all(|d| d.abs() < 1e-12));
        }

        #[test]
        fn compose_transforms_points(a in pose(), b in pose(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
            let p = Vec3::new(x, y, 0.5);
            let lhs = pose_compose(&a, &b).transform_point(&p);
            let rhs = a.transform_point(&b.transform_point(&p));
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn inverse_is_involutive(a in pose()) {
            let back = pose_inverse(&pose_inverse(&a));
            prop_assert!((back.position - a.position).norm() < 1e-12);
            prop_assert!(back.orientation.angle_to(&a.orientation) < 1e-12);
            let id = pose_compose(&a, &pose_inverse(&a));
            prop_assert!(id.position.norm() < 1e-12 && id.orientation.angle() < 1e-12);
        }

        #[test]
        fn scaled_increments_add(e0 in euler_away_from_lock(), e1 in euler_away_from_lock(),
                                 s1 in 0.0..1.0f64, s2 in 0.0..1.0f64) {
            let a = euler_to_rotation(e0);
            let b = euler_to_rotation(e1);
            let sum = scaled_rotation_increment(&a, &b, s1 + s2);
            let chained = scaled_rotation_increment(&a, &b, s1) * scaled_rotation_increment(&a, &b, s2);
            prop_assert!(sum.angle_to(&chained) < 1e-12);
        }
    }
}
