//! Incremental leader-to-follower mapping with velocity clamping.
//!
//! Each tick the follower target moves by the leader's pose increment,
//! scaled down whenever the leader moves faster than the configured limits.
//! Translation uses the linear factor, rotation the angular one (applied to
//! the axis-angle of the relative rotation).

use serde::{Deserialize, Serialize};

use crate::geom::{scaled_rotation_increment, Pose, Twist};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    /// m/s
    pub max_v: f64,
    /// rad/s
    pub max_w: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self { max_v: 0.05, max_w: 0.5 }
    }
}

impl ScalingConfig {
    pub fn is_valid(&self) -> bool {
        self.max_v > 0.0 && self.max_w > 0.0 && self.max_v.is_finite() && self.max_w.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor {
    pub s_lin: f64,
    pub s_ang: f64,
}

impl ScaleFactor {
    pub const UNIT: ScaleFactor = ScaleFactor { s_lin: 1.0, s_ang: 1.0 };
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeleopState {
    pub hc_prev: Pose,
    pub rsr_prev: Pose,
    pub engaged: bool,
}

impl TeleopState {
    pub fn new(hc: Pose, rsr: Pose) -> Self {
        Self { hc_prev: hc, rsr_prev: rsr, engaged: true }
    }
}

pub fn compute_scale(twist: &Twist, cfg: &ScalingConfig) -> ScaleFactor {
    let clamp = |speed: f64, max: f64| if speed > max { max / speed } else { 1.0 };
    ScaleFactor { s_lin: clamp(twist.linear.norm(), cfg.max_v), s_ang: clamp(twist.angular.norm(), cfg.max_w) }
}

/// New follower target from the leader increment `hc_prev -> hc_now`.
pub fn map_increment(state: &TeleopState, hc_now: &Pose, s: ScaleFactor) -> Pose {
    if *hc_now == state.hc_prev {
        // Exact hold; avoids rounding creep while the leader is still.
        return state.rsr_prev;
    }
    let dp = hc_now.position - state.hc_prev.position;
    let dr = scaled_rotation_increment(&state.hc_prev.orientation, &hc_now.orientation, s.s_ang);
    Pose {
        position: state.rsr_prev.position + dp * s.s_lin,
        orientation: state.rsr_prev.orientation * dr,
    }
}

/// Advances the mapping by one tick. While disengaged only the leader
/// reference moves, so re-engaging does not jump the follower.
pub fn tick(state: &TeleopState, hc_now: &Pose, hc_twist: &Twist, cfg: &ScalingConfig) -> (TeleopState, Pose) {
    if !state.engaged {
        let next = TeleopState { hc_prev: *hc_now, ..*state };
        return (next, state.rsr_prev);
    }
    let s = compute_scale(hc_twist, cfg);
    let target = map_increment(state, hc_now, s);
    (TeleopState { hc_prev: *hc_now, rsr_prev: target, engaged: true }, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{EulerAngles, Rotation, Vec3};
    use proptest::prelude::*;

    fn twist(v: f64, w: f64) -> Twist {
        Twist::new(Vec3::new(v, 0.0, 0.0), Vec3::new(0.0, 0.0, w))
    }

    #[test]
    fn scale_examples() {
        let cfg = ScalingConfig { max_v: 0.1, max_w: 0.5 };
        assert_eq!(compute_scale(&twist(0.2, 0.0), &cfg).s_lin, 0.5);
        assert_eq!(compute_scale(&twist(0.05, 0.0), &cfg), ScaleFactor::UNIT);
        assert_eq!(compute_scale(&twist(0.0, 2.0), &cfg).s_ang, 0.25);
        assert_eq!(compute_scale(&Twist::default(), &cfg), ScaleFactor::UNIT);
    }

    #[test]
    fn increment_examples() {
        let start = Pose::from_euler(Vec3::new(0.0, 0.0, 0.2), EulerAngles::new(0.1, 0.0, 0.0));
        let st = TeleopState::new(Pose::identity(), start);
        let same = map_increment(&st, &Pose::identity(), ScaleFactor::UNIT);
        assert_eq!(same.position, start.position);
        assert!(same.orientation.angle_to(&start.orientation) < 1e-15);

        let moved = map_increment(&st, &Pose::from_translation(Vec3::new(0.01, 0.0, 0.0)), ScaleFactor::UNIT);
        assert!((moved.position - Vec3::new(0.01, 0.0, 0.2)).norm() < 1e-15);

        let ten = 10f64.to_radians();
        let st = TeleopState::new(Pose::identity(), Pose::identity());
        let turned = Pose::new(Vec3::zeros(), Rotation::from_axis_angle(&Vec3::z(), ten));
        let out = map_increment(&st, &turned, ScaleFactor { s_lin: 1.0, s_ang: 0.5 });
        let expected = Rotation::from_axis_angle(&Vec3::z(), ten / 2.0);
        assert!(out.orientation.angle_to(&expected) < 1e-12);
    }

    #[test]
    fn slow_chain_tracks_exactly() {
        let cfg = ScalingConfig::default();
        let mut st = TeleopState::new(Pose::identity(), Pose::from_translation(Vec3::new(0.0, 0.0, 0.2)));
        let dt = 0.001;
        let mut hc = Pose::identity();
        for _ in 0..1000 {
            let next = Pose::from_translation(hc.position + Vec3::new(1e-5, -2e-5, 0.5e-5));
            let tw = Twist::from_pose_delta(&hc, &next, dt);
            let (s, _) = tick(&st, &next, &tw, &cfg);
            st = s;
            hc = next;
        }
        assert!((st.rsr_prev.position - (Vec3::new(0.0, 0.0, 0.2) + hc.position)).norm() < 1e-12);
    }

    #[test]
    fn fast_tick_is_clamped() {
        let cfg = ScalingConfig::default();
        let dt = 0.001;
        let st = TeleopState::new(Pose::identity(), Pose::identity());
        let next = Pose::from_translation(Vec3::new(3.0 * cfg.max_v * dt, 0.0, 0.0));
        let tw = Twist::from_pose_delta(&st.hc_prev, &next, dt);
        let (_, target) = tick(&st, &next, &tw, &cfg);
        assert!((target.position.norm() - cfg.max_v * dt).abs() < 1e-12);
    }

    #[test]
    fn clutch_freezes_follower() {
        let cfg = ScalingConfig::default();
        let rsr0 = Pose::from_translation(Vec3::new(0.0, 0.0, 0.2));
        let mut st = TeleopState::new(Pose::identity(), rsr0);
        st.engaged = false;
        let far = Pose::from_translation(Vec3::new(0.05, 0.0, 0.0));
        let (s, target) = tick(&st, &far, &twist(10.0, 0.0), &cfg);
        assert_eq!(target, rsr0);
        assert_eq!(s.hc_prev, far);
        // Re-engage at the new leader pose: no jump.
        let s = TeleopState { engaged: true, ..s };
        let (_, target) = tick(&s, &far, &Twist::default(), &cfg);
        assert_eq!(target.position, rsr0.position);
    }

    fn small_pose() -> impl Strategy<Value = Pose> {
        (prop::array::uniform3(-0.05..0.05f64), prop::array::uniform3(-0.5..0.5f64))
            .prop_map(|(p, e)| Pose::from_euler(Vec3::from(p), EulerAngles::new(e[0], e[1], e[2])))
    }

    proptest! {
        #[test]
        fn per_tick_increment_is_clamped(a in small_pose(), b in small_pose()) {
            let cfg = ScalingConfig::default();
            let dt = 0.001;
            let st = TeleopState::new(a, Pose::identity());
            let tw = Twist::from_pose_delta(&a, &b, dt);
            let (_, target) = tick(&st, &b, &tw, &cfg);
            prop_assert!(target.position.norm() <= cfg.max_v * dt + 1e-12);
            prop_assert!(target.orientation.angle() <= cfg.max_w * dt + 1e-12);
        }

        #[test]
        fn closed_loop_returns_to_start(path in prop::collection::vec(small_pose(), 1..20)) {
            let cfg = ScalingConfig { max_v: 1e9, max_w: 1e9 };
            let start = Pose::identity();
            let rsr0 = Pose::from_translation(Vec3::new(0.0, 0.0, 0.2));
            let mut st = TeleopState::new(start, rsr0);
            for p in path.iter().chain(std::iter::once(&start)) {
                let (s, _) = tick(&st, p, &Twist::default(), &cfg);
                st = s;
            }
            prop_assert!((st.rsr_prev.position - rsr0.position).norm() < 1e-9);
            prop_assert!(st.rsr_prev.orientation.angle_to(&rsr0.orientation) < 1e-9);
        }
    }
}
