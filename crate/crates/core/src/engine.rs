//! Fixed-step simulation of the teleoperated ring robot holding the distal
//! fragment.
//!
//! One tick: leader increment to follower target, inverse kinematics to joint
//! targets, servo drives, forward kinematics of the driven joints, distal box
//! attachment, collision and rendered force. Everything is a pure function of
//! the previous state, the scene and the tick input.

use serde::{Deserialize, Serialize};

use crate::force::{evaluate, ForceResult};
use crate::geom::{wrap_angle, Pose, Twist, Vec3};
use crate::kinematics::{
    hc_inverse_kinematics, rsr_forward_kinematics, rsr_inverse_kinematics, HcJointState, KinematicsError,
    RsrJointState,
};
use crate::obb::{scene_contacts, ContactResult, Obb};
use crate::scene::{attach_distal, ConstraintMode, DriveMode, DriveParams, Scene};
use crate::teleop::{tick as teleop_tick, TeleopState};

/// Forward-kinematics iteration budget counted as "fast" in [`RunStats`].
pub const FK_FAST_ITERATIONS: usize = 20;
const PROJECT_ITERATIONS: usize = 16;

/// Spring-damper servo on a unit-inertia coordinate, semi-implicit Euler.
/// Returns `(value, rate, force)`.
pub fn drive_step(current: f64, rate: f64, target: f64, params: &DriveParams, dt: f64) -> (f64, f64, f64) {
    drive_step_error(current, rate, target - current, params, dt)
}

fn drive_step_error(current: f64, rate: f64, error: f64, p: &DriveParams, dt: f64) -> (f64, f64, f64) {
    let f = (p.stiffness * error - p.damping * rate).clamp(-p.force_limit, p.force_limit);
    let rate = rate + f * dt;
    (current + rate * dt, rate, f)
}

/// Leader input for one tick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HcInput {
    pub pose: Pose,
    pub twist: Twist,
    pub engaged: bool,
    pub grip: f64,
}

impl HcInput {
    pub fn at_rest(pose: Pose) -> Self {
        Self { pose, twist: Twist::default(), engaged: true, grip: 0.0 }
    }
}

/// What went wrong during a tick, if anything.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepFlags {
    /// Follower target outside the workspace; previous joint targets held.
    pub unreachable: bool,
    /// Leader pose outside the device workspace; display joints held.
    pub hc_unreachable: bool,
    /// Forward kinematics failed; the mechanical state was frozen.
    pub fault: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub ticks: u64,
    pub unreachable_ticks: u64,
    pub hc_unreachable_ticks: u64,
    pub fault_ticks: u64,
    /// Ticks whose forward-kinematics solve exceeded [`FK_FAST_ITERATIONS`].
    pub fk_slow_ticks: u64,
    pub fk_max_iterations: usize,
}

impl RunStats {
    pub fn fk_fast_fraction(&self) -> f64 {
        if self.ticks == 0 {
            return 1.0;
        }
        1.0 - self.fk_slow_ticks as f64 / self.ticks as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub tick: u64,
    pub teleop: TeleopState,
    /// Last target that passed inverse kinematics.
    pub last_valid_target: Pose,
    pub hc_pose: Pose,
    pub hc_joints: HcJointState,
    pub joint_targets: RsrJointState,
    pub joints: RsrJointState,
    /// `d1..d3, theta1..theta3` rates.
    pub joint_rates: [f64; 6],
    pub ring_pose: Pose,
    pub prev_ring_position: Vec3,
    pub distal: Vec<Obb>,
    pub contacts: Vec<ContactResult>,
    pub force: ForceResult,
    pub flags: StepFlags,
    pub fk_iterations: usize,
    pub stats: RunStats,
}

impl SimState {
    /// Robot at home, leader at `hc_pose`, engaged.
    pub fn new(scene: &Scene, hc_pose: Pose) -> Result<Self, KinematicsError> {
        let joints = rsr_inverse_kinematics(&scene.home, &scene.rsr)?;
        let hc_joints = hc_inverse_kinematics(&hc_pose, 0.0, &scene.hc).unwrap_or_default();
        let distal = attach_distal(&scene.home, &scene.distal);
        let contacts = scene_contacts(&scene.proximal, &distal);
        let force = evaluate(&contacts, &Vec3::zeros(), &scene.force);
        Ok(Self {
            tick: 0,
            teleop: TeleopState::new(hc_pose, scene.home),
            last_valid_target: scene.home,
            hc_pose,
            hc_joints,
            joint_targets: joints,
            joints,
            joint_rates: [0.0; 6],
            ring_pose: scene.home,
            prev_ring_position: scene.home.position,
            distal,
            contacts,
            force,
            flags: StepFlags::default(),
            fk_iterations: 0,
            stats: RunStats::default(),
        })
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.tick as f64 * dt
    }

    /// Bit `2 * distal_index + proximal_index` set per colliding pair.
    pub fn collision_mask(&self) -> u32 {
        self.contacts.iter().enumerate().filter(|(_, c)| c.colliding).fold(0, |m, (i, _)| m | 1 << i)
    }

    /// Maximum penetration depth over all pairs.
    pub fn max_depth(&self) -> f64 {
        self.contacts.iter().map(|c| c.depth).fold(0.0, f64::max)
    }

    /// Kinetic plus spring energy of the joint servos and the contact springs.
    pub fn mechanical_energy(&self, scene: &Scene) -> f64 {
        let q = self.joints.as_array();
        let qt = self.joint_targets.as_array();
        let mut e = 0.0;
        for i in 0..6 {
            let (p, err) = if i < 3 {
                (&scene.drives.linear, qt[i] - q[i])
            } else {
                (&scene.drives.rotary, wrap_angle(qt[i] - q[i]))
            };
            e += 0.5 * self.joint_rates[i].powi(2) + 0.5 * p.stiffness * err * err;
        }
        e + self.contacts.iter().map(|c| 0.5 * scene.force.k * c.depth * c.depth).sum::<f64>()
    }

    pub fn sample(&self, scene: &Scene) -> TrajectorySample {
        TrajectorySample {
            t: self.time(scene.dt),
            hc: self.hc_pose,
            rsr_target: self.teleop.rsr_prev,
            rsr_actual: self.ring_pose,
            joints: self.joints,
            f_g: self.force.f_global,
            collide: self.collision_mask(),
        }
    }
}

/// One recorded tick, SI units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub hc: Pose,
    pub rsr_target: Pose,
    pub rsr_actual: Pose,
    pub joints: RsrJointState,
    pub f_g: Vec3,
    pub collide: u32,
}

/// Moves `target` along contact normals until no distal box overlaps the
/// proximal fragment. `None` if that does not settle.
pub fn project_out_of_collision(target: &Pose, scene: &Scene) -> Option<Pose> {
    let mut pose = *target;
    for _ in 0..PROJECT_ITERATIONS {
        let contacts = scene_contacts(&scene.proximal, &attach_distal(&pose, &scene.distal));
        let deepest = contacts.iter().filter(|c| c.colliding).max_by(|a, b| a.depth.total_cmp(&b.depth));
        match deepest {
            None => return Some(pose),
            Some(c) => pose.position += c.normal * c.depth,
        }
    }
    None
}

/// Advances the simulation by one tick.
pub fn step(state: &SimState, scene: &Scene, input: &HcInput) -> SimState {
    let dt = scene.dt;
    let mut next = state.clone();
    next.tick += 1;
    next.stats.ticks += 1;
    next.flags = StepFlags::default();
    next.hc_pose = input.pose;

    match hc_inverse_kinematics(&input.pose, input.grip, &scene.hc) {
        Ok(j) => next.hc_joints = j,
        Err(_) => {
            next.flags.hc_unreachable = true;
            next.stats.hc_unreachable_ticks += 1;
        }
    }

    // (1) leader increment -> follower target.
    let teleop_in = TeleopState { engaged: input.engaged, ..state.teleop };
    let (mut teleop, mut target) = teleop_tick(&teleop_in, &input.pose, &input.twist, &scene.scaling);
    if scene.constraint == ConstraintMode::Project {
        target = project_out_of_collision(&target, scene).unwrap_or(state.last_valid_target);
        teleop.rsr_prev = target;
    }

    // (2) joint targets; hold the previous ones outside the workspace.
    match rsr_inverse_kinematics(&target, &scene.rsr) {
        Ok(q) => {
            next.joint_targets = q;
            next.last_valid_target = target;
        }
        Err(_) => {
            next.flags.unreachable = true;
            next.stats.unreachable_ticks += 1;
            teleop.rsr_prev = state.last_valid_target;
        }
    }
    next.teleop = teleop;

    // (3) drives, (4) ring pose.
    let ring = match scene.drive_mode {
        DriveMode::Rigid => {
            next.joints = next.joint_targets;
            next.joint_rates = [0.0; 6];
            next.fk_iterations = 0;
            Ok(next.last_valid_target)
        }
        DriveMode::Servo => {
            let q = state.joints.as_array();
            let qt = next.joint_targets.as_array();
            let mut out = [0.0; 6];
            for i in 0..6 {
                let (p, err) = if i < 3 {
                    (&scene.drives.linear, qt[i] - q[i])
                } else {
                    (&scene.drives.rotary, wrap_angle(qt[i] - q[i]))
                };
                let (v, r, _) = drive_step_error(q[i], state.joint_rates[i], err, p, dt);
                out[i] = if i < 3 { v } else { wrap_angle(v) };
                next.joint_rates[i] = r;
            }
            next.joints = RsrJointState::from_array(out);
            rsr_forward_kinematics(&next.joints, &scene.rsr, &state.ring_pose).map(|sol| {
                next.fk_iterations = sol.iterations;
                sol.pose
            })
        }
    };
    let ring = match ring {
        Ok(pose) => pose,
        Err(e) => {
            // Freeze the mechanism; keep following the leader reference.
            let mut frozen = state.clone();
            frozen.tick = next.tick;
            frozen.hc_pose = next.hc_pose;
            frozen.hc_joints = next.hc_joints;
            frozen.teleop = TeleopState { hc_prev: input.pose, rsr_prev: state.last_valid_target, engaged: input.engaged };
            frozen.joint_rates = [0.0; 6];
            frozen.prev_ring_position = state.ring_pose.position;
            frozen.flags = StepFlags { fault: Some(e.to_string()), ..next.flags };
            frozen.stats = next.stats;
            frozen.stats.fault_ticks += 1;
            frozen.force = evaluate(&frozen.contacts, &Vec3::zeros(), &scene.force);
            return frozen;
        }
    };
    if next.fk_iterations > FK_FAST_ITERATIONS {
        next.stats.fk_slow_ticks += 1;
    }
    next.stats.fk_max_iterations = next.stats.fk_max_iterations.max(next.fk_iterations);

    // (5) attachment, (6) contacts, (7) force.
    next.prev_ring_position = state.ring_pose.position;
    next.ring_pose = ring;
    next.distal = attach_distal(&ring, &scene.distal);
    next.contacts = scene_contacts(&scene.proximal, &next.distal);
    let velocity = (ring.position - state.ring_pose.position) / dt;
    next.force = evaluate(&next.contacts, &velocity, &scene.force);
    next
}

/// Owns a scene and its state; convenient for interactive use.
#[derive(Clone, Debug)]
pub struct Engine {
    pub scene: Scene,
    pub state: SimState,
}

impl Engine {
    pub fn new(scene: Scene, hc_pose: Pose) -> Result<Self, KinematicsError> {
        let state = SimState::new(&scene, hc_pose)?;
        Ok(Self { scene, state })
    }

    pub fn step(&mut self, input: &HcInput) -> TrajectorySample {
        self.state = step(&self.state, &self.scene, input);
        self.state.sample(&self.scene)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub samples: Vec<TrajectorySample>,
    pub stats: RunStats,
    /// `(tick, message)` for every forward-kinematics fault.
    pub faults: Vec<(u64, String)>,
}

/// Runs the per-tick inputs in order from the initial leader pose.
pub fn run_inputs(scene: &Scene, initial: Pose, inputs: &[HcInput]) -> Result<RunLog, KinematicsError> {
    let mut state = SimState::new(scene, initial)?;
    let mut log = RunLog { samples: Vec::with_capacity(inputs.len()), ..RunLog::default() };
    for input in inputs {
        state = step(&state, scene, input);
        if let Some(f) = &state.flags.fault {
            log.faults.push((state.tick, f.clone()));
        }
        log.samples.push(state.sample(scene));
    }
    log.stats = state.stats;
    Ok(log)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub max: f64,
    pub mean: f64,
    pub rms: f64,
}

impl ErrorStats {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        Self {
            max: values.iter().copied().fold(0.0, f64::max),
            mean: values.iter().sum::<f64>() / n,
            rms: (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
        }
    }
}

/// Follower tracking error: commanded target versus actual ring pose.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    /// mm
    pub translation: ErrorStats,
    /// deg
    pub rotation: ErrorStats,
    /// Per-tick `actual - target` along x, y, z, mm.
    pub translation_axes: Vec<[f64; 3]>,
    /// Per-tick rotation vector of `target^-1 * actual` in the target frame, deg.
    pub rotation_axes: Vec<[f64; 3]>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("deviation report needs at least one sample")]
pub struct EmptyLog;

pub fn deviation_report(samples: &[TrajectorySample]) -> Result<DeviationReport, EmptyLog> {
    if samples.is_empty() {
        return Err(EmptyLog);
    }
    let mut trans = Vec::with_capacity(samples.len());
    let mut rot = Vec::with_capacity(samples.len());
    let mut report = DeviationReport::default();
    for s in samples {
        let dp = (s.rsr_actual.position - s.rsr_target.position) * crate::geom::MM_PER_M;
        let dr = (s.rsr_target.orientation.inverse() * s.rsr_actual.orientation).scaled_axis();
        trans.push(dp.norm());
        rot.push(s.rsr_target.orientation.angle_to(&s.rsr_actual.orientation).to_degrees());
        report.translation_axes.push([dp.x, dp.y, dp.z]);
        report.rotation_axes.push([dr.x, dr.y, dr.z].map(f64::to_degrees));
    }
    report.translation = ErrorStats::of(&trans);
    report.rotation = ErrorStats::of(&rot);
    Ok(report)
}
