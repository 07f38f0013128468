//! Scene configuration: robot geometry, bone boxes, drives, force and
//! teleoperation constants, and the fixed time step.
//!
//! The on-disk format is TOML. Lengths are meters and angles degrees; every
//! length or angle key carries its unit as a suffix (`_m`, `_deg`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::force::ForceParams;
use crate::geom::{euler_to_rotation, EulerAngles, Pose, Rotation, Vec3};
use crate::kinematics::{hc_delta_inverse_kinematics, rsr_inverse_kinematics, HcGeometry, RsrGeometry, WristOrder};
use crate::obb::{Obb, ObbLabel};
use crate::teleop::ScalingConfig;

pub const DEFAULT_SCENE: &str = include_str!("../../../scenes/femur_default.toml");

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SceneError {
    SceneError::Validation { field: field.into(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveParams {
    pub stiffness: f64,
    pub damping: f64,
    pub force_limit: f64,
}

impl DriveParams {
    pub fn validate(&self, field: &str) -> Result<(), SceneError> {
        for (name, v) in [("stiffness", self.stiffness), ("damping", self.damping), ("force_limit", self.force_limit)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{field}.{name}"), format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for DriveParams {
    fn default() -> Self {
        Self { stiffness: 5000.0, damping: 140.0, force_limit: 200.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Drives {
    /// Prismatic actuators (N/m, N*s/m, N).
    pub linear: DriveParams,
    /// Rotary actuators (N*m/rad, N*m*s/rad, N*m).
    pub rotary: DriveParams,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveMode {
    /// Spring-damper servos with unit inertia.
    #[default]
    Servo,
    /// Joints snap to their targets and the ring sits exactly on the command.
    Rigid,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintMode {
    /// Contact force is reported only; it never alters the robot motion.
    #[default]
    None,
    /// The commanded ring pose is pushed out of the proximal boxes before it
    /// reaches inverse kinematics.
    Project,
}

/// A distal box, rigidly attached to the moving ring.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistalBox {
    pub label: ObbLabel,
    /// Box frame in the moving-ring frame.
    pub offset: Pose,
    pub half_extents: Vec3,
}

/// Soft-tissue volume for fluoroscopy: a segment swept by a sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluoroSettings {
    pub width: usize,
    pub height: usize,
    pub mm_per_px: f64,
    pub bone_opacity: f64,
    pub thigh_opacity: f64,
    /// C-arm isocenter, m.
    #[serde(rename = "center_m")]
    pub center: Vec3,
}

impl Default for FluoroSettings {
    fn default() -> Self {
        Self { width: 512, height: 512, mm_per_px: 0.5, bone_opacity: 0.8, thigh_opacity: 0.1, center: Vec3::new(0.0, 0.0, 0.085) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub dt: f64,
    pub rsr: RsrGeometry,
    /// Initial moving-ring pose in the fixed-ring frame.
    pub home: Pose,
    pub hc: HcGeometry,
    pub proximal: Vec<Obb>,
    pub distal: Vec<DistalBox>,
    pub drives: Drives,
    pub drive_mode: DriveMode,
    pub constraint: ConstraintMode,
    pub force: ForceParams,
    pub scaling: ScalingConfig,
    pub thigh: Option<Capsule>,
    pub fluoro: FluoroSettings,
}

impl Scene {
    pub fn default_femur() -> Self {
        load_scene(DEFAULT_SCENE).expect("shipped scene is valid")
    }

    /// Distal boxes in world coordinates for a given ring pose.
    pub fn distal_boxes(&self, ring: &Pose) -> Vec<Obb> {
        attach_distal(ring, &self.distal)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        self.rsr.validate().map_err(|e| invalid("rsr", e.to_string()))?;
        self.hc.validate().map_err(|e| invalid("hc", e.to_string()))?;
        rsr_inverse_kinematics(&self.home, &self.rsr).map_err(|e| invalid("rsr.home", e.to_string()))?;
        hc_delta_inverse_kinematics(&Vec3::zeros(), &self.hc).map_err(|e| invalid("hc", e.to_string()))?;
        self.drives.linear.validate("drives.linear")?;
        self.drives.rotary.validate("drives.rotary")?;
        self.force.validate().map_err(|e| invalid("force", e.to_string()))?;
        if !self.scaling.is_valid() {
            return Err(invalid("teleop", "max_v and max_w must be positive"));
        }
        let proximal_labels = [ObbLabel::ProximalShaft, ObbLabel::ProximalHead];
        for b in &self.proximal {
            if !proximal_labels.contains(&b.label) {
                return Err(invalid(format!("proximal.{}", b.label), "label belongs to the distal fragment"));
            }
        }
        for b in &self.distal {
            if proximal_labels.contains(&b.label) {
                return Err(invalid(format!("distal.{}", b.label), "label belongs to the proximal fragment"));
            }
            Obb::from_rotation(Vec3::zeros(), &b.offset.orientation, b.half_extents, b.label)
                .map_err(|e| invalid(format!("distal.{}", b.label), e.to_string()))?;
        }
        if let Some(t) = &self.thigh {
            if !(t.radius > 0.0) {
                return Err(invalid("thigh.radius_m", "must be positive"));
            }
        }
        let f = &self.fluoro;
        if f.width == 0 || f.height == 0 || !(f.mm_per_px > 0.0) {
            return Err(invalid("fluoro", "image size and pixel pitch must be positive"));
        }
        for (name, v) in [("bone_opacity", f.bone_opacity), ("thigh_opacity", f.thigh_opacity)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("fluoro.{name}"), "must be in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// World-frame distal boxes: `ring * offset` for each attachment.
pub fn attach_distal(ring: &Pose, offsets: &[DistalBox]) -> Vec<Obb> {
    offsets
        .iter()
        .map(|b| {
            let world = *ring * b.offset;
            Obb {
                center: world.position,
                axes: world.orientation.axes(),
                half_extents: b.half_extents,
                label: b.label,
            }
        })
        .collect()
}

// On-disk layout.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    dt: f64,
    #[serde(default)]
    engine: EngineFile,
    #[serde(default)]
    teleop: Option<ScalingConfig>,
    #[serde(default)]
    force: Option<ForceFile>,
    #[serde(default)]
    drives: Option<Drives>,
    rsr: RsrFile,
    hc: HcFile,
    proximal: Vec<BoxFile>,
    distal: Vec<BoxFile>,
    #[serde(default)]
    thigh: Option<CapsuleFile>,
    #[serde(default)]
    fluoro: Option<FluoroSettings>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EngineFile {
    #[serde(default)]
    drive_mode: DriveMode,
    #[serde(default)]
    constraint: ConstraintMode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ForceFile {
    k: f64,
    c: f64,
    #[serde(default)]
    f_max: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RsrFile {
    fixed_anchors_m: [[f64; 3]; 3],
    moving_anchors_m: [[f64; 3]; 3],
    rotary_axes: [[f64; 3]; 3],
    actuator_min_m: f64,
    actuator_max_m: f64,
    home_position_m: [f64; 3],
    #[serde(default)]
    home_euler_deg: [f64; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HcFile {
    base_radius_m: f64,
    effector_radius_m: f64,
    upper_arm_m: f64,
    forearm_m: f64,
    workspace_center_m: [f64; 3],
    #[serde(default)]
    wrist_order: WristOrder,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxFile {
    label: ObbLabel,
    center_m: [f64; 3],
    half_extents_m: [f64; 3],
    #[serde(default)]
    euler_deg: Option<[f64; 3]>,
    /// Explicit box axes (rows), as an alternative to `euler_deg`.
    #[serde(default)]
    axes: Option<[[f64; 3]; 3]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CapsuleFile {
    a_m: [f64; 3],
    b_m: [f64; 3],
    radius_m: f64,
}

fn euler_deg(e: [f64; 3]) -> Rotation {
    euler_to_rotation(EulerAngles::from_degrees(e[0], e[1], e[2]))
}

fn box_axes(b: &BoxFile, field: &str) -> Result<[Vec3; 3], SceneError> {
    match (b.euler_deg, b.axes) {
        (Some(_), Some(_)) => Err(invalid(field, "give either euler_deg or axes, not both")),
        (None, Some(a)) => Ok(a.map(Vec3::from)),
        (e, None) => Ok(euler_deg(e.unwrap_or_default()).axes()),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Parses and validates a scene. Errors name the offending line or field.
pub fn load_scene(text: &str) -> Result<Scene, SceneError> {
    let file: SceneFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        SceneError::Parse { line, column, message: e.message().to_string() }
    })?;

    let rsr = RsrGeometry {
        fixed_anchors: file.rsr.fixed_anchors_m.map(Vec3::from),
        moving_anchors: file.rsr.moving_anchors_m.map(Vec3::from),
        actuator_min: file.rsr.actuator_min_m,
        actuator_max: file.rsr.actuator_max_m,
        rotary_axes: file.rsr.rotary_axes.map(Vec3::from),
    };
    let home = Pose::new(Vec3::from(file.rsr.home_position_m), euler_deg(file.rsr.home_euler_deg));
    let hc = HcGeometry {
        base_radius: file.hc.base_radius_m,
        effector_radius: file.hc.effector_radius_m,
        upper_arm: file.hc.upper_arm_m,
        forearm: file.hc.forearm_m,
        workspace_center: Vec3::from(file.hc.workspace_center_m),
        wrist_order: file.hc.wrist_order,
    };

    let mut proximal = Vec::new();
    for b in &file.proximal {
        let field = format!("proximal.{}", b.label);
        let axes = box_axes(b, &field)?;
        let obb = Obb::new(Vec3::from(b.center_m), axes, Vec3::from(b.half_extents_m), b.label)
            .map_err(|e| invalid(&field, e.to_string()))?;
        proximal.push(obb);
    }
    let mut distal = Vec::new();
    for b in &file.distal {
        let field = format!("distal.{}", b.label);
        let axes = box_axes(b, &field)?;
        // Validate the frame before turning it into a rotation.
        Obb::new(Vec3::from(b.center_m), axes, Vec3::from(b.half_extents_m), b.label)
            .map_err(|e| invalid(&field, e.to_string()))?;
        let rot = Rotation::from_matrix(&nalgebra::Matrix3::from_columns(&axes));
        distal.push(DistalBox {
            label: b.label,
            offset: Pose::new(Vec3::from(b.center_m), rot),
            half_extents: Vec3::from(b.half_extents_m),
        });
    }

    let scene = Scene {
        dt: file.dt,
        rsr,
        home,
        hc,
        proximal,
        distal,
        drives: file.drives.unwrap_or_default(),
        drive_mode: file.engine.drive_mode,
        constraint: file.engine.constraint,
        force: file.force.map_or_else(ForceParams::default, |f| ForceParams { k: f.k, c: f.c, f_max: f.f_max }),
        scaling: file.teleop.unwrap_or_default(),
        thigh: file.thigh.map(|t| Capsule { a: Vec3::from(t.a_m), b: Vec3::from(t.b_m), radius: t.radius_m }),
        fluoro: file.fluoro.unwrap_or_default(),
    };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn replace(from: &str, to: &str) -> String {
        assert!(DEFAULT_SCENE.contains(from), "fixture drifted: {from}");
        DEFAULT_SCENE.replacen(from, to, 1)
    }

    #[test]
    fn shipped_scene_loads() {
        let s = load_scene(DEFAULT_SCENE).unwrap();
        assert_eq!(s.dt, 0.001);
        assert_eq!(s.proximal.len(), 2);
        assert_eq!(s.distal.len(), 2);
        assert_eq!(s.force.k, 1000.0);
        assert_eq!(s.force.c, 10.0);
        assert_eq!(s.scaling, ScalingConfig::default());
        assert_eq!(s.drives, Drives::default());
        assert_eq!(s.constraint, ConstraintMode::None);
        assert_eq!(s.drive_mode, DriveMode::Servo);
    }

    #[test]
    fn zero_dt_is_rejected() {
        let err = load_scene(&replace("dt = 0.001", "dt = 0.0")).unwrap_err();
        assert!(matches!(err, SceneError::Validation { ref field, .. } if field == "dt"), "{err}");
    }

    #[test]
    fn skewed_axes_name_the_box() {
        let text = replace(
            "center_m = [0.025, 0.0, -0.12]\neuler_deg = [0.0, 0.0, 0.0]",
            "center_m = [0.025, 0.0, -0.12]\naxes = [[1.0, 0.0, 0.0], [0.6, 0.8, 0.0], [0.0, 0.0, 1.0]]",
        );
        match load_scene(&text).unwrap_err() {
            SceneError::Validation { field, message } => {
                assert_eq!(field, "proximal.proximal_head");
                assert!(message.contains("orthogonal"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let text = replace("dt = 0.001", "dt = = 0.001");
        match load_scene(&text).unwrap_err() {
            SceneError::Parse { line, .. } => assert!(line >= 1),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = replace("dt = 0.001", "dt = 0.001\nbogus = 3");
        match load_scene(&text).unwrap_err() {
            SceneError::Parse { line, message, .. } => {
                assert!(message.contains("bogus"), "{message}");
                assert!(line > 1);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unreachable_home_is_rejected() {
        let text = replace("home_position_m = [0.0, 0.0, 0.2]", "home_position_m = [0.0, 0.0, 0.9]");
        assert!(matches!(load_scene(&text), Err(SceneError::Validation { field, .. }) if field == "rsr.home"));
    }

    #[test]
    fn attach_examples() {
        let s = Scene::default_femur();
        let at_home = attach_distal(&Pose::identity(), &s.distal);
        for (b, o) in at_home.iter().zip(&s.distal) {
            assert_eq!(b.center, o.offset.position);
        }
        let shifted = attach_distal(&Pose::from_translation(Vec3::new(0.01, 0.0, 0.0)), &s.distal);
        for (a, b) in at_home.iter().zip(&shifted) {
            assert!((b.center - a.center - Vec3::new(0.01, 0.0, 0.0)).norm() < 1e-15);
        }
        let quarter = Pose::new(Vec3::zeros(), Rotation::from_axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2));
        let turned = attach_distal(&quarter, &s.distal);
        for (t, o) in turned.iter().zip(&s.distal) {
            let oracle = crate::geom::pose_compose(&quarter, &o.offset);
            assert!((t.center - oracle.position).norm() < 1e-15);
            for (axis, expected) in t.axes.iter().zip(oracle.orientation.axes()) {
                assert!((axis - expected).norm() < 1e-15);
            }
        }
    }
}
