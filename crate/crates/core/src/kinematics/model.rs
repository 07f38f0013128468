//! Link/joint graphs for the two mechanisms and a structural validator.
//!
//! Naming follows the parent-child pattern of the mechanisms:
//!
//! * Ring robot: `L_RSR1` (fixed ring), per arm `L_RSR2_i` (universal cross),
//!   `L_RSR3_i` (lower arm), `L_RSR4_i` (actuator rod), and `L_RSR5` (moving
//!   ring). Joints per arm: `J_RSR.A_i` active revolute, `J_RSR.B_i` passive
//!   revolute (together the universal joint), `J_RSR.C_i` prismatic,
//!   `J_RSR.D_i` spherical.
//! * Haptic device: `L_HC1` (base), per arm `L_HC2_i`..`L_HC5_i` (upper arm,
//!   elbow bar, forearm, effector bar), `L_HC6` (effector plate), and
//!   `L_HC7`..`L_HC9` (wrist). Joints per arm: `J_HC.A_i` active shoulder,
//!   `J_HC.B_i` elbow revolute, `J_HC.C_i`/`J_HC.D_i` forearm universals,
//!   `J_HC.E_i` effector revolute; wrist `J_HC.F`, `J_HC.G`, `J_HC.H`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{HcGeometry, RsrGeometry};
use crate::geom::{Pose, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
    Universal,
    Spherical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    pub local_frame: Pose,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KinematicModel {
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mechanism {
    RingRobot,
    HapticDevice,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    pub mechanism: Mechanism,
    pub arms_detected: usize,
    /// Independent cycles in the link graph.
    pub loops: usize,
    /// For the haptic device: the three delta arms close a loop between
    /// `L_HC1` and `L_HC6`.
    pub delta_loop_closed: bool,
    pub missing: Vec<String>,
    pub extra: Vec<String>,
    pub mismatched: Vec<String>,
    pub dangling: Vec<String>,
}

impl ModelDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.mechanism != Mechanism::Unknown
            && self.arms_detected == 3
            && self.missing.is_empty()
            && self.extra.is_empty()
            && self.mismatched.is_empty()
            && self.dangling.is_empty()
    }
}

struct Expected {
    links: Vec<String>,
    joints: Vec<(String, JointKind, String, String)>,
    /// Joint names per arm, used to count complete arms.
    arms: [Vec<String>; 3],
}

fn rsr_pattern() -> Expected {
    let mut links = vec!["L_RSR1".to_string(), "L_RSR5".to_string()];
    let mut joints = Vec::new();
    let mut arms: [Vec<String>; 3] = Default::default();
    for i in 1..=3 {
        for l in 2..=4 {
            links.push(format!("L_RSR{l}_{i}"));
        }
        let table = [
            ("A", JointKind::Revolute, "L_RSR1".to_string(), format!("L_RSR2_{i}")),
            ("B", JointKind::Revolute, format!("L_RSR2_{i}"), format!("L_RSR3_{i}")),
            ("C", JointKind::Prismatic, format!("L_RSR3_{i}"), format!("L_RSR4_{i}")),
            ("D", JointKind::Spherical, format!("L_RSR4_{i}"), "L_RSR5".to_string()),
        ];
        for (tag, kind, parent, child) in table {
            let name = format!("J_RSR.{tag}_{i}");
            arms[i - 1].push(name.clone());
            joints.push((name, kind, parent, child));
        }
    }
    Expected { links, joints, arms }
}

fn hc_pattern() -> Expected {
    let mut links: Vec<String> = ["L_HC1", "L_HC6", "L_HC7", "L_HC8", "L_HC9"].map(String::from).to_vec();
    let mut joints = Vec::new();
    let mut arms: [Vec<String>; 3] = Default::default();
    for i in 1..=3 {
        for l in 2..=5 {
            links.push(format!("L_HC{l}_{i}"));
        }
        let table = [
            ("A", JointKind::Revolute, "L_HC1".to_string(), format!("L_HC2_{i}")),
            ("B", JointKind::Revolute, format!("L_HC2_{i}"), format!("L_HC3_{i}")),
            ("C", JointKind::Universal, format!("L_HC3_{i}"), format!("L_HC4_{i}")),
            ("D", JointKind::Universal, format!("L_HC4_{i}"), format!("L_HC5_{i}")),
            ("E", JointKind::Revolute, format!("L_HC5_{i}"), "L_HC6".to_string()),
        ];
        for (tag, kind, parent, child) in table {
            let name = format!("J_HC.{tag}_{i}");
            arms[i - 1].push(name.clone());
            joints.push((name, kind, parent, child));
        }
    }
    for (tag, parent, child) in [("F", "L_HC6", "L_HC7"), ("G", "L_HC7", "L_HC8"), ("H", "L_HC8", "L_HC9")] {
        joints.push((format!("J_HC.{tag}"), JointKind::Revolute, parent.into(), child.into()));
    }
    Expected { links, joints, arms }
}

fn build(pattern: Expected, frame: impl Fn(&str) -> Pose) -> KinematicModel {
    KinematicModel {
        links: pattern.links.into_iter().map(|name| Link { name }).collect(),
        joints: pattern
            .joints
            .into_iter()
            .map(|(name, kind, parent, child)| {
                let local_frame = frame(&name);
                Joint { name, kind, parent, child, local_frame }
            })
            .collect(),
    }
}

fn arm_index(name: &str) -> Option<usize> {
    name.rsplit('_').next()?.parse::<usize>().ok().filter(|i| (1..=3).contains(i)).map(|i| i - 1)
}

impl KinematicModel {
    pub fn ring_robot(geom: &RsrGeometry) -> Self {
        build(rsr_pattern(), |name| match (arm_index(name), name.as_bytes().get(6)) {
            (Some(i), Some(b'D')) => Pose::from_translation(geom.moving_anchors[i]),
            (Some(i), _) => Pose::from_translation(geom.fixed_anchors[i]),
            _ => Pose::identity(),
        })
    }

    pub fn haptic_device(geom: &HcGeometry) -> Self {
        build(hc_pattern(), |name| match arm_index(name) {
            Some(i) => {
                let az = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
                Pose::from_translation(Vec3::new(az.cos(), az.sin(), 0.0) * geom.base_radius)
            }
            None => Pose::from_translation(geom.workspace_center),
        })
    }
}

/// Number of independent cycles: edges - vertices + connected components.
fn cycle_rank(vertices: &BTreeSet<&str>, edges: &[(&str, &str)]) -> usize {
    let index: BTreeMap<&str, usize> = vertices.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut parent: Vec<usize> = (0..vertices.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut components = vertices.len();
    let mut used = 0;
    for (a, b) in edges {
        let (Some(&ia), Some(&ib)) = (index.get(a), index.get(b)) else { continue };
        used += 1;
        let (ra, rb) = (find(&mut parent, ia), find(&mut parent, ib));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    (used + components).saturating_sub(vertices.len())
}

pub fn validate_model(model: &KinematicModel) -> ModelDiagnostics {
    let is_hc = model.joints.iter().any(|j| j.name.starts_with("J_HC"));
    let is_rsr = model.joints.iter().any(|j| j.name.starts_with("J_RSR"));
    let (mechanism, pattern) = match (is_rsr, is_hc) {
        (true, false) => (Mechanism::RingRobot, Some(rsr_pattern())),
        (false, true) => (Mechanism::HapticDevice, Some(hc_pattern())),
        _ => (Mechanism::Unknown, None),
    };

    let link_names: BTreeSet<&str> = model.links.iter().map(|l| l.name.as_str()).collect();
    let dangling: Vec<String> = model
        .joints
        .iter()
        .filter(|j| !link_names.contains(j.parent.as_str()) || !link_names.contains(j.child.as_str()))
        .map(|j| j.name.clone())
        .collect();
    let edges: Vec<(&str, &str)> = model.joints.iter().map(|j| (j.parent.as_str(), j.child.as_str())).collect();
    let loops = cycle_rank(&link_names, &edges);

    let mut diag = ModelDiagnostics {
        mechanism,
        arms_detected: 0,
        loops,
        delta_loop_closed: false,
        missing: Vec::new(),
        extra: Vec::new(),
        mismatched: Vec::new(),
        dangling,
    };
    let Some(pattern) = pattern else {
        return diag;
    };

    let present: BTreeMap<&str, &Joint> = model.joints.iter().map(|j| (j.name.as_str(), j)).collect();
    let mut ok_joints = BTreeSet::new();
    for (name, kind, parent, child) in &pattern.joints {
        match present.get(name.as_str()) {
            None => diag.missing.push(name.clone()),
            Some(j) if j.kind != *kind || &j.parent != parent || &j.child != child => diag.mismatched.push(name.clone()),
            Some(_) => {
                ok_joints.insert(name.as_str());
            }
        }
    }
    for l in &pattern.links {
        if !link_names.contains(l.as_str()) {
            diag.missing.push(l.clone());
        }
    }
    let expected_joints: BTreeSet<&str> = pattern.joints.iter().map(|j| j.0.as_str()).collect();
    let expected_links: BTreeSet<&str> = pattern.links.iter().map(String::as_str).collect();
    diag.extra.extend(model.joints.iter().map(|j| &j.name).filter(|n| !expected_joints.contains(n.as_str())).cloned());
    diag.extra.extend(link_names.iter().filter(|n| !expected_links.contains(*n)).map(|n| n.to_string()));
    diag.arms_detected = pattern.arms.iter().filter(|arm| arm.iter().all(|j| ok_joints.contains(j.as_str()))).count();

    if mechanism == Mechanism::HapticDevice {
        let delta_links: BTreeSet<&str> = link_names
            .iter()
            .copied()
            .filter(|n| {
                n.strip_prefix("L_HC")
                    .and_then(|rest| rest.chars().next())
                    .is_some_and(|c| ('1'..='6').contains(&c))
            })
            .collect();
        diag.delta_loop_closed = delta_links.contains("L_HC1")
            && delta_links.contains("L_HC6")
            && cycle_rank(&delta_links, &edges) >= 2;
    }
    diag
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ring_robot_is_valid() {
        let d = validate_model(&KinematicModel::ring_robot(&RsrGeometry::default()));
        assert!(d.is_valid(), "{d:?}");
        assert_eq!(d.mechanism, Mechanism::RingRobot);
        assert_eq!(d.arms_detected, 3);
        // Three parallel legs between the rings: two independent loops.
        assert_eq!(d.loops, 2);
    }

    #[test]
    fn missing_spherical_joint_is_named() {
        let mut m = KinematicModel::ring_robot(&RsrGeometry::default());
        m.joints.retain(|j| j.name != "J_RSR.D_2");
        let d = validate_model(&m);
        assert!(!d.is_valid());
        assert_eq!(d.missing, vec!["J_RSR.D_2".to_string()]);
        assert_eq!(d.arms_detected, 2);
        assert_eq!(d.loops, 1);
    }

    #[test]
    fn wrong_joint_type_and_extra_link_are_reported() {
        let mut m = KinematicModel::ring_robot(&RsrGeometry::default());
        m.joints.iter_mut().find(|j| j.name == "J_RSR.C_1").unwrap().kind = JointKind::Revolute;
        m.links.push(Link { name: "L_RSR9".into() });
        let d = validate_model(&m);
        assert_eq!(d.mismatched, vec!["J_RSR.C_1".to_string()]);
        assert_eq!(d.extra, vec!["L_RSR9".to_string()]);
    }

    #[test]
    fn dangling_joint_is_reported() {
        let mut m = KinematicModel::ring_robot(&RsrGeometry::default());
        m.links.retain(|l| l.name != "L_RSR3_3");
        let d = validate_model(&m);
        assert_eq!(d.dangling, vec!["J_RSR.B_3".to_string(), "J_RSR.C_3".to_string()]);
        assert!(d.missing.contains(&"L_RSR3_3".to_string()));
    }

    #[test]
    fn haptic_device_closes_delta_loop() {
        let d = validate_model(&KinematicModel::haptic_device(&HcGeometry::default()));
        assert!(d.is_valid(), "{d:?}");
        assert_eq!(d.mechanism, Mechanism::HapticDevice);
        assert!(d.delta_loop_closed);
        assert_eq!(d.loops, 2);
    }

    #[test]
    fn broken_delta_arm_opens_a_loop() {
        let mut m = KinematicModel::haptic_device(&HcGeometry::default());
        m.joints.retain(|j| j.name != "J_HC.E_1" && j.name != "J_HC.E_2");
        let d = validate_model(&m);
        assert!(!d.delta_loop_closed);
        assert_eq!(d.arms_detected, 1);
    }

    #[test]
    fn empty_model_is_unknown() {
        let d = validate_model(&KinematicModel::default());
        assert_eq!(d.mechanism, Mechanism::Unknown);
        assert!(!d.is_valid());
    }
}
