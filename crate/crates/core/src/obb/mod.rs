//! Oriented bounding boxes and separating-axis contact queries.
//!
//! Candidate axes are enumerated in a fixed order: the three face normals of
//! the proximal box (indices 0..3), the three of the distal box (3..6), then
//! the nine edge cross products `p_i x d_j` in row-major `(i, j)` order
//! (6..15). Indices stay stable when degenerate cross products are dropped.

pub mod oracle;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Pose, Rotation, Vec3};

/// Cross products shorter than this (near-parallel edges) are not tested.
pub const DEGENERATE_AXIS_NORM: f64 = 1e-8;

/// Overlaps at or below zero count as separated. Overlaps in
/// `[-GRAZING_BAND, GRAZING_BAND]` are grazing contact, where the boolean
/// answer is not numerically meaningful.
pub const GRAZING_BAND: f64 = 1e-9;

const AXIS_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObbLabel {
    ProximalShaft,
    ProximalHead,
    DistalShaft,
    DistalCondyle,
}

impl fmt::Display for ObbLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ObbLabel::ProximalShaft => "proximal_shaft",
            ObbLabel::ProximalHead => "proximal_head",
            ObbLabel::DistalShaft => "distal_shaft",
            ObbLabel::DistalCondyle => "distal_condyle",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ObbError {
    #[error("{label}: axis {index} is not unit length (|a| = {norm})")]
    NotUnit { label: ObbLabel, index: usize, norm: f64 },
    #[error("{label}: axes {i} and {j} are not orthogonal (dot = {dot})")]
    NotOrthogonal { label: ObbLabel, i: usize, j: usize, dot: f64 },
    #[error("{label}: axes are left-handed")]
    LeftHanded { label: ObbLabel },
    #[error("{label}: half-extent {index} must be positive and finite, got {value}")]
    BadExtent { label: ObbLabel, index: usize, value: f64 },
    #[error("{label}: center is not finite")]
    BadCenter { label: ObbLabel },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Vec3,
    pub axes: [Vec3; 3],
    pub half_extents: Vec3,
    pub label: ObbLabel,
}

impl Obb {
    pub fn new(center: Vec3, axes: [Vec3; 3], half_extents: Vec3, label: ObbLabel) -> Result<Self, ObbError> {
        if !center.iter().all(|c| c.is_finite()) {
            return Err(ObbError::BadCenter { label });
        }
        for (index, a) in axes.iter().enumerate() {
            let norm = a.norm();
            if !((norm - 1.0).abs() <= AXIS_TOLERANCE) {
                return Err(ObbError::NotUnit { label, index, norm });
            }
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let dot = axes[i].dot(&axes[j]);
            if !(dot.abs() <= AXIS_TOLERANCE) {
                return Err(ObbError::NotOrthogonal { label, i, j, dot });
            }
        }
        if axes[0].cross(&axes[1]).dot(&axes[2]) < 0.0 {
            return Err(ObbError::LeftHanded { label });
        }
        for (index, &value) in half_extents.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ObbError::BadExtent { label, index, value });
            }
        }
        Ok(Self { center, axes, half_extents, label })
    }

    pub fn from_rotation(center: Vec3, r: &Rotation, half_extents: Vec3, label: ObbLabel) -> Result<Self, ObbError> {
        Self::new(center, r.axes(), half_extents, label)
    }

    pub fn axis_aligned(center: Vec3, half_extents: Vec3, label: ObbLabel) -> Result<Self, ObbError> {
        Self::new(center, [Vec3::x(), Vec3::y(), Vec3::z()], half_extents, label)
    }

    /// The box's own frame as a pose.
    pub fn pose(&self) -> Pose {
        let m = nalgebra::Matrix3::from_columns(&self.axes);
        Pose::new(self.center, Rotation::from_matrix(&m))
    }

    /// This box moved rigidly by `t` (applied in world coordinates).
    pub fn transformed(&self, t: &Pose) -> Obb {
        Obb {
            center: t.transform_point(&self.center),
            axes: self.axes.map(|a| t.orientation.rotate(&a)),
            half_extents: self.half_extents,
            label: self.label,
        }
    }

    pub fn translated(&self, d: &Vec3) -> Obb {
        Obb { center: self.center + d, ..*self }
    }

    /// Corners; bit `k` of the index picks the `+` side along axis `k`.
    pub fn vertices(&self) -> [Vec3; 8] {
        std::array::from_fn(|i| {
            let mut v = self.center;
            for k in 0..3 {
                let sign = if i & (1 << k) != 0 { 1.0 } else { -1.0 };
                v += self.axes[k] * (sign * self.half_extents[k]);
            }
            v
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionInterval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateAxis {
    /// Position in the fixed 15-axis enumeration.
    pub index: usize,
    pub axis: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactResult {
    pub colliding: bool,
    pub depth: f64,
    /// Unit vector pointing from the proximal box towards the distal box;
    /// zero when not colliding.
    pub normal: Vec3,
    pub axis_index: Option<usize>,
    pub pair: (ObbLabel, ObbLabel),
}

impl ContactResult {
    pub fn separated(pair: (ObbLabel, ObbLabel)) -> Self {
        Self { colliding: false, depth: 0.0, normal: Vec3::zeros(), axis_index: None, pair }
    }
}

pub fn candidate_axes(p: &Obb, d: &Obb) -> Vec<CandidateAxis> {
    let mut out = Vec::with_capacity(15);
    for (i, a) in p.axes.iter().chain(d.axes.iter()).enumerate() {
        out.push(CandidateAxis { index: i, axis: *a });
    }
    for i in 0..3 {
        for j in 0..3 {
            let c = p.axes[i].cross(&d.axes[j]);
            let n = c.norm();
            if n >= DEGENERATE_AXIS_NORM {
                out.push(CandidateAxis { index: 6 + 3 * i + j, axis: c / n });
            }
        }
    }
    out
}

/// Half-length of the box's shadow on `axis`.
pub fn project_extent(b: &Obb, axis: &Vec3) -> f64 {
    (0..3).map(|k| b.half_extents[k] * b.axes[k].dot(axis).abs()).sum()
}

pub fn project_interval(b: &Obb, axis: &Vec3) -> ProjectionInterval {
    let c = b.center.dot(axis);
    let e = project_extent(b, axis);
    ProjectionInterval { lo: c - e, hi: c + e }
}

/// Signed overlap of two intervals; negative means a gap.
pub fn axis_overlap(a: &ProjectionInterval, b: &ProjectionInterval) -> f64 {
    a.hi.min(b.hi) - a.lo.max(b.lo)
}

fn overlap_on(p: &Obb, d: &Obb, axis: &Vec3) -> f64 {
    axis_overlap(&project_interval(p, axis), &project_interval(d, axis))
}

/// Separating-axis contact between a proximal box `p` and a distal box `d`.
///
/// Stops at the first separating axis. Otherwise the depth is the smallest
/// overlap, with ties going to the lowest axis index.
pub fn sat_contact(p: &Obb, d: &Obb) -> ContactResult {
    let pair = (p.label, d.label);
    let mut best: Option<(f64, CandidateAxis)> = None;
    for cand in candidate_axes(p, d) {
        let ol = overlap_on(p, d, &cand.axis);
        if ol <= 0.0 {
            return ContactResult::separated(pair);
        }
        if best.is_none_or(|(smallest, _)| ol < smallest) {
            best = Some((ol, cand));
        }
    }
    let (depth, cand) = best.expect("face axes are always tested");
    let normal = if (d.center - p.center).dot(&cand.axis) > 0.0 { cand.axis } else { -cand.axis };
    ContactResult { colliding: true, depth, normal, axis_index: Some(cand.index), pair }
}

/// Smallest overlap over every candidate axis, without early exit. Negative
/// values measure the widest gap found; used to classify grazing pairs.
pub fn smallest_overlap(p: &Obb, d: &Obb) -> f64 {
    candidate_axes(p, d)
        .iter()
        .map(|c| overlap_on(p, d, &c.axis))
        .fold(f64::INFINITY, f64::min)
}

/// One contact per (distal, proximal) pair, distal-major.
pub fn scene_contacts(proximal: &[Obb], distal: &[Obb]) -> Vec<ContactResult> {
    distal
        .iter()
        .flat_map(|d| proximal.iter().map(move |p| sat_contact(p, d)))
        .collect()
}
