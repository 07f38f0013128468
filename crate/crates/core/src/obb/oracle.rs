//! Independent box-box intersection test used to cross-check the SAT query.
//!
//! Two convex polytopes with volume intersect iff some edge of one meets the
//! other (every vertex of the intersection polytope lies on an edge of one of
//! the inputs). Each edge is clipped against the other box's slabs in that
//! box's local frame, so nothing here shares code with the axis projections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{sat_contact, smallest_overlap, Obb, ObbLabel, GRAZING_BAND};
use crate::geom::{Rotation, Vec3};

/// Clips the segment `a -> b` against `obb`; true when any part lies inside
/// (closed box).
pub fn segment_hits_box(a: &Vec3, b: &Vec3, obb: &Obb) -> bool {
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for k in 0..3 {
        let axis = obb.axes[k];
        let start = (a - obb.center).dot(&axis);
        let delta = (b - a).dot(&axis);
        let h = obb.half_extents[k];
        if delta.abs() < 1e-300 {
            if start < -h || start > h {
                return false;
            }
            continue;
        }
        let mut ta = (-h - start) / delta;
        let mut tb = (h - start) / delta;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}

fn any_edge_hits(a: &Obb, b: &Obb) -> bool {
    let v = a.vertices();
    a_edges().iter().any(|&(i, j)| segment_hits_box(&v[i], &v[j], b))
}

/// Vertex index pairs of the 12 box edges, vertices ordered as in
/// [`Obb::vertices`] (bit k of the index selects the sign along axis k).
fn a_edges() -> [(usize, usize); 12] {
    let mut out = [(0, 0); 12];
    let mut n = 0;
    for i in 0..8usize {
        for k in 0..3 {
            let j = i | (1 << k);
            if j != i {
                out[n] = (i, j);
                n += 1;
            }
        }
    }
    out
}

/// True when the two closed boxes share at least one point.
pub fn boxes_intersect(a: &Obb, b: &Obb) -> bool {
    any_edge_hits(a, b) || any_edge_hits(b, a)
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    use nalgebra::{Quaternion, UnitQuaternion};
    use std::f64::consts::TAU;
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = Quaternion::new(
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
        b * (TAU * u3).cos(),
    );
    Rotation::from_quaternion(UnitQuaternion::new_normalize(q))
}

/// A random box with center uniform in a cube of side `cube`, uniform
/// rotation, and half-extents uniform in `[min_half, max_half]`.
pub fn random_obb<R: Rng + ?Sized>(
    rng: &mut R,
    cube: f64,
    min_half: f64,
    max_half: f64,
    label: ObbLabel,
) -> Obb {
    let c = Vec3::new(
        rng.random_range(-cube / 2.0..cube / 2.0),
        rng.random_range(-cube / 2.0..cube / 2.0),
        rng.random_range(-cube / 2.0..cube / 2.0),
    );
    let r = random_rotation(rng);
    let w = Vec3::new(
        rng.random_range(min_half..max_half),
        rng.random_range(min_half..max_half),
        rng.random_range(min_half..max_half),
    );
    Obb::from_rotation(c, &r, w, label).expect("sampled box is valid")
}

/// One sampled pair on which the SAT query and the oracle were compared.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FuzzRecord {
    pub index: usize,
    pub sat: bool,
    pub oracle: bool,
    pub smallest_overlap: f64,
    pub proximal: Obb,
    pub distal: Obb,
}

impl FuzzRecord {
    /// Near-touching pairs, where either answer is acceptable.
    pub fn grazing(&self) -> bool {
        self.smallest_overlap.abs() <= GRAZING_BAND
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FuzzReport {
    pub pairs: usize,
    pub colliding: usize,
    /// Disagreements outside the grazing band.
    pub disagreements: Vec<FuzzRecord>,
    pub grazing_disagreements: usize,
}

/// Side of the cube holding the sampled centers, m.
pub const FUZZ_CUBE: f64 = 0.5;
/// Half-extent sampling range, m.
pub const FUZZ_HALF_EXTENTS: (f64, f64) = (0.01, 0.2);

/// Compares [`sat_contact`] with [`boxes_intersect`] on `n` seeded pairs.
pub fn fuzz_pairs(n: usize, seed: u64) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = FUZZ_HALF_EXTENTS;
    let mut report = FuzzReport { pairs: n, ..FuzzReport::default() };
    for index in 0..n {
        let p = random_obb(&mut rng, FUZZ_CUBE, lo, hi, ObbLabel::ProximalShaft);
        let d = random_obb(&mut rng, FUZZ_CUBE, lo, hi, ObbLabel::DistalShaft);
        let sat = sat_contact(&p, &d).colliding;
        let oracle = boxes_intersect(&p, &d);
        report.colliding += usize::from(sat);
        if sat != oracle {
            let rec = FuzzRecord { index, sat, oracle, smallest_overlap: smallest_overlap(&p, &d), proximal: p, distal: d };
            if rec.grazing() {
                report.grazing_disagreements += 1;
            } else {
                report.disagreements.push(rec);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(center: Vec3, h: f64) -> Obb {
        Obb::axis_aligned(center, Vec3::repeat(h), ObbLabel::ProximalShaft).unwrap()
    }

    #[test]
    fn edge_table_is_the_twelve_box_edges() {
        let e = a_edges();
        assert_eq!(e.len(), 12);
        for (i, j) in e {
            assert_eq!((i ^ j).count_ones(), 1);
        }
    }

    #[test]
    fn overlapping_and_separated_cubes() {
        assert!(boxes_intersect(&cube(Vec3::zeros(), 1.0), &cube(Vec3::new(1.5, 0.0, 0.0), 1.0)));
        assert!(!boxes_intersect(&cube(Vec3::zeros(), 1.0), &cube(Vec3::new(3.0, 0.0, 0.0), 1.0)));
    }

    #[test]
    fn containment_is_intersection() {
        assert!(boxes_intersect(&cube(Vec3::zeros(), 1.0), &cube(Vec3::new(0.1, 0.0, 0.0), 0.2)));
        assert!(boxes_intersect(&cube(Vec3::new(0.1, 0.0, 0.0), 0.2), &cube(Vec3::zeros(), 1.0)));
    }

    #[test]
    fn edge_crossing_without_vertex_containment() {
        // A thin bar passing straight through a cube: no vertex of either
        // box lies inside the other.
        let bar = Obb::axis_aligned(Vec3::zeros(), Vec3::new(3.0, 0.1, 0.1), ObbLabel::DistalShaft).unwrap();
        let c = cube(Vec3::zeros(), 1.0);
        assert!(c.vertices().iter().all(|v| !segment_hits_box(v, v, &bar)));
        assert!(boxes_intersect(&bar, &c));
    }

    #[test]
    fn fuzz_campaign_is_seeded() {
        let a = fuzz_pairs(500, 42);
        let b = fuzz_pairs(500, 42);
        assert_eq!(a, b);
        assert!(a.disagreements.is_empty(), "{:?}", a.disagreements.first());
        assert!(a.colliding > 0 && a.colliding < 500);
        assert_ne!(fuzz_pairs(500, 43).colliding, 0);
    }
}
