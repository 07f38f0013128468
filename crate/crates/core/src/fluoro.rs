//! Parallel-beam fluoroscopy: scene shapes projected onto the C-arm image
//! plane with additive opacity, plus vector outlines for an overlay.
//!
//! Image basis for a C-arm rotation `R`: columns run along `R x`, rows
//! upward along `R z`, and the beam travels along `R y`. With zero angles
//! the beam is world +y.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geom::{euler_to_rotation, EulerAngles, Pose, Rotation, Vec3, MM_PER_M};
use crate::obb::Obb;
use crate::scene::{Capsule, FluoroSettings, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CArmPose {
    pub rotation: Rotation,
    /// Isocenter, m; maps to the image center.
    pub center: Vec3,
}

impl CArmPose {
    pub fn new(rotation: Rotation, center: Vec3) -> Self {
        Self { rotation, center }
    }

    pub fn from_euler_deg(angles: [f64; 3], center: Vec3) -> Self {
        Self::new(euler_to_rotation(EulerAngles::from_degrees(angles[0], angles[1], angles[2])), center)
    }

    pub fn beam(&self) -> Vec3 {
        self.rotation.rotate(&Vec3::y())
    }

    /// Image-plane coordinates of a world point, mm.
    pub fn project(&self, p: &Vec3) -> [f64; 2] {
        let d = (p - self.center) * MM_PER_M;
        [d.dot(&self.rotation.rotate(&Vec3::x())), d.dot(&self.rotation.rotate(&Vec3::z()))]
    }
}

/// Rotates the C-arm by `delta` about world axes; the isocenter stays put.
pub fn set_carm(current: &CArmPose, delta: EulerAngles) -> CArmPose {
    CArmPose { rotation: euler_to_rotation(delta) * current.rotation, center: current.center }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Box(Obb),
    Capsule(Capsule),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluoroObject {
    pub label: String,
    pub shape: Shape,
    pub opacity: f64,
}

/// A world segment drawn only in the overlay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayLine {
    pub label: String,
    pub a: Vec3,
    pub b: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub label: String,
    pub closed: bool,
    /// Image-plane points, mm.
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluoroImage {
    pub width: usize,
    pub height: usize,
    pub mm_per_px: f64,
    /// Row-major, row 0 at the top, values in `[0, 1]`.
    pub intensity: Vec<f64>,
    pub overlay: Vec<Polyline>,
}

/// Convex hull, counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn inside_convex(hull: &[[f64; 2]], p: [f64; 2]) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
    })
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let u = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (ap[0] - u * ab[0]).hypot(ap[1] - u * ab[1])
}

struct Grid {
    width: usize,
    height: usize,
    pitch: f64,
}

impl Grid {
    fn center(&self, col: usize, row: usize) -> [f64; 2] {
        [
            (col as f64 + 0.5 - self.width as f64 / 2.0) * self.pitch,
            (self.height as f64 / 2.0 - row as f64 - 0.5) * self.pitch,
        ]
    }

    /// Pixel ranges whose centers may fall in the given mm bounds.
    fn span(&self, lo: [f64; 2], hi: [f64; 2]) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let col = |u: f64| u / self.pitch + self.width as f64 / 2.0 - 0.5;
        let row = |v: f64| self.height as f64 / 2.0 - v / self.pitch - 0.5;
        let clip = |a: f64, b: f64, n: usize| {
            let a = a.floor().max(0.0);
            let b = (b.ceil() + 1.0).min(n as f64);
            (a < b).then_some(a as usize..b as usize)
        };
        Some((clip(col(lo[0]), col(hi[0]), self.width)?, clip(row(hi[1]), row(lo[1]), self.height)?))
    }
}

fn bounds(points: &[[f64; 2]], pad: f64) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k] - pad);
            hi[k] = hi[k].max(p[k] + pad);
        }
    }
    (lo, hi)
}

/// Renders the objects as seen by the C-arm.
pub fn capture(
    objects: &[FluoroObject],
    lines: &[OverlayLine],
    carm: &CArmPose,
    width: usize,
    height: usize,
    mm_per_px: f64,
) -> FluoroImage {
    let grid = Grid { width, height, pitch: mm_per_px };
    let mut intensity = vec![0.0; width * height];
    let mut overlay = Vec::new();
    for obj in objects {
        let mut paint = |pts: &[[f64; 2]], pad: f64, covers: &dyn Fn([f64; 2]) -> bool| {
            let (lo, hi) = bounds(pts, pad);
            if let Some((cols, rows)) = grid.span(lo, hi) {
                for r in rows {
                    for c in cols.clone() {
                        if covers(grid.center(c, r)) {
                            intensity[r * width + c] += obj.opacity;
                        }
                    }
                }
            }
        };
        match &obj.shape {
            Shape::Box(b) => {
                let pts: Vec<[f64; 2]> = b.vertices().iter().map(|v| carm.project(v)).collect();
                let hull = convex_hull(&pts);
                paint(&hull, 0.0, &|p| inside_convex(&hull, p));
                overlay.push(Polyline { label: obj.label.clone(), closed: true, points: hull });
            }
            Shape::Capsule(cap) => {
                let (a, b) = (carm.project(&cap.a), carm.project(&cap.b));
                let r = cap.radius * MM_PER_M;
                paint(&[a, b], r, &|p| segment_distance(p, a, b) <= r);
            }
        }
    }
    for v in &mut intensity {
        *v = v.clamp(0.0, 1.0);
    }
    for l in lines {
        overlay.push(Polyline { label: l.label.clone(), closed: false, points: vec![carm.project(&l.a), carm.project(&l.b)] });
    }
    FluoroImage { width, height, mm_per_px, intensity, overlay }
}

/// Proximal and distal boxes at the given ring pose, plus the thigh.
pub fn scene_objects(scene: &Scene, ring: &Pose) -> Vec<FluoroObject> {
    let bone = scene.fluoro.bone_opacity;
    let mut out: Vec<FluoroObject> = scene
        .proximal
        .iter()
        .chain(scene.distal_boxes(ring).iter())
        .map(|b| FluoroObject { label: b.label.to_string(), shape: Shape::Box(*b), opacity: bone })
        .collect();
    if let Some(t) = scene.thigh {
        out.push(FluoroObject { label: "thigh".into(), shape: Shape::Capsule(t), opacity: scene.fluoro.thigh_opacity });
    }
    out
}

/// The robot legs, fixed-ring anchor to moving-ring anchor.
pub fn rsr_legs(scene: &Scene, ring: &Pose) -> Vec<OverlayLine> {
    (0..3)
        .map(|i| OverlayLine {
            label: format!("rsr_leg_{}", i + 1),
            a: scene.rsr.fixed_anchors[i],
            b: ring.transform_point(&scene.rsr.moving_anchors[i]),
        })
        .collect()
}

/// Full frame of the scene with the ring at `ring`.
pub fn capture_scene(scene: &Scene, ring: &Pose, carm: &CArmPose) -> FluoroImage {
    let FluoroSettings { width, height, mm_per_px, .. } = scene.fluoro;
    capture(&scene_objects(scene, ring), &rsr_legs(scene, ring), carm, width, height, mm_per_px)
}

impl FluoroImage {
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.intensity[row * self.width + col]
    }

    /// Binary 8-bit PGM.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.intensity.iter().map(|&v| (v * 255.0).round() as u8));
        out
    }

    /// Block-averaged 8-bit raster, `factor` pixels per side per block.
    pub fn downsample(&self, factor: usize) -> (usize, usize, Vec<u8>) {
        let f = factor.max(1);
        let (w, h) = (self.width.div_ceil(f), self.height.div_ceil(f));
        let mut data = Vec::with_capacity(w * h);
        for br in 0..h {
            for bc in 0..w {
                let (mut sum, mut n) = (0.0, 0);
                for r in br * f..((br + 1) * f).min(self.height) {
                    for c in bc * f..((bc + 1) * f).min(self.width) {
                        sum += self.at(c, r);
                        n += 1;
                    }
                }
                data.push((sum / n as f64 * 255.0).round() as u8);
            }
        }
        (w, h, data)
    }

    /// Overlay outlines as an SVG document in image pixels.
    pub fn overlay_svg(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = self.width,
            h = self.height
        );
        for p in &self.overlay {
            let pts: Vec<String> = p
                .points
                .iter()
                .map(|q| {
                    let x = q[0] / self.mm_per_px + self.width as f64 / 2.0;
                    let y = self.height as f64 / 2.0 - q[1] / self.mm_per_px;
                    format!("{x:.3},{y:.3}")
                })
                .collect();
            let tag = if p.closed { "polygon" } else { "polyline" };
            let _ = writeln!(s, r#"  <{tag} data-label="{}" fill="none" stroke="white" points="{}"/>"#, p.label, pts.join(" "));
        }
        s.push_str("</svg>\n");
        s
    }

    /// Bounding box `(width, height)` in mm of the overlay outlines whose
    /// label passes `keep`.
    pub fn outline_extent(&self, keep: impl Fn(&str) -> bool) -> Option<[f64; 2]> {
        let pts: Vec<[f64; 2]> =
            self.overlay.iter().filter(|p| keep(&p.label)).flat_map(|p| p.points.iter().copied()).collect();
        if pts.is_empty() {
            return None;
        }
        let (lo, hi) = bounds(&pts, 0.0);
        Some([hi[0] - lo[0], hi[1] - lo[1]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obb::ObbLabel;
    use proptest::prelude::*;

    /// Beam along world +z; image rows run along world -y.
    fn top_view() -> CArmPose {
        CArmPose::from_euler_deg([90.0, 0.0, 0.0], Vec3::zeros())
    }

    fn boxed(center: Vec3, half: Vec3, opacity: f64) -> FluoroObject {
        FluoroObject {
            label: "box".into(),
            shape: Shape::Box(Obb::axis_aligned(center, half, ObbLabel::ProximalShaft).unwrap()),
            opacity,
        }
    }

    #[test]
    fn set_carm_examples() {
        let c = CArmPose::from_euler_deg([10.0, 20.0, 30.0], Vec3::new(0.0, 0.0, 0.1));
        let same = set_carm(&c, EulerAngles::new(0.0, 0.0, 0.0));
        assert!(same.rotation.angle_to(&c.rotation) < 1e-15);
        let yaw = EulerAngles::from_degrees(0.0, 0.0, 45.0);
        let twice = set_carm(&set_carm(&CArmPose::new(Rotation::identity(), Vec3::zeros()), yaw), yaw);
        let ninety = euler_to_rotation(EulerAngles::from_degrees(0.0, 0.0, 90.0));
        assert!(twice.rotation.angle_to(&ninety) < 1e-12);
        assert_eq!(twice.center, Vec3::zeros());
    }

    proptest! {
        #[test]
        fn set_carm_matches_pose_composition(
            a in prop::array::uniform3(-3.0..3.0f64),
            d in prop::array::uniform3(-3.0..3.0f64),
        ) {
            let c = CArmPose::new(euler_to_rotation(EulerAngles::new(a[0], a[1], a[2])), Vec3::new(0.1, 0.2, 0.3));
            let delta = EulerAngles::new(d[0], d[1], d[2]);
            let oracle = crate::geom::pose_compose(
                &Pose::new(Vec3::zeros(), euler_to_rotation(delta)),
                &Pose::new(Vec3::zeros(), c.rotation),
            );
            let got = set_carm(&c, delta);
            prop_assert!(got.rotation.angle_to(&oracle.orientation) < 1e-12);
            prop_assert_eq!(got.center, c.center);
        }
    }

    #[test]
    fn empty_scene_is_black() {
        let img = capture(&[], &[], &top_view(), 64, 32, 0.5);
        assert_eq!(img.intensity.len(), 64 * 32);
        assert!(img.intensity.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn box_area_matches_silhouette() {
        let (a, b, c) = (0.0123, 0.0207, 0.05);
        let img = capture(&[boxed(Vec3::zeros(), Vec3::new(a, b, c), 0.8)], &[], &top_view(), 512, 512, 0.5);
        let covered = img.intensity.iter().filter(|&&v| v > 0.0).count() as f64;
        let analytic = (2.0 * a * 1000.0) * (2.0 * b * 1000.0) / 0.25;
        assert!((covered - analytic).abs() / analytic < 0.02, "{covered} vs {analytic}");
        assert!(img.intensity.iter().all(|&v| v == 0.0 || v == 0.8));
    }

    #[test]
    fn opacity_adds_then_clamps() {
        let thigh = FluoroObject {
            label: "thigh".into(),
            shape: Shape::Capsule(Capsule { a: Vec3::new(0.0, -0.1, 0.0), b: Vec3::new(0.0, 0.1, 0.0), radius: 0.04 }),
            opacity: 0.1,
        };
        let bone = boxed(Vec3::zeros(), Vec3::new(0.01, 0.01, 0.01), 0.8);
        let img = capture(&[thigh.clone(), bone.clone()], &[], &top_view(), 256, 256, 0.5);
        // Image center: both; 25 mm off axis: thigh only.
        assert!((img.at(128, 128) - 0.9).abs() < 1e-15);
        assert!((img.at(128 + 50, 128) - 0.1).abs() < 1e-15);
        assert_eq!(img.at(0, 0), 0.0);
        let many = vec![bone; 5];
        let img = capture(&many, &[], &top_view(), 64, 64, 0.5);
        assert_eq!(img.at(32, 32), 1.0);
    }

    #[test]
    fn hull_of_square_with_inner_points() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(inside_convex(&h, [0.5, 0.5]));
        assert!(!inside_convex(&h, [1.5, 0.5]));
    }

    #[test]
    fn lateral_view_swaps_widths() {
        let scene = Scene::default_femur();
        let ap = capture_scene(&scene, &scene.home, &CArmPose::from_euler_deg([0.0; 3], scene.fluoro.center));
        let lat = capture_scene(&scene, &scene.home, &CArmPose::from_euler_deg([0.0, 0.0, 90.0], scene.fluoro.center));
        let bone = |l: &str| l.starts_with("proximal") || l.starts_with("distal");
        let (a, l) = (ap.outline_extent(bone).unwrap(), lat.outline_extent(bone).unwrap());
        // Bone is wider in x than in y; the long axis stays vertical.
        assert!((a[0] - 95.0).abs() < 1e-9, "{a:?}");
        assert!((l[0] - 60.0).abs() < 1e-9, "{l:?}");
        assert!((a[1] - l[1]).abs() < 1e-9);
        assert_eq!(ap.overlay.iter().filter(|p| p.label.starts_with("rsr_leg")).count(), 3);
    }

    #[test]
    fn adding_an_object_never_darkens() {
        let scene = Scene::default_femur();
        let carm = CArmPose::from_euler_deg([0.0, 15.0, 30.0], scene.fluoro.center);
        let objs = scene_objects(&scene, &scene.home);
        let fewer = capture(&objs[..2], &[], &carm, 128, 128, 2.0);
        let more = capture(&objs, &[], &carm, 128, 128, 2.0);
        assert!(fewer.intensity.iter().zip(&more.intensity).all(|(a, b)| b >= a));
    }

    #[test]
    fn pgm_and_svg_shape() {
        let img = capture(&[boxed(Vec3::zeros(), Vec3::new(0.01, 0.01, 0.01), 1.0)], &[], &top_view(), 8, 4, 10.0);
        let pgm = img.to_pgm();
        assert!(pgm.starts_with(b"P5\n8 4\n255\n"));
        assert_eq!(pgm.len(), b"P5\n8 4\n255\n".len() + 32);
        let svg = img.overlay_svg();
        assert!(svg.contains("<polygon data-label=\"box\""));
        let (w, h, data) = img.downsample(4);
        assert_eq!((w, h, data.len()), (2, 1, 2));
    }

    fn arb_rotation() -> impl Strategy<Value = Rotation> {
        prop::array::uniform3(-3.1..3.1f64).prop_map(|e| euler_to_rotation(EulerAngles::new(e[0], e[1], e[2])))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn rotating_scene_and_carm_together_is_invisible(q in arb_rotation(), c in arb_rotation()) {
            let scene = Scene::default_femur();
            let iso = scene.fluoro.center;
            let objs = scene_objects(&scene, &scene.home);
            let spin = |p: &Vec3| q.rotate(&(p - iso)) + iso;
            let turned: Vec<FluoroObject> = objs.iter().map(|o| {
                let shape = match o.shape {
                    Shape::Box(b) => Shape::Box(b.transformed(&Pose::new(iso - q.rotate(&iso), q))),
                    Shape::Capsule(k) => Shape::Capsule(Capsule { a: spin(&k.a), b: spin(&k.b), radius: k.radius }),
                };
                FluoroObject { shape, ..o.clone() }
            }).collect();
            let carm = CArmPose::new(c, iso);
            let carm_turned = CArmPose::new(q * c, iso);
            let a = capture(&objs, &[], &carm, 128, 128, 2.0);
            let b = capture(&turned, &[], &carm_turned, 128, 128, 2.0);
            let same = a.intensity.iter().zip(&b.intensity).filter(|(x, y)| (*x - *y).abs() < 1e-9).count();
            prop_assert!(same as f64 >= 0.99 * a.intensity.len() as f64, "{same}");
        }
    }
}
