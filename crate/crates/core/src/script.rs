//! Leader-input scripts: CSV keyframes of device poses in mm and degrees.
//!
//! Rows sit on the tick grid. Poses between keyframes are interpolated
//! (linear position, constant-rate rotation); a keyframe tick uses the row
//! values exactly. `engaged`, `grip` and an explicit twist hold until the
//! next row. Without an explicit twist, the twist is the backward
//! difference of consecutive tick poses.

use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::engine::HcInput;
use crate::geom::{scaled_rotation_increment, Pose, Twist, Vec3, MM_PER_M};
use crate::trajectory::{pose_from_mm_deg, pose_to_mm_deg};

/// Allowed distance of a row time from the tick grid, in ticks.
const GRID_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptRow {
    pub t: f64,
    pub hc_px: f64,
    pub hc_py: f64,
    pub hc_pz: f64,
    pub hc_qa: f64,
    pub hc_qb: f64,
    pub hc_qg: f64,
    #[serde(default = "engaged_default", deserialize_with = "de_flag", serialize_with = "ser_flag")]
    pub engaged: bool,
    #[serde(default)]
    pub grip: Option<f64>,
    /// mm/s
    #[serde(default)]
    pub hc_vx: Option<f64>,
    #[serde(default)]
    pub hc_vy: Option<f64>,
    #[serde(default)]
    pub hc_vz: Option<f64>,
    /// deg/s, world frame
    #[serde(default)]
    pub hc_wx: Option<f64>,
    #[serde(default)]
    pub hc_wy: Option<f64>,
    #[serde(default)]
    pub hc_wz: Option<f64>,
}

fn engaged_default() -> bool {
    true
}

fn de_flag<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim() {
        "1" | "true" | "" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(serde::de::Error::custom(format!("engaged must be 0 or 1, got {other:?}"))),
    }
}

fn ser_flag<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

impl ScriptRow {
    pub fn at(t: f64, pose: &Pose) -> Self {
        let v = pose_to_mm_deg(pose);
        Self {
            t,
            hc_px: v[0],
            hc_py: v[1],
            hc_pz: v[2],
            hc_qa: v[3],
            hc_qb: v[4],
            hc_qg: v[5],
            engaged: true,
            grip: None,
            hc_vx: None,
            hc_vy: None,
            hc_vz: None,
            hc_wx: None,
            hc_wy: None,
            hc_wz: None,
        }
    }

    pub fn pose(&self) -> Pose {
        pose_from_mm_deg([self.hc_px, self.hc_py, self.hc_pz, self.hc_qa, self.hc_qb, self.hc_qg])
    }

    fn twist_cells(&self) -> [Option<f64>; 6] {
        [self.hc_vx, self.hc_vy, self.hc_vz, self.hc_wx, self.hc_wy, self.hc_wz]
    }

    /// Explicit twist in SI, if the row carries one.
    pub fn twist(&self) -> Option<Twist> {
        let c = self.twist_cells();
        let v: Option<Vec<f64>> = c.into_iter().collect();
        v.map(|v| {
            Twist::new(
                Vec3::new(v[0], v[1], v[2]) / MM_PER_M,
                Vec3::new(v[3], v[4], v[5]).map(f64::to_radians),
            )
        })
    }

    pub fn set_twist_mm_deg(&mut self, v: [f64; 6]) {
        [self.hc_vx, self.hc_vy, self.hc_vz, self.hc_wx, self.hc_wy, self.hc_wz] = v.map(Some);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("script CSV, line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("script row {row}: {message}")]
    Invalid { row: usize, message: String },
    #[error("time step must be positive")]
    BadStep,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(row: usize, message: impl Into<String>) -> ScriptError {
    ScriptError::Invalid { row, message: message.into() }
}

pub fn read_script<R: Read>(input: R) -> Result<Vec<ScriptRow>, ScriptError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: ScriptRow = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            match e.into_kind() {
                csv::ErrorKind::Io(io) => ScriptError::Io(io),
                csv::ErrorKind::Deserialize { err, .. } => ScriptError::Csv { line, message: err.to_string() },
                kind => ScriptError::Csv { line, message: format!("{kind:?}") },
            }
        })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_script<W: Write>(out: W, rows: &[ScriptRow]) -> Result<(), ScriptError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| ScriptError::Csv { line: 0, message: e.to_string() })?;
    }
    w.flush()?;
    Ok(())
}

/// Expanded script: initial device pose and one input per tick. Tick `n`
/// (1-based) happens at `t = n * dt`; the first row must be at `t = 0`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TickInputs {
    pub initial: Pose,
    pub inputs: Vec<HcInput>,
}

pub fn expand_script(rows: &[ScriptRow], dt: f64) -> Result<TickInputs, ScriptError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ScriptError::BadStep);
    }
    let Some(first) = rows.first() else {
        return Ok(TickInputs { initial: Pose::identity(), inputs: Vec::new() });
    };
    let mut ticks = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let row = i + 1;
        let cells = [r.t, r.hc_px, r.hc_py, r.hc_pz, r.hc_qa, r.hc_qb, r.hc_qg];
        if cells.iter().any(|c| !c.is_finite()) {
            return Err(invalid(row, "non-finite value"));
        }
        if let Some(g) = r.grip {
            if !(0.0..=1.0).contains(&g) {
                return Err(invalid(row, format!("grip {g} outside [0, 1]")));
            }
        }
        let tw = r.twist_cells();
        if tw.iter().any(Option::is_some) && !tw.iter().all(|c| c.is_some_and(f64::is_finite)) {
            return Err(invalid(row, "twist needs all six finite columns or none"));
        }
        let k = r.t / dt;
        if !(k >= 0.0) || (k - k.round()).abs() > GRID_TOLERANCE || k.round() > u32::MAX as f64 {
            return Err(invalid(row, format!("time {} is not on the {dt} s grid", r.t)));
        }
        let k = k.round() as u64;
        if ticks.last().is_some_and(|&p| k <= p) {
            return Err(invalid(row, "times must increase"));
        }
        ticks.push(k);
    }
    if ticks[0] != 0 {
        return Err(invalid(1, "first row must be at t = 0"));
    }

    let poses: Vec<Pose> = rows.iter().map(ScriptRow::pose).collect();
    let total = *ticks.last().unwrap_or(&0);
    let mut inputs = Vec::with_capacity(total as usize);
    let mut prev = first.pose();
    let mut seg = 0;
    for n in 1..=total {
        while ticks[seg + 1] <= n && seg + 2 < ticks.len() {
            seg += 1;
        }
        let (ka, kb) = (ticks[seg], ticks[seg + 1]);
        let (gov, pose) = if n == kb {
            (&rows[seg + 1], poses[seg + 1])
        } else if n == ka {
            (&rows[seg], poses[seg])
        } else {
            let u = (n - ka) as f64 / (kb - ka) as f64;
            let (a, b) = (&poses[seg], &poses[seg + 1]);
            let rot = a.orientation * scaled_rotation_increment(&a.orientation, &b.orientation, u);
            (&rows[seg], Pose::new(a.position + (b.position - a.position) * u, rot))
        };
        let twist = gov.twist().unwrap_or_else(|| Twist::from_pose_delta(&prev, &pose, dt));
        inputs.push(HcInput { pose, twist, engaged: gov.engaged, grip: gov.grip.unwrap_or(0.0) });
        prev = pose;
    }
    Ok(TickInputs { initial: first.pose(), inputs })
}

/// Generators for the shipped scripts.
pub mod generate {
    use super::*;
    use crate::geom::EulerAngles;
    use std::f64::consts::TAU;

    fn keyframes(duration: f64, step: f64, f: impl Fn(f64) -> Pose) -> Vec<ScriptRow> {
        let n = (duration / step).round() as usize;
        (0..=n).map(|i| {
            let t = i as f64 * step;
            ScriptRow::at(t, &f(t))
        })
        .collect()
    }

    /// Simultaneous motion in all six degrees of freedom at hand-like
    /// speeds: up to about 40 mm/s and 15 deg/s, inside the scaling limits.
    pub fn sinusoid_6dof(duration: f64, step: f64) -> Vec<ScriptRow> {
        let wave = |amp: f64, hz: f64, t: f64| amp * (TAU * hz * t).sin();
        keyframes(duration, step, |t| {
            Pose::from_euler(
                Vec3::new(wave(0.020, 0.25, t), wave(0.015, 0.2, t), wave(0.006, 0.3, t)),
                EulerAngles::from_degrees(wave(5.0, 0.2, t), wave(4.0, 0.25, t), wave(6.0, 0.15, t)),
            )
        })
    }

    /// Straight push along -z at `speed` for `push` seconds, then `hold`
    /// seconds at rest.
    pub fn axial_push(speed: f64, push: f64, hold: f64) -> Vec<ScriptRow> {
        let end = Pose::from_translation(Vec3::new(0.0, 0.0, -speed * push));
        vec![
            ScriptRow::at(0.0, &Pose::identity()),
            ScriptRow::at(push, &end),
            ScriptRow::at(push + hold, &end),
        ]
    }

    /// Alternating fast and slow segments. Fast segments reach ten times
    /// the given limits; slow ones stay below half of them.
    pub fn adversarial(max_v: f64, max_w: f64, step: f64) -> Vec<ScriptRow> {
        let mut rows = Vec::new();
        let mut t = 0.0;
        let mut pose = Pose::identity();
        rows.push(ScriptRow::at(0.0, &pose));
        let axes = [Vec3::x(), Vec3::y(), Vec3::z(), -Vec3::x(), -Vec3::y(), -Vec3::z()];
        for (i, axis) in axes.iter().enumerate() {
            for &(factor, seconds) in &[(10.0, 0.05), (0.4, 0.5), (10.0, 0.02), (0.5, 0.3)] {
                let n = (seconds / step).round() as usize;
                let turn = axes[(i + 2) % 6];
                for _ in 0..n {
                    t += step;
                    pose = Pose::new(
                        pose.position + axis * (factor * max_v * step),
                        crate::geom::Rotation::from_scaled_axis(&(turn * (factor * max_w * step))) * pose.orientation,
                    );
                    rows.push(ScriptRow::at(t, &pose));
                }
            }
        }
        // Back home in a single keyframe interval.
        t += 0.1;
        rows.push(ScriptRow::at(t, &Pose::identity()));
        // Snap the accumulated times onto the grid.
        for r in &mut rows {
            r.t = (r.t / step).round() * step;
        }
        rows
    }

    /// Climbs straight up past the actuator range and holds at the top.
    pub fn unreachable_climb(speed: f64, height: f64) -> Vec<ScriptRow> {
        let top = Pose::from_translation(Vec3::new(0.0, 0.0, height));
        let t = height / speed;
        vec![ScriptRow::at(0.0, &Pose::identity()), ScriptRow::at(t, &top), ScriptRow::at(t + 1.0, &top)]
    }

    pub fn render(rows: &[ScriptRow]) -> String {
        let mut buf = Vec::new();
        write_script(&mut buf, rows).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}
