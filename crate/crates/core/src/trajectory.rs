//! Trajectory log rows in file units (mm, degrees), shared by the CSV log
//! and the wire snapshot.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::engine::TrajectorySample;
use crate::geom::{EulerAngles, Pose, Vec3, MM_PER_M};
use crate::kinematics::RsrJointState;

/// One log row. Field order is the CSV column order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub hc_px: f64,
    pub hc_py: f64,
    pub hc_pz: f64,
    pub hc_qa: f64,
    pub hc_qb: f64,
    pub hc_qg: f64,
    pub rsr_t_px: f64,
    pub rsr_t_py: f64,
    pub rsr_t_pz: f64,
    pub rsr_t_qa: f64,
    pub rsr_t_qb: f64,
    pub rsr_t_qg: f64,
    pub rsr_a_px: f64,
    pub rsr_a_py: f64,
    pub rsr_a_pz: f64,
    pub rsr_a_qa: f64,
    pub rsr_a_qb: f64,
    pub rsr_a_qg: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub th1: f64,
    pub th2: f64,
    pub th3: f64,
    pub fgx: f64,
    pub fgy: f64,
    pub fgz: f64,
    pub collide: u32,
}

pub const TRAJECTORY_HEADER: &str = "t,hc_px,hc_py,hc_pz,hc_qa,hc_qb,hc_qg,\
rsr_t_px,rsr_t_py,rsr_t_pz,rsr_t_qa,rsr_t_qb,rsr_t_qg,\
rsr_a_px,rsr_a_py,rsr_a_pz,rsr_a_qa,rsr_a_qb,rsr_a_qg,\
d1,d2,d3,th1,th2,th3,fgx,fgy,fgz,collide";

/// Position in mm and extrinsic X-Y-Z angles in degrees.
pub fn pose_to_mm_deg(p: &Pose) -> [f64; 6] {
    let e = p.euler().to_degrees();
    let m = p.position * MM_PER_M;
    [m.x, m.y, m.z, e[0], e[1], e[2]]
}

pub fn pose_from_mm_deg(v: [f64; 6]) -> Pose {
    Pose::from_euler(Vec3::new(v[0], v[1], v[2]) / MM_PER_M, EulerAngles::from_degrees(v[3], v[4], v[5]))
}

impl TrajectoryRecord {
    pub fn from_sample(s: &TrajectorySample) -> Self {
        let hc = pose_to_mm_deg(&s.hc);
        let tg = pose_to_mm_deg(&s.rsr_target);
        let ac = pose_to_mm_deg(&s.rsr_actual);
        let d = s.joints.d.map(|d| d * MM_PER_M);
        let th = s.joints.theta.map(f64::to_degrees);
        Self {
            t: s.t,
            hc_px: hc[0],
            hc_py: hc[1],
            hc_pz: hc[2],
            hc_qa: hc[3],
            hc_qb: hc[4],
            hc_qg: hc[5],
            rsr_t_px: tg[0],
            rsr_t_py: tg[1],
            rsr_t_pz: tg[2],
            rsr_t_qa: tg[3],
            rsr_t_qb: tg[4],
            rsr_t_qg: tg[5],
            rsr_a_px: ac[0],
            rsr_a_py: ac[1],
            rsr_a_pz: ac[2],
            rsr_a_qa: ac[3],
            rsr_a_qb: ac[4],
            rsr_a_qg: ac[5],
            d1: d[0],
            d2: d[1],
            d3: d[2],
            th1: th[0],
            th2: th[1],
            th3: th[2],
            fgx: s.f_g.x,
            fgy: s.f_g.y,
            fgz: s.f_g.z,
            collide: s.collide,
        }
    }

    /// Back to SI. Exact up to the unit conversions.
    pub fn to_sample(&self) -> TrajectorySample {
        TrajectorySample {
            t: self.t,
            hc: pose_from_mm_deg([self.hc_px, self.hc_py, self.hc_pz, self.hc_qa, self.hc_qb, self.hc_qg]),
            rsr_target: pose_from_mm_deg([
                self.rsr_t_px,
                self.rsr_t_py,
                self.rsr_t_pz,
                self.rsr_t_qa,
                self.rsr_t_qb,
                self.rsr_t_qg,
            ]),
            rsr_actual: pose_from_mm_deg([
                self.rsr_a_px,
                self.rsr_a_py,
                self.rsr_a_pz,
                self.rsr_a_qa,
                self.rsr_a_qb,
                self.rsr_a_qg,
            ]),
            joints: RsrJointState {
                d: [self.d1, self.d2, self.d3].map(|d| d / MM_PER_M),
                theta: [self.th1, self.th2, self.th3].map(f64::to_radians),
            },
            f_g: Vec3::new(self.fgx, self.fgy, self.fgz),
            collide: self.collide,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error("trajectory CSV, record {record}: {message}")]
    Csv { record: u64, message: String },
    #[error("trajectory CSV header does not match the expected columns")]
    Header,
    #[error("trajectory CSV, record {record}: time is not increasing")]
    Time { record: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn csv_error(e: csv::Error) -> TrajectoryError {
    let record = e.position().map_or(0, |p| p.record());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => TrajectoryError::Io(io),
        kind => TrajectoryError::Csv { record, message: format!("{kind:?}") },
    }
}

/// Writes the header and one row per sample. Floats use the shortest
/// representation that round-trips, so output is byte-stable.
pub fn write_trajectory<W: Write>(out: W, samples: &[TrajectorySample]) -> Result<(), TrajectoryError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRAJECTORY_HEADER.split(',')).map_err(csv_error)?;
    for s in samples {
        w.serialize(TrajectoryRecord::from_sample(s)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(input: R) -> Result<Vec<TrajectoryRecord>, TrajectoryError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(csv_error)?;
    if !header.iter().eq(TRAJECTORY_HEADER.split(',')) {
        return Err(TrajectoryError::Header);
    }
    let mut out: Vec<TrajectoryRecord> = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        let rec: TrajectoryRecord = rec.map_err(csv_error)?;
        if !rec.t.is_finite() || out.last().is_some_and(|p| rec.t <= p.t) {
            return Err(TrajectoryError::Time { record: i as u64 + 1 });
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rotation;

    fn sample(t: f64) -> TrajectorySample {
        TrajectorySample {
            t,
            hc: Pose::from_euler(Vec3::new(0.001, -0.002, 0.003), EulerAngles::new(0.1, -0.2, 0.3)),
            rsr_target: Pose::from_translation(Vec3::new(0.0, 0.0, 0.2)),
            rsr_actual: Pose::new(Vec3::new(0.0001, 0.0, 0.2), Rotation::from_axis_angle(&Vec3::y(), 0.01)),
            joints: RsrJointState { d: [0.2, 0.21, 0.22], theta: [0.1, -0.1, 0.05] },
            f_g: Vec3::new(1.5, -2.0, 0.25),
            collide: 5,
        }
    }

    #[test]
    fn header_matches_fields() {
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &[sample(0.001)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRAJECTORY_HEADER);
        assert_eq!(lines.next().unwrap().split(',').count(), 29);
        // serde's field order is the same as the fixed header.
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(TrajectoryRecord::from_sample(&sample(0.0))).unwrap();
        let generated = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(generated.lines().next().unwrap(), TRAJECTORY_HEADER);
    }

    #[test]
    fn round_trip() {
        let samples = [sample(0.001), sample(0.002)];
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &samples).unwrap();
        let back = read_trajectory(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (r, s) in back.iter().zip(&samples) {
            assert_eq!(*r, TrajectoryRecord::from_sample(s));
            let again = r.to_sample();
            assert!((again.rsr_actual.position - s.rsr_actual.position).norm() < 1e-15);
            assert!(again.rsr_actual.orientation.angle_to(&s.rsr_actual.orientation) < 1e-14);
            assert!((again.joints.d[1] - 0.21).abs() < 1e-15);
            assert_eq!(again.collide, 5);
        }
        assert_eq!(back[0].d1, 200.0);
        assert_eq!(back[0].hc_px, 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(read_trajectory("a,b\n1,2\n".as_bytes()), Err(TrajectoryError::Header)));
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &[sample(0.002), sample(0.001)]).unwrap();
        assert!(matches!(read_trajectory(buf.as_slice()), Err(TrajectoryError::Time { record: 2 })));
        let mut text = String::from_utf8({
            let mut b = Vec::new();
            write_trajectory(&mut b, &[sample(0.001)]).unwrap();
            b
        })
        .unwrap();
        text.push_str("0.5,x\n");
        assert!(matches!(read_trajectory(text.as_bytes()), Err(TrajectoryError::Csv { .. })));
    }
}
