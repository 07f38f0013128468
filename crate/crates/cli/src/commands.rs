//! Batch subcommands. Each returns an exit status; I/O and parse errors
//! surface as `anyhow` errors.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fracsim_core::engine::{deviation_report, run_inputs, DeviationReport, RunLog, RunStats};
use fracsim_core::fluoro::{capture_scene, CArmPose};
use fracsim_core::obb::oracle::fuzz_pairs;
use fracsim_core::scene::{load_scene, Scene, DEFAULT_SCENE};
use fracsim_core::script::{expand_script, read_script};
use fracsim_core::trajectory::{read_trajectory, write_trajectory};

pub const EXIT_OK: u8 = 0;
/// The run finished but some ticks were unreachable or faulted.
pub const EXIT_FAULTS: u8 = 3;
/// Collision fuzzing found disagreements.
pub const EXIT_DISAGREEMENT: u8 = 4;
/// A replayed log differs from the reference.
pub const EXIT_MISMATCH: u8 = 5;

pub const DEFAULT_SCENE_FILE: &str = "femur_default.toml";

/// Scene from an explicit path, else `<scene_dir>/femur_default.toml`,
/// else the built-in default.
pub fn resolve_scene(path: Option<&Path>, scene_dir: Option<&Path>, dt: Option<f64>) -> Result<Scene> {
    let text = match (path, scene_dir) {
        (Some(p), _) => std::fs::read_to_string(p).with_context(|| format!("reading scene {}", p.display()))?,
        (None, Some(dir)) => {
            let p = dir.join(DEFAULT_SCENE_FILE);
            std::fs::read_to_string(&p).with_context(|| format!("reading scene {}", p.display()))?
        }
        (None, None) => DEFAULT_SCENE.to_string(),
    };
    let mut scene = load_scene(&text)?;
    if let Some(dt) = dt {
        scene.dt = dt;
        scene.validate()?;
    }
    Ok(scene)
}

pub fn run_script_file(scene: &Scene, script: &Path) -> Result<RunLog> {
    let file = File::open(script).with_context(|| format!("opening script {}", script.display()))?;
    let rows = read_script(file)?;
    let ticks = expand_script(&rows, scene.dt)?;
    Ok(run_inputs(scene, ticks.initial, &ticks.inputs)?)
}

fn write_log(path: &Path, log: &RunLog) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_trajectory(BufWriter::new(file), &log.samples)?;
    Ok(())
}

/// `<out>` with its extension replaced by `suffix`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

pub fn report_text(report: Option<&DeviationReport>, stats: &RunStats) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ticks {}", stats.ticks);
    match report {
        Some(r) => {
            let t = &r.translation;
            let q = &r.rotation;
            let _ = writeln!(s, "translation_mm max {:.6} mean {:.6} rms {:.6}", t.max, t.mean, t.rms);
            let _ = writeln!(s, "rotation_deg max {:.6} mean {:.6} rms {:.6}", q.max, q.mean, q.rms);
        }
        None => s.push_str("no samples\n"),
    }
    let _ = writeln!(s, "unreachable_ticks {}", stats.unreachable_ticks);
    let _ = writeln!(s, "hc_unreachable_ticks {}", stats.hc_unreachable_ticks);
    let _ = writeln!(s, "fault_ticks {}", stats.fault_ticks);
    let _ = writeln!(s, "fk_max_iterations {}", stats.fk_max_iterations);
    let _ = writeln!(s, "fk_fast_fraction {:.6}", stats.fk_fast_fraction());
    s
}

fn report_csv(report: Option<&DeviationReport>) -> String {
    let mut s = String::from("metric,max,mean,rms\n");
    if let Some(r) = report {
        for (name, e) in [("translation_mm", &r.translation), ("rotation_deg", &r.rotation)] {
            let _ = writeln!(s, "{name},{},{},{}", e.max, e.mean, e.rms);
        }
    }
    s
}

pub struct SimulateOutput {
    pub log: RunLog,
    pub report: Option<DeviationReport>,
    pub status: u8,
}

/// Runs a script, writes `<out>`, `<stem>.report.txt` and `<stem>.report.csv`.
pub fn simulate(scene: &Scene, script: &Path, out: &Path) -> Result<SimulateOutput> {
    let log = run_script_file(scene, script)?;
    write_log(out, &log)?;
    let report = deviation_report(&log.samples).ok();
    let text = report_text(report.as_ref(), &log.stats);
    std::fs::write(sibling(out, ".report.txt"), &text)?;
    std::fs::write(sibling(out, ".report.csv"), report_csv(report.as_ref()))?;
    print!("{text}");
    let s = &log.stats;
    let status = if s.unreachable_ticks > 0 || s.fault_ticks > 0 {
        eprintln!("faults: {} unreachable ticks, {} kinematics faults", s.unreachable_ticks, s.fault_ticks);
        for (tick, msg) in log.faults.iter().take(10) {
            eprintln!("  tick {tick}: {msg}");
        }
        EXIT_FAULTS
    } else {
        EXIT_OK
    };
    Ok(SimulateOutput { log, report, status })
}

/// Runs a recorded session and optionally checks the log against a
/// reference file byte for byte.
pub fn replay(scene: &Scene, script: &Path, out: &Path, check: Option<&Path>) -> Result<u8> {
    let log = run_script_file(scene, script)?;
    write_log(out, &log)?;
    println!("replayed {} ticks to {}", log.samples.len(), out.display());
    if let Some(reference) = check {
        let a = std::fs::read(out)?;
        let b = std::fs::read(reference).with_context(|| format!("reading {}", reference.display()))?;
        if a != b {
            eprintln!("replay differs from {}", reference.display());
            return Ok(EXIT_MISMATCH);
        }
        println!("identical to {}", reference.display());
    }
    Ok(EXIT_OK)
}

pub fn collision_fuzz(n: usize, seed: u64, out: Option<&Path>) -> Result<u8> {
    if n == 0 {
        bail!("--n must be positive");
    }
    let start = std::time::Instant::now();
    let report = fuzz_pairs(n, seed);
    let elapsed = start.elapsed();
    println!(
        "pairs {} colliding {} disagreements {} grazing {} elapsed_ms {:.1}",
        report.pairs,
        report.colliding,
        report.disagreements.len(),
        report.grazing_disagreements,
        elapsed.as_secs_f64() * 1000.0
    );
    if let Some(path) = out {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &report)?;
    }
    Ok(if report.disagreements.is_empty() { EXIT_OK } else { EXIT_DISAGREEMENT })
}

/// Parses `"a,b,g"` in degrees.
pub fn parse_angles(text: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated angles, got {text:?}"));
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(&parts) {
        let v: f64 = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
        if !v.is_finite() {
            return Err(format!("angle must be finite: {p:?}"));
        }
        *slot = v;
    }
    Ok(out)
}

/// Writes `<out>.pgm` and `<out>.svg` for the ring at home.
pub fn fluoro(scene: &Scene, angles: [f64; 3], out: &Path) -> Result<(PathBuf, PathBuf)> {
    let carm = CArmPose::from_euler_deg(angles, scene.fluoro.center);
    let img = capture_scene(scene, &scene.home, &carm);
    let pgm = sibling(out, ".pgm");
    let svg = sibling(out, ".svg");
    std::fs::write(&pgm, img.to_pgm()).with_context(|| format!("writing {}", pgm.display()))?;
    std::fs::write(&svg, img.overlay_svg()).with_context(|| format!("writing {}", svg.display()))?;
    println!("wrote {} and {}", pgm.display(), svg.display());
    Ok((pgm, svg))
}

/// Deviation and contact summary of an existing trajectory log.
pub fn analyze(input: &Path, out: Option<&Path>) -> Result<u8> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let records = read_trajectory(file)?;
    let samples: Vec<_> = records.iter().map(|r| r.to_sample()).collect();
    let report = deviation_report(&samples).ok();
    let mut text = String::new();
    let _ = writeln!(text, "samples {}", samples.len());
    if let Some(r) = &report {
        let _ = writeln!(text, "translation_mm max {:.6} mean {:.6} rms {:.6}", r.translation.max, r.translation.mean, r.translation.rms);
        let _ = writeln!(text, "rotation_deg max {:.6} mean {:.6} rms {:.6}", r.rotation.max, r.rotation.mean, r.rotation.rms);
    }
    let contact = records.iter().filter(|r| r.collide != 0).count();
    let fmax = samples.iter().map(|s| s.f_g.norm()).fold(0.0, f64::max);
    let _ = writeln!(text, "contact_ticks {contact}");
    let _ = writeln!(text, "max_force_n {fmax:.6}");
    print!("{text}");
    if let Some(out) = out {
        std::fs::write(sibling(out, ".report.txt"), &text)?;
        std::fs::write(sibling(out, ".report.csv"), report_csv(report.as_ref()))?;
    }
    Ok(EXIT_OK)
}
