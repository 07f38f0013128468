//! Regenerates the shipped leader scripts under `scripts/`.
//!
//! `cargo run -p fracsim-core --example gen_scripts [-- <dir>]`

use std::path::PathBuf;

use fracsim_core::script::generate;
use fracsim_core::teleop::ScalingConfig;

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("scripts"), PathBuf::from);
    std::fs::create_dir_all(&dir)?;
    let limits = ScalingConfig::default();
    let files = [
        ("sinusoid_6dof.csv", generate::sinusoid_6dof(20.0, 0.01)),
        ("axial_push.csv", generate::axial_push(limits.max_v, 60.0, 5.0)),
        ("adversarial.csv", generate::adversarial(limits.max_v, limits.max_w, 0.005)),
        ("unreachable_climb.csv", generate::unreachable_climb(0.02, 0.2)),
    ];
    for (name, rows) in files {
        std::fs::write(dir.join(name), generate::render(&rows))?;
    }
    Ok(())
}
