use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use fracsim_cli::commands::{self, parse_angles};
use fracsim_cli::service::{self, ServiceConfig};

#[derive(Parser, Debug)]
#[command(name = "fracsim", version, about = "Deterministic haptic teleoperation simulator for ring-fixator fracture reduction")]
struct Cli {
    /// Scene file (TOML). Defaults to `$FRACSIM_SCENE_DIR/femur_default.toml`, then the built-in scene.
    #[arg(long, global = true)]
    scene: Option<PathBuf>,
    /// Directory searched for the default scene.
    #[arg(long, global = true, env = "FRACSIM_SCENE_DIR")]
    scene_dir: Option<PathBuf>,
    /// Override the scene time step, s.
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a device script and write the trajectory log and deviation report.
    Simulate {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a recorded session; `--check` compares against a reference log.
    Replay {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        check: Option<PathBuf>,
    },
    /// Compare the separating-axis test against the brute-force oracle on random pairs.
    CollisionFuzz {
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a fluoroscopic view at the home pose to `<out>.pgm` and `<out>.svg`.
    Fluoro {
        /// C-arm extrinsic X-Y-Z angles in degrees, `a,b,g`.
        #[arg(long, value_parser = parse_angles, allow_hyphen_values = true)]
        angles: [f64; 3],
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize an existing trajectory log.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the live engine behind a WebSocket at `/ws`.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Record `session.csv` and `trajectory.csv` into this directory.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long, default_value_t = 60.0)]
        snapshot_hz: f64,
    },
}

fn run(cli: Cli) -> Result<u8> {
    let scene = commands::resolve_scene(cli.scene.as_deref(), cli.scene_dir.as_deref(), cli.dt)?;
    match cli.command {
        Command::Simulate { script, out } => Ok(commands::simulate(&scene, &script, &out)?.status),
        Command::Replay { script, out, check } => commands::replay(&scene, &script, &out, check.as_deref()),
        Command::CollisionFuzz { n, seed, out } => commands::collision_fuzz(n as usize, seed, out.as_deref()),
        Command::Fluoro { angles, out } => {
            commands::fluoro(&scene, angles, &out)?;
            Ok(commands::EXIT_OK)
        }
        Command::Analyze { input, out } => commands::analyze(&input, out.as_deref()),
        Command::Serve { bind, record, snapshot_hz } => {
            if !(snapshot_hz.is_finite() && snapshot_hz > 0.0) {
                anyhow::bail!("--snapshot-hz must be positive");
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(ServiceConfig { scene, snapshot_hz, record }, bind))?;
            Ok(commands::EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
