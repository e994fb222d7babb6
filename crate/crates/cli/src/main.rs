mod commands;
mod config;
mod error;
mod output;

use clap::{Parser, Subcommand};
use config::{Format, Overrides, RunConfig};
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "stellar-match", about = "TOV shooting, matching curves and rotating-polytrope surface fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides [output] dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, env = "STELLAR_MATCH_THREADS")]
    threads: Option<usize>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the equation of state and report its validity range.
    EosCheck,
    /// Shoot from the centre for a central pressure.
    ShootCenter {
        #[arg(long)]
        p_center: Option<f64>,
    },
    /// Shoot inward from boundary data (R, M) and classify.
    ShootBoundary {
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        mass: Option<f64>,
    },
    /// Build the matching curves and run the back-shooting sweep.
    Match,
    /// Distorted Lane-Emden surface, ellipsoid fits and level surfaces.
    Surface,
    /// Print the version.
    Version,
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    if let Command::Version = cli.command {
        return Ok(serde_json::json!({ "name": "stellar-match", "version": env!("CARGO_PKG_VERSION") }));
    }
    let mut overrides = Overrides { out: cli.out, seed: cli.seed, format: cli.format, ..Overrides::default() };
    match &cli.command {
        Command::ShootCenter { p_center } => overrides.p_center = *p_center,
        Command::ShootBoundary { radius, mass } => {
            overrides.radius = *radius;
            overrides.mass = *mass;
        }
        _ => {}
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply(&overrides);
    cfg.validate()?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Schema("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    match cli.command {
        Command::EosCheck => commands::eos_check(&cfg),
        Command::ShootCenter { .. } => commands::shoot_center(&cfg),
        Command::ShootBoundary { .. } => commands::shoot_boundary(&cfg),
        Command::Match => commands::match_curves(&cfg),
        Command::Surface => commands::surface(&cfg),
        Command::Version => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Schema(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
