//! Command-line harness for the three-phase junction experiments.
//!
//! Every subcommand loads a TOML run configuration (or starts from the
//! built-in symmetric default), runs a prefix of the artifact pipeline, and
//! writes its outputs plus a checksummed manifest under the run directory.
//! Exit codes: 0 on success, 2 when configuration or structural validation
//! fails, 3 when a numerical procedure fails to converge.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tripoint::config::RunConfig;
use tripoint::pipeline::{run, Goal, PipelineError};

#[derive(Parser)]
#[command(
    name = "tripoint",
    version,
    about = "Diffuse three-phase junctions on the disk: steady states, sharp limits, diagnostics"
)]
struct Cli {
    /// TOML run configuration; omitted = the built-in symmetric default.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the three-well potential's structural hypotheses.
    ValidatePotential,
    /// Compute the pairwise degenerate path costs.
    Geodesics,
    /// Compute the three one-dimensional transition profiles.
    Connections,
    /// Solve the junction geometry (sector openings) from the pair costs.
    Angles,
    /// Relax one steady state (default width: the ladder's largest).
    Solve {
        /// Interface width to solve at.
        #[arg(long, value_name = "X")]
        eps: Option<f64>,
    },
    /// Relax steady states for every width on the ladder.
    Sweep,
    /// Diagnostics and verdicts from a previous sweep's dumps.
    Report,
    /// The full run: every stage, ending in the convergence report.
    Pipeline,
    /// Write the default configuration to a file and exit.
    InitConfig {
        /// Destination path.
        #[arg(value_name = "PATH")]
        path: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| PipelineError {
            stage: "validate_potential",
            class: tripoint::pipeline::FailureClass::Validation,
            message: e.to_string(),
        })?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<(), PipelineError> {
    if let Command::InitConfig { path } = &cli.command {
        let cfg = load_config(cli)?;
        return cfg.save(path).map_err(|e| PipelineError {
            stage: "validate_potential",
            class: tripoint::pipeline::FailureClass::Validation,
            message: e.to_string(),
        });
    }

    let cfg = load_config(cli)?;
    let goal = match &cli.command {
        Command::ValidatePotential => Goal::ValidatePotential,
        Command::Geodesics => Goal::Geodesics,
        Command::Connections => Goal::Connections,
        Command::Angles => Goal::Angles,
        Command::Solve { eps } => Goal::Solve { eps: *eps },
        Command::Sweep => Goal::Sweep,
        Command::Report => Goal::Report,
        Command::Pipeline => Goal::Full,
        Command::InitConfig { .. } => unreachable!("handled above"),
    };
    let manifest = run(&cfg, goal)?;
    let files: usize = manifest.stages.iter().map(|s| s.files.len()).sum();
    println!(
        "run complete: {} stages, {} files under {}",
        manifest.stages.len(),
        files,
        cfg.output_dir.display()
    );
    for stage in &manifest.stages {
        println!("  {}: {} files", stage.stage, stage.files.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
