//! `luvt`: simulate LUVT wavefield sequences, generate labeled datasets and
//! run the built-in physics checks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use luvt_core::dataset::Progress;
use luvt_core::{generate_dataset, load_config, simulate_sequence, validation, Error, RunConfig};

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_INSTABILITY: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "luvt",
    version,
    about = "Elastic-wave LUVT image simulator and dataset generator"
)]
struct Cli {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Suppress progress output.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render one frame sequence for the configured scenario.
    Simulate {
        #[command(flatten)]
        out: OutArgs,
    },
    /// Generate a labeled image dataset with a manifest.
    Dataset {
        #[command(flatten)]
        out: OutArgs,
        /// Number of defect locations.
        #[arg(long)]
        locations: Option<usize>,
    },
    /// Run the physics checks (CFL, energy, wave speed, reciprocity).
    Validate,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Random seed for defect placement and noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Frames per sequence.
    #[arg(long)]
    frames: Option<usize>,
}

/// Error wrapper carrying the exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::NumericalInstability { .. } => EXIT_INSTABILITY,
            Error::Io { .. } | Error::Image { .. } => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("LUVT_THREADS") else {
        return Ok(());
    };
    let usage = |error: anyhow::Error| Failure {
        code: EXIT_IO,
        error,
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            usage(anyhow::anyhow!(
                "LUVT_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(anyhow::anyhow!("configuring {n} worker threads: {e}")))
}

fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => Ok(RunConfig::default()),
    }
}

/// Applies flag overrides and re-validates the result.
fn apply(
    mut config: RunConfig,
    out: &OutArgs,
    locations: Option<usize>,
) -> Result<RunConfig, Failure> {
    if let Some(seed) = out.seed {
        config.dataset.seed = seed;
    }
    if let Some(frames) = out.frames {
        config.dataset.n_frames = frames;
    }
    if let Some(n) = locations {
        config.dataset.n_locations = n;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    let config = load(cli.config.as_deref())?;
    let quiet = cli.quiet;
    match cli.command {
        Command::Simulate { out } => {
            let config = apply(config, &out, None)?;
            let manifest = simulate_sequence(&config, &out.out)?;
            if !quiet {
                println!(
                    "wrote {} frames to {}",
                    manifest.records.len(),
                    out.out.join("images").display()
                );
            }
        }
        Command::Dataset { out, locations } => {
            let config = apply(config, &out, locations)?;
            let mut report = |p: Progress| {
                if !quiet {
                    eprintln!("sequence {}/{} done", p.done, p.total);
                }
            };
            let manifest = generate_dataset(&config, &out.out, &mut report)?;
            if !quiet {
                println!(
                    "wrote {} images and {} to {}",
                    manifest.records.len(),
                    luvt_core::dataset::MANIFEST_FILE,
                    out.out.display()
                );
            }
        }
        Command::Validate => {
            let plan = config.plan()?;
            let outcomes = validation::run_suite(&plan)?;
            for o in &outcomes {
                println!("{o}");
            }
            if let Some(failed) = outcomes.iter().find(|o| !o.passed) {
                return Err(Failure {
                    code: EXIT_VALIDATION,
                    error: anyhow::anyhow!("check `{}` failed", failed.name),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            // core errors already include their causes in the message
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
