use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use evsim_core::io::read_field;
use evsim_core::scenario::{config_hash, run_scenario, ScenarioConfig};
use evsim_core::Error;

mod plot;

/// Extracellular-vesicle delivery simulator.
#[derive(Parser)]
#[command(name = "evsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        config: PathBuf,
        /// Write here instead of the configured output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Load and check a scenario without running it.
    Validate {
        config: PathBuf,
        /// Print the fully resolved configuration.
        #[arg(long)]
        print: bool,
    },
    /// Relative error norms between two field files over the interior.
    Compare {
        reference: PathBuf,
        other: PathBuf,
        /// Distance from the walls to exclude, µm.
        #[arg(long, default_value_t = 10.0)]
        margin: f64,
    },
    /// Render CSV outputs to SVG charts next to each input.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Directory for the images (defaults to each CSV's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_IO: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else if matches!(err.root(), Error::Io { .. }) {
        EXIT_IO
    } else {
        EXIT_VALIDATION
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, u8> {
    ScenarioConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_VALIDATION
    })
}

fn run(cli: Cli) -> Result<(), u8> {
    match cli.command {
        Command::Run { config, output } => {
            let mut cfg = load(&config)?;
            if let Some(dir) = output {
                cfg.output_dir = dir;
            }
            let (report, dir) = run_scenario(&cfg).map_err(|e| {
                eprintln!("error: {e}");
                exit_code(&e)
            })?;
            println!("wrote {} files to {}", report.artifacts.len(), dir.display());
            if let Some(c) = &report.comparison {
                println!(
                    "analytic vs grid probes: rel L-inf {:.3e}, rel L2 {:.3e}",
                    c.probes.rel_linf, c.probes.rel_l2
                );
            }
            for (stage, secs) in &report.timings {
                println!("  {stage:<10} {secs:>9.3} s");
            }
            Ok(())
        }
        Command::Validate { config, print } => {
            let cfg = load(&config)?;
            let hash = config_hash(&cfg).map_err(|e| {
                eprintln!("error: {e}");
                EXIT_VALIDATION
            })?;
            if print {
                print!("{}", cfg.to_toml().map_err(|_| EXIT_VALIDATION)?);
            }
            println!("ok {hash}");
            Ok(())
        }
        Command::Compare {
            reference,
            other,
            margin,
        } => {
            let fail = |e: Error| {
                eprintln!("error: {e}");
                exit_code(&e)
            };
            let a = read_field(&reference).map_err(fail)?;
            let b = read_field(&other).map_err(fail)?;
            let norms = evsim_core::scenario::compare_fields(&a, &b, margin).map_err(fail)?;
            println!("{}", serde_json::to_string_pretty(&norms).expect("norms serialize"));
            Ok(())
        }
        Command::Plot { csv, out } => {
            for path in &csv {
                let dir = out
                    .clone()
                    .unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
                let image = plot::render(path, &dir).map_err(|e| {
                    eprintln!("error: {}: {e}", path.display());
                    EXIT_VALIDATION
                })?;
                println!("{}", image.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
