mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use sqzdistill::pipeline::{PipelineConfig, DB_CONVENTION};

use crate::commands::*;
use crate::config::{load_config_file, resolve, RunDir};

/// Squeezed-light distillation toolkit: figure datasets, emulated
/// experiments and validation suites.
#[derive(Parser)]
#[command(name = "sqzdistill", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// RNG seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fock-space cutoff of the source state
    #[arg(long, global = true)]
    cutoff: Option<usize>,
    /// Root directory for run outputs
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Distilled variance versus input squeezing (three curves)
    Fig1 {
        #[arg(long)]
        r_min: Option<f64>,
        #[arg(long)]
        r_max: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Two-photon (optionally displaced) subtraction from squeezed vacuum
    Subtract {
        #[arg(long)]
        r: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        delta_sq: Option<f64>,
        #[arg(long)]
        optimal_delta: bool,
    },
    /// Exact iterated Gaussification in Fock space
    GaussifyExact {
        /// Start from F|alpha> instead of the configured source
        #[arg(long)]
        fock_filter_alpha: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Emulated Gaussification on Q-samples
    GaussifyMc {
        #[arg(long)]
        samples: Option<usize>,
        /// Comma-separated hard-boundary thresholds, one per step
        #[arg(long, value_delimiter = ',')]
        schedule: Option<Vec<f64>>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Survival rate and variances over a threshold grid
    SweepPsvv {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// MaxLik reconstruction from Q-samples
    Tomo {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Synthetic windows and temporal-mode extraction
    Temporal {
        #[arg(long)]
        windows: Option<usize>,
        #[arg(long)]
        whiten: bool,
        #[arg(long)]
        write_windows: bool,
    },
    /// Windows -> mode -> samples -> Gaussification -> tomography
    Pipeline {
        #[arg(long)]
        windows: Option<usize>,
        #[arg(long)]
        no_tomography: bool,
    },
    /// Run validation suites; exit code 0 iff all checks pass
    Validate {
        /// Suites to run (default: all)
        #[arg(long, value_delimiter = ',')]
        suite: Option<Vec<String>>,
        /// Negative control: corrupt the named check
        #[arg(long)]
        corrupt: Option<String>,
    },
}

fn flags(g: &Global, extra: Value) -> Value {
    let mut v = json!({ "seed": g.seed, "cutoff": g.cutoff });
    config::merge(&mut v, extra);
    v
}

fn prepare<T: Serialize + DeserializeOwned + Default>(g: &Global, name: &str, extra: Value) -> Result<(T, RunDir)> {
    let cfg: T = resolve(&T::default(), load_config_file(g.config.as_deref())?, flags(g, extra))?;
    let dir = RunDir::create(&g.out, name, &cfg, DB_CONVENTION)?;
    Ok((cfg, dir))
}

fn run(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    match cli.command {
        Command::Fig1 { r_min, r_max, steps } => {
            let (c, d) = prepare::<Fig1Config>(g, "fig1", json!({"r_min": r_min, "r_max": r_max, "steps": steps}))?;
            fig1(&c, &d)?;
            println!("{}", d.path.display());
        }
        Command::Subtract { r, delta_sq, optimal_delta } => {
            let opt = optimal_delta.then_some(true);
            let (c, d) = prepare::<SubtractConfig>(g, "subtract", json!({"r": r, "delta_sq": delta_sq, "optimal_delta": opt}))?;
            subtract(&c, &d)?;
            println!("{}", d.path.display());
        }
        Command::GaussifyExact { fock_filter_alpha, max_iters } => {
            let (c, d) = prepare::<GaussifyExactConfig>(
                g,
                "gaussify-exact",
                json!({"fock_filter_alpha": fock_filter_alpha, "max_iters": max_iters}),
            )?;
            gaussify_exact(&c, &d)?;
            println!("{}", d.path.display());
        }
        Command::GaussifyMc { samples, schedule, input } => {
            let (c, d) = prepare::<GaussifyMcConfig>(
                g,
                "gaussify-mc",
                json!({"samples": samples, "schedule": schedule, "input": input}),
            )?;
            gaussify_mc(&c, &d)?;
            println!("{}", d.path.display());
        }
        Command::SweepPsvv { samples, grid, input } => {
            let (c, d) = prepare::<SweepConfig>(g, "sweep-psvv", json!({"samples": samples, "grid": grid, "input": input}))?;
            sweep(&c, &d)?;
            println!("{}", d.path.display());
        }
        Command::Tomo { samples, input, max_iters } => {
            let (c, d) = prepare::<TomoConfig>(
                g,
                "tomo",
                json!({"samples": samples, "input": input, "maxlik": {"max_iters": max_iters}}),
            )?;
            tomo(&c, &d)?;
            println!("{}", d.path.display());
        }
        Command::Temporal { windows, whiten, write_windows } => {
            let (c, d) = prepare::<TemporalConfig>(
                g,
                "temporal",
                json!({
                    "windows": {"n_windows": windows},
                    "whiten": whiten.then_some(true),
                    "write_windows": write_windows.then_some(true),
                }),
            )?;
            temporal(&c, &d)?;
            println!("{}", d.path.display());
        }
        Command::Pipeline { windows, no_tomography } => {
            let (c, d) = prepare::<PipelineConfig>(
                g,
                "pipeline",
                json!({"windows": {"n_windows": windows}, "tomography": no_tomography.then_some(false)}),
            )?;
            pipeline(&c, &d)?;
            println!("{}", d.path.display());
        }
        Command::Validate { suite, corrupt } => {
            let (c, d) = prepare::<ValidateConfig>(g, "validate", json!({"suites": suite, "corrupt": corrupt}))?;
            let ok = validate(&c, &d)?;
            println!("{}", d.path.display());
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
