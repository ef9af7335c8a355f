use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use vsor::commands::{self, StatsUnit};
use vsor::config::{parse_override, RunConfig};
use vsor::Error;

/// Video salient object ranking: evaluation, dataset tools and training.
///
/// Reports go to stdout as JSON, diagnostics to stderr. Exit status is 0 on
/// success, 1 when input fails validation and 2 on runtime errors.
/// `VSOR_THREADS` caps the worker threads (0 = one per core).
#[derive(Parser)]
#[command(name = "vsor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare predicted rank annotations against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// Write predicted rank maps as 16-bit PGM under this directory.
        #[arg(long, value_name = "DIR")]
        dump_maps: Option<PathBuf>,
    },
    /// Salient-object count histogram and invalid rate of a dataset.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "frame")]
        per: StatsUnit,
    },
    /// Generate synthetic sequences in the dataset layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        sequences: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override a config key, e.g. `--set synth.noise_level=0.1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Train and evaluate a model variant.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. `--set variant=basic`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Finite-difference check of every differentiable op and both modules.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt_backward: bool,
    },
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).unwrap());
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("VSOR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("VSOR_THREADS must be a count, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    raw.iter().map(|s| parse_override(s)).collect()
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    configure_threads()?;
    match cli.command {
        Command::Eval {
            gt,
            pred,
            iou,
            dump_maps,
        } => print_json(&commands::eval_dirs(&gt, &pred, iou, dump_maps.as_deref())?),
        Command::Stats { data, per } => print_json(&commands::stats_dir(&data, per)?),
        Command::Synth {
            out,
            sequences,
            config,
            seed,
            overrides: raw,
        } => {
            let cfg = RunConfig::load(config.as_deref(), &overrides(&raw)?)?;
            print_json(&commands::synth_to_dir(&out, sequences, &cfg.synth, seed)?);
        }
        Command::Train {
            config,
            overrides: raw,
        } => {
            let cfg = RunConfig::load(config.as_deref(), &overrides(&raw)?)?;
            print_json(&commands::run_training(&cfg)?);
        }
        Command::Gradcheck {
            seed,
            corrupt_backward,
        } => {
            let report = commands::run_gradcheck(seed, corrupt_backward.then_some(0.01))?;
            print_json(&report);
            if !report.passed {
                for c in report.checks.iter().filter(|c| !c.passed) {
                    eprintln!(
                        "gradcheck: {} failed (max rel. error {:e})",
                        c.name, c.max_rel_error
                    );
                }
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("vsor: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
