use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scim_lab::config::{parse_config_str, SimConfig};
use scim_lab::{bench, parse_config, sweep, LabError};

#[derive(Debug, Parser)]
#[command(
    name = "scim-lab",
    version,
    about = "SC-IM-NOMA detector lab: train, sweep, bench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file (flat TOML); defaults apply when omitted
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set seed=3` (repeatable)
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Cap Monte-Carlo blocks per point at 10^4
    #[arg(long)]
    fast: bool,
    /// DeepSIC-IM model bundle
    #[arg(long)]
    model: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<SimConfig, LabError> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if self.fast {
            overrides.push("fast=true".into());
        }
        if let Some(model) = &self.model {
            overrides.push(format!("model={:?}", model.display().to_string()));
        }
        Ok(match &self.config {
            Some(path) => parse_config(path, &overrides)?,
            None => parse_config_str("", &overrides)?,
        })
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a DeepSIC-IM model and write its bundle
    Train {
        #[command(flatten)]
        common: Common,
        /// Output bundle path
        #[arg(short, long, default_value = "model.dsib")]
        out: PathBuf,
    },
    /// Run a BER sweep and write CSV plus a run manifest
    Sweep {
        #[command(flatten)]
        common: Common,
        /// CSV path (overrides `output`)
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Time single-sample detection for every configured detector
    Bench {
        #[command(flatten)]
        common: Common,
        /// Timed samples per detector (overrides `bench_samples`)
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Print the effective configuration
    ShowConfig {
        #[command(flatten)]
        common: Common,
    },
}

fn train(common: &Common, out: &Path) -> Result<(), LabError> {
    let cfg = common.load()?;
    let epochs = cfg.train.epochs;
    let (_, history) = sweep::cmd_train(&cfg, &cfg.train, out, |epoch, loss| {
        if epoch == 0 || (epoch + 1) % 25 == 0 || epoch + 1 == epochs {
            eprintln!("epoch {:>4}/{epochs}  loss {loss:.6}", epoch + 1);
        }
    })?;
    let last = history.loss.last().copied().unwrap_or(f64::NAN);
    println!("final epoch loss {last:.6e}");
    println!("wrote {}", out.display());
    Ok(())
}

fn run_sweep(common: &Common, out: Option<&Path>) -> Result<(), LabError> {
    let mut cfg = common.load()?;
    if let Some(out) = out {
        cfg.raw.output = out.to_path_buf();
    }
    let curve = sweep::run_sweep(&cfg)?;
    sweep::write_outputs(&curve, &cfg, "sweep")?;
    print!("{}", curve.to_csv_string());
    eprintln!("wrote {}", cfg.raw.output.display());
    Ok(())
}

fn run_bench(common: &Common, samples: Option<usize>) -> Result<(), LabError> {
    let cfg = common.load()?;
    let model = match &cfg.raw.model {
        Some(path) => Some(sweep::load_model(path, &cfg)?),
        None => None,
    };
    let samples = samples.unwrap_or(cfg.raw.bench_samples);
    let report = bench::run_bench(&cfg, model.as_ref(), samples)?;
    print!("{}", report.to_csv_string());
    report.check_ordering()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { common, out } => train(common, out),
        Command::Sweep { common, out } => run_sweep(common, out.as_deref()),
        Command::Bench { common, samples } => run_bench(common, *samples),
        Command::ShowConfig { common } => common.load().map(|cfg| print!("{}", cfg.to_toml())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
