use std::path::PathBuf;
use std::process::ExitCode;

use arhmm::{Preset, SimConfig};
use arhmm_cli::commands;
use arhmm_cli::{CliError, CliResult};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "arhmm", version, about = "Fit and apply auto-regressive hidden Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Validation,
    SweepD1,
    SweepD2,
    SweepD3,
    Quat,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Validation => Preset::Validation,
            PresetArg::SweepD1 => Preset::SweepD1,
            PresetArg::SweepD2 => Preset::SweepD2,
            PresetArg::SweepD3 => Preset::SweepD3,
            PresetArg::Quat => Preset::Quat,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground-truth mode paths.
    Simulate {
        #[arg(long, value_enum)]
        preset: PresetArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sequences: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
    },
    /// Fit a model to every data file in a directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the per-iteration log-likelihood as `iter,loglik`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Most probable mode path of one sequence.
    Segment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a predicted path with the truth; prints JSON.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Observation file for the silhouette index.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Model whose layout and standardization apply to `--data`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate {
            preset,
            seed,
            out,
            sequences,
            length,
        } => {
            let defaults = SimConfig::default();
            let cfg = SimConfig {
                seed,
                n_sequences: sequences.unwrap_or(defaults.n_sequences),
                length: length.unwrap_or(defaults.length),
                ..defaults
            };
            commands::simulate(preset.into(), &cfg, &out)
        }
        Command::Train {
            config,
            data,
            out,
            trace,
        } => commands::train(&config, &data, &out, trace.as_deref()).map(|_| ()),
        Command::Segment { model, data, out } => commands::segment(&model, &data, &out).map(|_| ()),
        Command::Score {
            pred,
            truth,
            data,
            model,
        } => {
            let scores = commands::score(&pred, &truth, data.as_deref(), model.as_deref())?;
            let text = serde_json::to_string(&scores).map_err(|e| CliError::Data(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
