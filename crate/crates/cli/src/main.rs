mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Exit 2: bad invocation or configuration. Exit 3: the data could not be
/// read or processed.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(heartseg::Error),
}

impl From<heartseg::Error> for CliError {
    fn from(e: heartseg::Error) -> Self {
        CliError::Data(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "heartseg", version, about = "Heart sound segmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize an annotated corpus with recordings verified per difficulty level.
    Synth {
        /// Recordings per level: LEVEL_I,LEVEL_II,LEVEL_III.
        #[arg(long, default_value = "10,10,10")]
        levels: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// k-fold cross-validated training on a corpus directory.
    Train {
        /// Directory with manifest.csv and its WAV/CSV pairs.
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment WAV files (or directories of them) with trained weights.
    Segment {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        weights: PathBuf,
        /// Run config holding the model; defaults to model.json beside the weights.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        overlap: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted onsets against reference annotations.
    Evaluate {
        /// Reference directory (manifest.csv, or every *.csv in it).
        #[arg(long)]
        truth: PathBuf,
        /// Directory with one `<id>.csv` per reference recording.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 100)]
        sigma_ms: u32,
        #[arg(long, value_enum, default_value_t = Mode::Pooled)]
        mode: Mode,
        /// Also write report.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute difficulty indicators and assign levels over a corpus.
    Stratify {
        corpus: PathBuf,
        /// Also write assignments.csv and characteristics.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Pooled,
    PerRecording,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { levels, seed, out } => commands::synth(&levels, seed, &out),
        Command::Train {
            corpus,
            config,
            seed,
            out,
        } => commands::train(&corpus, config.as_deref(), seed, &out),
        Command::Segment {
            inputs,
            weights,
            config,
            overlap,
            out,
        } => commands::segment(&inputs, &weights, config.as_deref(), overlap, &out),
        Command::Evaluate {
            truth,
            pred,
            sigma_ms,
            mode,
            out,
        } => commands::evaluate(&truth, &pred, sigma_ms, mode, out.as_deref()),
        Command::Stratify { corpus, out } => commands::stratify(&corpus, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e @ CliError::Data(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
