//! `hrtfxai` command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 numerical failure.

mod commands;
mod data;
mod run_manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "hrtfxai", version, about = "HRTF elevation-cue analysis toolkit")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate HRD1 files listed in a manifest and summarize them.
    Ingest(IngestArgs),
    /// Turn HRIR sets into magnitude spectra.
    Preprocess(PreprocessArgs),
    /// Partition subjects into train/validation/test.
    Split(SplitArgs),
    /// Train the sector classifier.
    Train(TrainArgs),
    /// Score models on test sets.
    Eval(EvalArgs),
    /// Export saliency stacks, occlusion renders and mean saliency contours.
    Explain(ExplainArgs),
    /// Build per-class prototype spectra and sagittal saliency maps.
    Prototype(PrototypeArgs),
    /// Generate synthetic subjects with planted spectral cues.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Raw,
    Optimized,
    Perceptual,
}

#[derive(Args)]
pub struct PreprocessArgs {
    #[arg(long, value_enum, default_value = "optimized")]
    pub preset: PresetArg,
    /// Flat key-value preprocessing config; replaces the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SplitArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Sample this fraction of every dataset's partitions and pool them.
    #[arg(long)]
    pub combined_frac: Option<f64>,
    /// Subject split CSV; computed from the seed when absent.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub learning_rate: f64,
    /// Arithmetic used while training; the model file always stores f64.
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: Precision,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub model: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub test: Vec<PathBuf>,
    /// Split CSVs; datasets listed there are scored on their test subjects only.
    #[arg(long, num_args = 1..)]
    pub split: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Class abbreviation or name, or `all`.
    #[arg(long, default_value = "all")]
    pub class: String,
    #[arg(long, num_args = 1..)]
    pub split: Vec<PathBuf>,
    /// Keep misclassified samples in the stacks.
    #[arg(long)]
    pub include_incorrect: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PrototypeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Share of variance the PCA keeps.
    #[arg(long, default_value_t = 0.90)]
    pub variance: f64,
    /// Subjects with sagittal maps, by median-plane confidence.
    #[arg(long, default_value_t = 3)]
    pub top_subjects: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Key-value generator spec; defaults apply when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Zero the notch depth.
    #[arg(long)]
    pub negative_control: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// `--seed`, else `HRTFXAI_SEED`, else 0.
pub fn resolve_seed(flag: Option<u64>) -> anyhow::Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("HRTFXAI_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| anyhow::Error::new(UsageError(format!("HRTFXAI_SEED={v:?} is not an unsigned integer")))),
        Err(_) => Ok(0),
    }
}

/// Bad invocation detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        return 2;
    }
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<hrtfxai::Error>())
        .any(hrtfxai::Error::is_numerical);
    if numerical {
        4
    } else {
        3
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool set once");
    }
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Explain(a) => commands::explain(a),
        Command::Prototype(a) => commands::prototype(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
