//! `gtf`: light-field super-resolution pipeline as a batch tool.
//!
//! Exit codes: 0 success, 1 contract or budget failure, 2 bad input,
//! 3 internal error (clap's own usage errors also exit 2).

mod cfgstack;
mod cmd;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gtf_core::Error;

#[derive(Parser)]
#[command(name = "gtf", version, about = "Light-field super-resolution pipeline")]
struct Cli {
    /// Worker threads (default: OMNI_EPI_THREADS, else all cores).
    /// 1 forces fully sequential execution.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes with known per-layer disparities.
    GenData(GenDataArgs),
    /// Train a model; writes checkpoints and an append-only metrics log.
    Train(TrainArgs),
    /// Super-resolve a light-field bundle with a trained checkpoint.
    Infer(InferArgs),
    /// Score a prediction bundle against ground truth on the Y channel.
    Eval(EvalArgs),
    /// Print the parameter/FLOP budget table for a config or checkpoint.
    Inspect(InspectArgs),
    /// Check analytic gradients of every block family against finite
    /// differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Dataset directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Angular grid rows.
    #[arg(long, default_value_t = 5)]
    u: usize,
    /// Angular grid columns.
    #[arg(long, default_value_t = 5)]
    v: usize,
    /// High-resolution view height; must be divisible by --scale.
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    scale: usize,
    /// Texture layers per scene; 1 keeps every scene slope-verifiable.
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value = "png16")]
    format: String,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by gen-data (scene_*/ with lr/ and hr/).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints, metrics log, and the run manifest.
    #[arg(long)]
    out: PathBuf,
    /// Built-in starting point: gtf | gtf_tiny | nano.
    #[arg(long, default_value = "nano")]
    preset: String,
    /// key=value config file layered over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single key=value override layered over the file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Overrides the training seed from config.
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint to continue from.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightChoice {
    Ema,
    Raw,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input bundle directory (1 or 3 channels).
    #[arg(long)]
    input: PathBuf,
    /// Output bundle directory.
    #[arg(long)]
    out: PathBuf,
    /// Overlapping-tile inference with windowed blending.
    #[arg(long)]
    epsw: bool,
    /// Average the dihedral self-ensemble (8-fold; 4-fold when U != V).
    #[arg(long)]
    tta: bool,
    /// EPSW tile size in LR pixels.
    #[arg(long, default_value_t = 32)]
    patch: usize,
    /// EPSW tile step in LR pixels.
    #[arg(long, default_value_t = 16)]
    stride: usize,
    #[arg(long, value_enum, default_value_t = WeightChoice::Ema)]
    weights: WeightChoice,
    #[arg(long, default_value = "png16")]
    format: String,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction bundle directory.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth bundle directory.
    #[arg(long)]
    gt: PathBuf,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scene label for the report rows (default: pred directory name).
    #[arg(long)]
    scene: Option<String>,
}

#[derive(Args)]
struct InspectArgs {
    /// Read the config from a checkpoint instead of preset/config/set.
    #[arg(long, conflicts_with_all = ["preset", "config", "sets"])]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "gtf_tiny")]
    preset: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// LR input size the FLOP count is quoted at.
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 32)]
    width: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Probed elements per input tensor.
    #[arg(long, default_value_t = 12)]
    probes: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Contract { .. } | Error::Budget(_) => 1,
        Error::ConfigKey { .. }
        | Error::ConfigValue { .. }
        | Error::Format { .. }
        | Error::Io { .. }
        | Error::Image { .. } => 2,
        Error::Shape { .. } | Error::Numeric { .. } => 3,
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("OMNI_EPI_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = n {
        // Ignore AlreadyInitialized: only reachable in-process tests hit it.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    let outcome = match cli.command {
        Command::GenData(a) => cmd::gen_data::run(a),
        Command::Train(a) => cmd::train::run(a),
        Command::Infer(a) => cmd::infer::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Inspect(a) => cmd::inspect::run(a),
        Command::Gradcheck(a) => cmd::gradcheck::run(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
