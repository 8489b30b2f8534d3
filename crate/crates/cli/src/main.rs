mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Simulate LSTM inference on a four-CU accelerator.
#[derive(Parser)]
#[command(name = "epur", version, about)]
struct Cli {
    /// Print reports as JSON instead of aligned text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a network descriptor and deterministic random weights.
    GenNetwork(commands::GenArgs),
    /// Run the reference model only.
    Infer(commands::InferArgs),
    /// Simulate one inference on the accelerator.
    Simulate(commands::SimulateArgs),
    /// LRU reuse distances of the weight accesses, per layer and CU.
    AnalyzeReuse(commands::ReuseArgs),
    /// Run the same workload under two policies or configurations.
    Compare(commands::CompareArgs),
    /// Output error of quantized partials across bit widths.
    QuantizeSweep(commands::SweepArgs),
}

#[derive(Args, Clone)]
pub struct NetArgs {
    /// Network descriptor JSON, or `preset:NAME` for a built-in shape.
    #[arg(long)]
    pub network: String,
    /// Weight blob. Without it weights are generated from --weight-seed.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub weight_seed: u64,
}

#[derive(Args, Clone)]
pub struct InputArgs {
    /// Input sequence, binary or `.csv`. Without it a uniform random
    /// sequence is drawn from --seed and --length.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub length: usize,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Level {
    Error,
    Warn,
}

#[derive(Args, Clone)]
pub struct HwArgs {
    /// Hardware preset (epur, epur-mwl).
    #[arg(long, default_value = "epur")]
    pub preset: String,
    /// Hardware configuration JSON; replaces --preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input frames per second for the real-time check.
    #[arg(long, default_value_t = 100.0)]
    pub fps: f64,
    /// Treat an MU bottleneck as an error or a warning.
    #[arg(long, value_enum)]
    pub mu_check: Option<Level>,
    /// Reduce each sub-vector with a pairwise tree instead of summing
    /// sequentially (not bit-exact with the reference).
    #[arg(long)]
    pub tree: bool,
    /// Quantize MWL partial outputs.
    #[arg(long, overrides_with = "no_quant")]
    pub quant: bool,
    #[arg(long, overrides_with = "quant")]
    pub no_quant: bool,
    /// Quantization bits.
    #[arg(long)]
    pub bits: Option<u32>,
    /// Fixed clamp range instead of calibrating it.
    #[arg(long)]
    pub alpha: Option<f32>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EPUR_LOG", "warn")).init();
    let cli = Cli::parse();
    let out = commands::Output { json: cli.json };
    let result = match cli.command {
        Command::GenNetwork(a) => commands::gen_network(a, out),
        Command::Infer(a) => commands::infer(a, out),
        Command::Simulate(a) => commands::simulate(a, out),
        Command::AnalyzeReuse(a) => commands::analyze_reuse(a, out),
        Command::Compare(a) => commands::compare(a, out),
        Command::QuantizeSweep(a) => commands::quantize_sweep(a, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_IO: u8 = 3;
pub const EXIT_PARSE: u8 = 4;
pub const EXIT_CAPACITY: u8 = 5;
pub const EXIT_NUMERIC: u8 = 6;
pub const EXIT_INVARIANT: u8 = 7;
pub const EXIT_CONFIG: u8 = 8;
pub const EXIT_SHAPE: u8 = 9;

fn exit_code(e: &anyhow::Error) -> u8 {
    use epur::Error as E;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err.root() {
                E::Io(_) => EXIT_IO,
                E::Parse(_) => EXIT_PARSE,
                E::Capacity { .. } => EXIT_CAPACITY,
                E::Numeric(_) | E::CodeRange { .. } => EXIT_NUMERIC,
                E::Invariant(_) => EXIT_INVARIANT,
                E::Config(_) => EXIT_CONFIG,
                E::Shape(_) => EXIT_SHAPE,
                E::Layer { .. } => EXIT_OTHER,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if cause.is::<serde_json::Error>() {
            return EXIT_PARSE;
        }
    }
    EXIT_OTHER
}
