//! `retinex`: synthesize pairs, train, decompose, enhance, evaluate and
//! inspect luma histograms.

mod common;
mod infer;
mod synth;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use common::exit_code;

#[derive(Parser, Debug)]
#[command(name = "retinex", version, about = "Retinex decomposition and low-light enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Darken normal-light images into a low/high paired dataset.
    Synth(SynthArgs),
    /// Train one phase or the whole schedule.
    Train(TrainArgs),
    /// Split images into reflectance and illumination.
    Decompose(DecomposeArgs),
    /// Enhance low-light images.
    Enhance(EnhanceArgs),
    /// PSNR/SSIM of input and enhanced images against ground truth.
    Eval(EvalArgs),
    /// Pooled Y-channel histogram of a directory of images.
    Hist(HistArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Directory of normal-light PNGs.
    #[arg(long, required_unless_present = "scenes")]
    pub input_dir: Option<PathBuf>,
    /// Generate this many procedural scenes instead of reading images.
    #[arg(long, conflicts_with = "input_dir")]
    pub scenes: Option<usize>,
    /// Side length of procedural scenes.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Histogram CSV to fit the darkening to, or `none`.
    #[arg(long)]
    pub target_hist: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Standard deviation of the added Gaussian noise.
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    Decom,
    Enhance,
    Finetune,
    All,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = PhaseArg::All)]
    pub phase: PhaseArg,
    /// `key = value` run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output weights; logs, checkpoints and the manifest are written next
    /// to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Weights to start from (required for enhance and finetune).
    #[arg(long, conflicts_with = "resume")]
    pub init: Option<PathBuf>,
    /// Checkpoint to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print progress every this many iterations (0 disables).
    #[arg(long, default_value_t = 100)]
    pub report_every: usize,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// A PNG file or a directory of PNGs.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// A PNG file or a directory of PNGs.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Toggle::Off)]
    pub denoise: Toggle,
    /// Also write `<name>_R.png`, `<name>_I.png` and `<name>_Ihat.png`.
    #[arg(long)]
    pub save_intermediates: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Toggle::Off)]
    pub denoise: Toggle,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Evaluate every pair instead of the held-out split.
    #[arg(long)]
    pub all: bool,
    /// Seed of the train/eval split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct HistArgs {
    #[arg(long)]
    pub input_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth::cmd_synth(&a),
        Command::Train(a) => train::cmd_train(&a),
        Command::Decompose(a) => infer::cmd_decompose(&a),
        Command::Enhance(a) => infer::cmd_enhance(&a),
        Command::Eval(a) => infer::cmd_eval(&a),
        Command::Hist(a) => synth::cmd_hist(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
