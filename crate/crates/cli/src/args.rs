//! Command-line surface. Defaults follow the training recipe the model was
//! designed around; ablation flags (window length, attention toggles, loss
//! choice) select the documented variants.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "ddcn",
    version,
    about = "Video super-resolution with dual dense connections",
    propagate_version = true
)]
pub struct Cli {
    /// Worker threads for tensor kernels; 1 is single-threaded, 0 uses all
    /// cores. Results are bit-identical for any value.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Blur and decimate HR sequences into LR inputs (sigma 1.6, x4)
    Degrade(DegradeArgs),
    /// Train from scratch on HR sequences; writes checkpoint and loss CSV
    Train(TrainArgs),
    /// Super-resolve the reference frame of one LR sequence
    Infer(InferArgs),
    /// Score predictions against ground truth (Y-channel PSNR/SSIM CSV)
    Eval(EvalArgs),
    /// Finite-difference every kernel and the end-to-end network
    Gradcheck(GradcheckArgs),
    /// Run the full invariant suite
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    /// Manifest: one HR sequence directory per line
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output root; one LR sequence directory per input
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Gaussian blur standard deviation
    #[arg(long, default_value_t = 1.6)]
    pub sigma: f64,
    /// Decimation factor
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossChoice {
    /// Reconstruction L1 plus 0.01-weighted bicubic L1
    Composite,
    /// Reconstruction L1 alone
    IrOnly,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Flat key=value hyperparameter file; flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Manifest: one HR sequence directory per line
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint destination
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Loss history CSV destination [default: <out>.loss.csv]
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Input window length: 3, 5 or 7 frames
    #[arg(long)]
    pub frames: Option<usize>,
    /// Disable temporal attention in group feature extraction
    #[arg(long)]
    pub no_attn_extract: bool,
    /// Disable temporal attention in the 3D fusion blocks
    #[arg(long)]
    pub no_attn_fusion: bool,
    /// Loss variant
    #[arg(long, value_enum)]
    pub loss: Option<LossChoice>,
    /// Total epochs (0 writes the fresh initialization)
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Seed for init, shuffling, cropping and augmentation
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Trained checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory holding exactly 2T+1 LR frames (*.ppm)
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output PPM path
    #[arg(long = "out")]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of predicted frames (*.ppm)
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth frames, same count and order
    #[arg(long)]
    pub truth: PathBuf,
    /// Pixels to strip from every edge before scoring
    #[arg(long, default_value_t = 0)]
    pub crop_border: usize,
    /// Write the CSV here instead of standard output
    #[arg(long = "out")]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Random inputs per kernel check
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    /// Parameter scalars sampled for the end-to-end check
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Register a deliberately wrong backward pass; the run must then fail
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
