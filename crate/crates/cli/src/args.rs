use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "hsdetect",
    version,
    about = "Hyperspectral target detection: SAM, MF, ACE, CEM, a spectral network, and ROC/PR evaluation"
)]
pub struct Cli {
    /// Seed for every random draw (scene synthesis, network init, shuffling)
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for statistics, scoring and training; 1 runs every
    /// stage single-threaded
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub parallel: u16,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a region with a classical detector and write a score map
    Detect(DetectArgs),
    /// Train the spectral network on a labelled region
    TrainNn(TrainArgs),
    /// Score a region with a trained spectral network
    ScoreNn(ScoreNnArgs),
    /// Compute ROC/PR curves, AUC and AP for a score map against a mask
    Eval(EvalArgs),
    /// Generate a synthetic scene with planted targets
    Synth(SynthArgs),
    /// Tabulate AP and AUC from evaluation summaries
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RegionArgs {
    /// Named region to process (from --regions, else the built-in benchmark
    /// presets); `scene` means the whole stored cube
    #[arg(long)]
    pub region: Option<String>,

    /// Explicit window as LINE_OFFSET,SAMPLE_OFFSET,LINES,SAMPLES in
    /// absolute scene coordinates
    #[arg(long, conflicts_with = "region", value_name = "L,S,LINES,SAMPLES")]
    pub window: Option<String>,

    /// Region preset file (`region <name> <lo> <so> <lines> <samples>` and
    /// `split <parent> <boundary> <left> <right>` lines)
    #[arg(long, value_name = "FILE")]
    pub regions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassicalMethod {
    Sam,
    Mf,
    Ace,
    Cem,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// ENVI header of the input cube
    #[arg(long, value_name = "HDR")]
    pub cube: PathBuf,

    /// Target signature CSV (one value per band, or wavelength,value)
    #[arg(long, value_name = "CSV")]
    pub signature: PathBuf,

    #[arg(long, value_enum)]
    pub method: ClassicalMethod,

    #[command(flatten)]
    pub region: RegionArgs,

    /// Estimate background statistics on this named region instead of the
    /// scored one
    #[arg(long, value_name = "NAME")]
    pub background_region: Option<String>,

    /// CEM on mean-centered data (centered second moment, t − μ)
    #[arg(long)]
    pub centered_cem: bool,

    /// Leave mask positives out of the background statistics (needs --mask)
    #[arg(long, requires = "mask")]
    pub exclude_positives: bool,

    /// Ground-truth mask header, used by --exclude-positives
    #[arg(long, value_name = "HDR")]
    pub mask: Option<PathBuf>,

    /// Output directory for the score map and runs.jsonl
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "HDR")]
    pub cube: PathBuf,

    /// Ground-truth mask header covering the training region
    #[arg(long, value_name = "HDR")]
    pub mask: PathBuf,

    #[command(flatten)]
    pub region: RegionArgs,

    #[arg(long, default_value_t = 50)]
    pub epochs: usize,

    #[arg(long, default_value_t = 1024)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 0.0002)]
    pub learning_rate: f64,

    /// Weight of positive pixels in the loss: `auto` (negatives/positives)
    /// or a number
    #[arg(long, default_value = "auto")]
    pub positive_weight: String,

    #[arg(long, default_value_t = hsdetect::nn::HIDDEN1)]
    pub hidden1: usize,

    #[arg(long, default_value_t = hsdetect::nn::HIDDEN2)]
    pub hidden2: usize,

    /// Feed raw spectra instead of per-band z-scores
    #[arg(long)]
    pub no_standardize: bool,

    /// Output directory for nn_model.bin and nn_loss.csv
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreNnArgs {
    #[arg(long, value_name = "HDR")]
    pub cube: PathBuf,

    /// Model file written by train-nn
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,

    #[command(flatten)]
    pub region: RegionArgs,

    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Score map header written by detect or score-nn
    #[arg(long, value_name = "HDR")]
    pub scores: PathBuf,

    /// Ground-truth mask header; cropped to the score map's region
    #[arg(long, value_name = "HDR")]
    pub mask: PathBuf,

    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Smallest FPR of the logarithmic ROC grid
    #[arg(long, default_value_t = 1e-6)]
    pub grid_min: f64,

    /// Points in the logarithmic ROC grid
    #[arg(long, default_value_t = 61)]
    pub grid_points: usize,

    /// Also render ROC and PR plots as SVG
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    #[arg(long, default_value_t = 256)]
    pub lines: usize,

    #[arg(long, default_value_t = 256)]
    pub samples: usize,

    #[arg(long, default_value_t = 64)]
    pub bands: usize,

    /// Number of planted target pixels
    #[arg(long, default_value_t = 100)]
    pub targets: usize,

    /// Matched-filter deflection of every planted pixel; sets the abundance
    #[arg(long, default_value_t = 6.0)]
    pub deflection: f64,

    /// White-noise standard deviation added to every pixel
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,

    /// Brighten 5% of background pixels by ×3
    #[arg(long)]
    pub contamination: bool,

    /// Column where the train region ends and the test region starts
    /// (default: half the width)
    #[arg(long)]
    pub split: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Summary JSON files written by eval
    #[arg(required = true, value_name = "SUMMARY")]
    pub summaries: Vec<PathBuf>,

    /// Also write the table as CSV
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}
