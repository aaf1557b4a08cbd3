//! `matid`: batch material identification, target detection and tabular BMA.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "matid", version, about = "Hierarchical material identification by Bayesian model averaging")]
pub struct Cli {
    /// Seed for stochastic search (MC³).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for parallel fitting and scoring (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Directory that receives every output file.
    #[arg(long, visible_alias = "out", global = true, default_value = ".")]
    pub output_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every pixel of a cube against a library target and extract ROIs.
    Detect(DetectArgs),
    /// Identify the material of a spectrum or a detected ROI.
    Identify(IdentifyArgs),
    /// Bayesian model averaging over the columns of a CSV table.
    BmaTable(BmaTableArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Exhaustive,
    Occam,
    Mc3,
}

impl From<StrategyArg> for matid_core::Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Exhaustive => matid_core::Strategy::Exhaustive,
            StrategyArg::Occam => matid_core::Strategy::Occam,
            StrategyArg::Mc3 => matid_core::Strategy::Mc3,
        }
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, value_enum, default_value_t = StrategyArg::Occam)]
    pub strategy: StrategyArg,

    /// Largest model size considered.
    #[arg(long)]
    pub max_size: Option<usize>,

    /// Occam's window ratio C.
    #[arg(long, default_value_t = 20.0)]
    pub window_c: f64,

    /// MC³ iterations per chain.
    #[arg(long, default_value_t = 20_000)]
    pub iterations: usize,

    /// Independent MC³ chains.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,

    /// Drop models that have a retained sub-model with lower BIC.
    #[arg(long)]
    pub submodel_exclusion: bool,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// ENVI header of the image cube.
    #[arg(long)]
    pub cube: PathBuf,

    /// Binary data file (defaults to the header path without extension, or a common extension).
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Spectra CSV that holds the target.
    #[arg(long)]
    pub target_lib: PathBuf,

    #[arg(long)]
    pub target: String,

    /// ACE score above which a pixel joins an ROI.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,

    /// Covariance shrinkage toward the diagonal, in [0, 1].
    #[arg(long, default_value_t = matid_core::detection::DEFAULT_SHRINKAGE)]
    pub shrinkage: f64,

    /// Resample the target onto the cube's band grid when they differ.
    #[arg(long)]
    pub resample: bool,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Spectra CSV; its first spectrum column is identified.
    #[arg(long, conflicts_with_all = ["cube", "roi"], required_unless_present = "cube")]
    pub spectrum: Option<PathBuf>,

    /// ENVI header of the image cube the ROI came from.
    #[arg(long, requires = "roi")]
    pub cube: Option<PathBuf>,

    #[arg(long)]
    pub data: Option<PathBuf>,

    /// `rois.json` written by `detect`.
    #[arg(long, requires = "cube")]
    pub roi: Option<PathBuf>,

    /// Which ROI of the list to identify.
    #[arg(long, default_value_t = 0)]
    pub roi_id: usize,

    /// Subtract fitted background spectra before identification.
    #[arg(long, requires_all = ["cube", "target"])]
    pub background_removal: bool,

    /// `auto` (annulus around the ROI) or pixel coordinates `row:col,row:col,…`.
    #[arg(long, default_value = "auto")]
    pub backgrounds: String,

    /// Target spectrum used by background removal.
    #[arg(long)]
    pub target: Option<String>,

    /// Spectra CSV holding the target (defaults to --library).
    #[arg(long)]
    pub target_lib: Option<PathBuf>,

    #[arg(long)]
    pub library: PathBuf,

    /// JSON object mapping spectrum names to class paths.
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,

    /// Resample the library onto the observed band grid when they differ.
    #[arg(long)]
    pub resample: bool,

    /// Label tree nodes with probability conditional on their parent.
    #[arg(long)]
    pub conditional: bool,

    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Args)]
pub struct BmaTableArgs {
    #[arg(long)]
    pub csv: PathBuf,

    #[arg(long)]
    pub response: String,

    /// Comma-separated columns to replace by their natural log before fitting.
    #[arg(long, value_delimiter = ',')]
    pub log: Vec<String>,

    /// JSON object mapping group names to lists of predictors.
    #[arg(long)]
    pub groups: Option<PathBuf>,

    #[command(flatten)]
    pub search: SearchArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("matid: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
