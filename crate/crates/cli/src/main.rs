//! `cellseg` command-line tool.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 I/O or format error,
//! 4 dimension mismatch, 5 constant image (PCC undefined).

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cellseg::{Activation, Connectivity, PipelineConfig};

mod commands;
mod manifest;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DIMENSIONS: u8 = 4;
pub const EXIT_CONSTANT: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<cellseg::Error> for CliError {
    fn from(err: cellseg::Error) -> Self {
        use cellseg::Error::*;
        let code = match &err {
            DimensionMismatch { .. } | SeedOutsideMask { .. } | MarkerExceedsMask { .. } => EXIT_DIMENSIONS,
            ConstantImage => EXIT_CONSTANT,
            NegativeH(_)
            | InvalidConfig(_)
            | CropTooLarge { .. }
            | BadCount(_)
            | ThresholdTooLow(_)
            | EmptyStack
            | PlacementFailure { .. }
            | EmptyInput => EXIT_USAGE,
            _ => EXIT_IO,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Appended to every subcommand's help.
macro_rules! defaults_note {
    () => {
        "Pipeline defaults: h-maxima depth h = 10, semantic threshold 0.5, standard sigmoid, \
8-connectivity, flooding on the raw distance map.\n\
mAP averages detection precision TP/(TP+FP+FN) over the 10 IoU thresholds \
0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95.\n\
Exit codes: 0 ok, 2 invalid arguments, 3 I/O or format error, 4 dimension mismatch, 5 constant image."
    };
}
pub(crate) use defaults_note;

#[derive(Parser, Debug)]
#[command(
    name = "cellseg",
    version,
    about = "Segmentation post-processing, distance targets and metrics"
)]
#[command(
    after_help = "Exit codes: 0 ok, 2 invalid arguments, 3 I/O or format error, 4 dimension mismatch, \
5 constant image.\nCELLSEG_THREADS caps worker threads (0 or unset = all cores)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn distance + semantic predictions into an instance label map
    /// (h-maxima seeds, then seeded watershed).
    #[command(after_help = defaults_note!())]
    Postprocess(commands::PostprocessArgs),
    /// Score predictions: mAP over IoU thresholds 0.50, 0.55, ..., 0.95, semantic IoU, or PCC.
    Evaluate(commands::EvaluateArgs),
    /// Distance-map training target from an instance label map.
    #[command(after_help = defaults_note!())]
    Distmap(commands::DistmapArgs),
    /// Maximum intensity projection of focal planes.
    #[command(after_help = defaults_note!())]
    Project(commands::ProjectArgs),
    /// Random square crops of an image (and its labels) plus a crop manifest.
    #[command(after_help = defaults_note!())]
    Crop(commands::CropArgs),
    /// Synthetic touching-cell ground truth for testing the pipeline.
    #[command(after_help = defaults_note!())]
    Synth(commands::SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ActivationArg {
    Standard,
    Shifted,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ConnectivityArg {
    #[value(name = "4")]
    Four,
    #[value(name = "8")]
    Eight,
}

impl From<ConnectivityArg> for Connectivity {
    fn from(c: ConnectivityArg) -> Self {
        match c {
            ConnectivityArg::Four => Connectivity::Four,
            ConnectivityArg::Eight => Connectivity::Eight,
        }
    }
}

/// Post-processing parameters shared by `postprocess` and `evaluate`.
#[derive(Args, Debug, Clone)]
pub struct PipelineArgs {
    /// h-maxima depth: maxima of the distance map shallower than this are merged
    #[arg(long, default_value_t = cellseg::DEFAULT_H, allow_negative_numbers = true)]
    h: f64,
    /// Probability cut applied to the activated semantic prediction
    #[arg(long, default_value_t = cellseg::DEFAULT_SEMANTIC_THRESHOLD, allow_negative_numbers = true)]
    threshold: f64,
    /// Semantic activation: standard sigmoid, or sigmoid centered on 0.5
    #[arg(long, value_enum, default_value = "standard")]
    activation: ActivationArg,
    /// Pixel connectivity for seeds and flooding
    #[arg(long, value_enum, default_value = "8")]
    connectivity: ConnectivityArg,
    /// Flood the h-maxima transformed map instead of the raw distance map
    #[arg(long)]
    flood_on_hmax: bool,
}

impl PipelineArgs {
    pub fn config(&self) -> CliResult<PipelineConfig> {
        let cfg = PipelineConfig {
            h: self.h,
            activation: match self.activation {
                ActivationArg::Standard => Activation::Standard,
                ActivationArg::Shifted => Activation::Shifted,
            },
            semantic_threshold: self.threshold,
            connectivity: self.connectivity.into(),
            flood_on_hmax: self.flood_on_hmax,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn configure_threads() -> CliResult {
    let Ok(value) = std::env::var("CELLSEG_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("CELLSEG_THREADS must be a non-negative integer, got {value:?}")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    configure_threads()?;
    match cli.command {
        Command::Postprocess(args) => commands::postprocess(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Distmap(args) => commands::distmap(&args),
        Command::Project(args) => commands::project(&args),
        Command::Crop(args) => commands::crop(&args),
        Command::Synth(args) => commands::synth(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
