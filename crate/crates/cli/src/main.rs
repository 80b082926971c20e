//! `shrink`: compress time series, decode them at any resolution, and run
//! outlier detection on the raw or compressed form.

mod commands;
mod output;

use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use shrink_core::datasets::{InjectionKind, SeriesFormat};
use shrink_core::detect::FeatureMode;

#[derive(Debug, Parser)]
#[command(name = "shrink", version, about = "Semantic time-series compression and compressed-domain outlier detection")]
struct Cli {
    /// Seed for every random choice (synthesis, injection, isolation forest).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Text series format: plain, ucr_row or kdd_labeled.
    #[arg(long, global = true)]
    format: Option<SeriesFormat>,

    /// Output file (output directory for `bench`). Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print the summary as JSON instead of `key: value` lines.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress a text series into an archive (requires --out).
    Compress(CompressArgs),
    /// Decode an archive back to a plain series.
    Decompress(DecompressArgs),
    /// Write the semantic points of an archive as `index,value` CSV.
    Transform(TransformArgs),
    /// Run a detector on a series or an archive; writes `index,score,label` CSV.
    Detect(DetectArgs),
    /// Plant labelled outliers into a series; writes `value,label` lines.
    Inject(InjectArgs),
    /// Generate a synthetic series.
    Synth(SynthArgs),
    /// Raw versus compressed detection over datasets; writes report.csv and
    /// report.json into the --out directory.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct CompressArgs {
    input: PathBuf,
    /// Target SNR in dB used to pick the quantization level [default: 25].
    #[arg(long, alias = "eta", conflicts_with = "base_epsilon")]
    snr_db: Option<f64>,
    /// Fixed base error bound instead of an SNR target.
    #[arg(long)]
    base_epsilon: Option<f64>,
    #[arg(long, default_value_t = shrink_core::model::DEFAULT_INTERVAL_LENGTH)]
    interval_length: usize,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
struct Resolution {
    /// Bit-exact reconstruction (the default).
    #[arg(long)]
    lossless: bool,
    /// Largest tolerated absolute error per point.
    #[arg(long)]
    max_error: Option<f64>,
    /// Linear segments only.
    #[arg(long)]
    base_only: bool,
}

#[derive(Debug, Args)]
struct DecompressArgs {
    input: PathBuf,
    #[command(flatten)]
    resolution: Resolution,
}

#[derive(Debug, Args)]
struct Selection {
    /// Segments with at most this many points are kept.
    #[arg(long, default_value_t = shrink_core::decode::DEFAULT_SEGMENT_MIN_POINTS)]
    segment_min_points: usize,
    /// Sub-bases with more merged cones than this keep their longest segment.
    #[arg(long, default_value_t = shrink_core::decode::DEFAULT_SUBBASE_MIN_CONES)]
    subbase_min_cones: usize,
}

#[derive(Debug, Args)]
struct TransformArgs {
    input: PathBuf,
    #[command(flatten)]
    selection: Selection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DetectorKind {
    Iforest,
    Dbscan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Features {
    Value,
    ValueDelta,
}

impl From<Features> for FeatureMode {
    fn from(f: Features) -> Self {
        match f {
            Features::Value => FeatureMode::ValueOnly,
            Features::ValueDelta => FeatureMode::ValuePlusDelta,
        }
    }
}

#[derive(Debug, Args)]
struct DetectorOpts {
    #[arg(long, default_value_t = 100)]
    n_trees: usize,
    #[arg(long, default_value_t = 256)]
    subsample: usize,
    /// Fraction flagged by the isolation forest. Defaults to the labelled
    /// outlier fraction when labels are given, else 0.01.
    #[arg(long)]
    contamination: Option<f64>,
    /// DBSCAN radius; several values form a grid searched against labels.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    /// DBSCAN neighbour count (the point itself included).
    #[arg(long, value_delimiter = ',')]
    min_pts: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Features::Value)]
    features: Features,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// A text series or an archive written by `compress`.
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = DetectorKind::Iforest)]
    detector: DetectorKind,
    /// Ground-truth labels, one 0/1 per line (a trailing `,label` column is
    /// also accepted). Enables ROC and PR AUC.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Also write the summary JSON to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    opts: DetectorOpts,
    #[command(flatten)]
    selection: Selection,
}

#[derive(Debug, Args)]
struct InjectArgs {
    input: PathBuf,
    #[arg(long)]
    count: usize,
    /// point_spike, contextual_shift or sequence_pattern.
    #[arg(long, default_value = "point_spike")]
    kind: InjectionKind,
    /// Deviation in standard deviations of the series.
    #[arg(long, default_value_t = 3.0)]
    magnitude: f64,
    #[arg(long, default_value_t = 0.0)]
    spread: f64,
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 16)]
    context: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    Sine,
    RandomWalk,
    PiecewiseLinear,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 100.0)]
    period: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0.1,-0.1")]
    slopes: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    segment_length: usize,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Labelled series files, or `synth:KIND[:N]` for a generated series
    /// with injected point spikes (KIND is sine, random_walk or
    /// piecewise_linear).
    #[arg(required = true)]
    datasets: Vec<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "iforest,dbscan")]
    detectors: Vec<DetectorKind>,
    #[arg(long, alias = "eta", default_value_t = shrink_core::quant::DEFAULT_TARGET_SNR_DB)]
    snr_db: f64,
    #[arg(long, default_value_t = shrink_core::model::DEFAULT_INTERVAL_LENGTH)]
    interval_length: usize,
    #[arg(long, default_value_t = shrink_core::pipeline::TIMING_REPETITIONS)]
    repetitions: usize,
    #[arg(long, value_enum, default_value_t = Features::Value)]
    features: Features,
    /// Outliers planted in each synthetic dataset.
    #[arg(long, default_value_t = 100)]
    outliers: usize,
    #[command(flatten)]
    selection: Selection,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data(m) => m,
        }
    }
}

impl From<shrink_core::Error> for Failure {
    fn from(e: shrink_core::Error) -> Self {
        match e {
            shrink_core::Error::InvalidParameter(_) => Self::Usage(e.to_string()),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match panic::catch_unwind(|| commands::run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("shrink: {}", f.message());
            ExitCode::from(f.code())
        }
        Err(_) => {
            eprintln!("shrink: internal error");
            ExitCode::from(3)
        }
    }
}
