//! `msgraph`: message-sequence-graph injection detection for CAN logs.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error.

mod commands;
mod error;
mod input;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msgraph_core::detect::DEFAULT_THRESHOLD;
use msgraph_core::seq_model::ModelConfig;
use msgraph_core::similarity::Metric;

#[derive(Parser, Debug)]
#[command(name = "msgraph", version, about = "Detect injected CAN frames with message-sequence graphs")]
pub struct Cli {
    /// Log level for diagnostics on stderr (error, warn, info, debug)
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Similarity series of consecutive window graphs, as CSV
    Similarity(SimilarityArgs),
    /// Flag pairs whose similarity falls below a threshold
    DetectThreshold(ThresholdArgs),
    /// Bayesian single change-point detection on a similarity series
    DetectCpd(CpdArgs),
    /// Train the LSTM classifier on a benign log followed by an attack log
    TrainLstm(TrainArgs),
    /// Classify similarity sequences with a trained (or freshly trained) LSTM
    PredictLstm(PredictArgs),
    /// Sweep window sizes, metrics and detectors over a labelled log
    Eval(EvalArgs),
    /// Synthesize a benign Markov-chain log
    Generate(GenerateArgs),
    /// Insert fabricated frames into a log
    Inject(InjectArgs),
    /// Write window graphs in Graphviz DOT format
    ExportDot(DotArgs),
}

#[derive(Args, Debug, Clone)]
pub struct LogOpts {
    /// Bus channel to keep; `*` keeps every channel
    #[arg(long, default_value = "can0")]
    pub channel: String,
    /// Abort on the first malformed line instead of skipping it
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug, Clone)]
pub struct WindowOpts {
    /// Frames per window
    #[arg(long, default_value_t = 100)]
    pub window_size: usize,
    /// Frames between window starts [default: the window size]
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct SeriesOpts {
    /// candump log, or a similarity CSV when the file name ends in .csv
    #[arg(short, long)]
    pub input: PathBuf,
    /// Label sidecar for a log input: one 0/1 per frame
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Similarity metric: cosine or pearson
    #[arg(long, default_value_t = Metric::Pearson)]
    pub metric: Metric,
    #[command(flatten)]
    pub window: WindowOpts,
    #[command(flatten)]
    pub log: LogOpts,
}

#[derive(Args, Debug)]
pub struct SimilarityArgs {
    #[command(flatten)]
    pub series: SeriesOpts,
    /// Output CSV [default: stdout]
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write an SVG line chart of the series
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub series: SeriesOpts,
    /// Similarity below this value is an attack
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Choose the accuracy-maximizing threshold from the labels instead
    #[arg(long)]
    pub calibrate: bool,
    /// JSON report [default: stdout]
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Per-pair verdict CSV
    #[arg(long)]
    pub verdicts: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CpdOpts {
    /// Posterior draws kept after burn-in
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    /// Draws discarded while step sizes adapt
    #[arg(long, default_value_t = 5_000)]
    pub burn_in: usize,
    /// Strength of change (percent) above which a change is declared
    #[arg(long, default_value_t = 1.0)]
    pub strength: f64,
    /// Sampler seed
    #[arg(long, default_value_t = 0)]
    pub cpd_seed: u64,
}

#[derive(Args, Debug)]
pub struct CpdArgs {
    #[command(flatten)]
    pub series: SeriesOpts,
    #[command(flatten)]
    pub cpd: CpdOpts,
    /// JSON report [default: stdout]
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Change-point posterior CSV (tau,count,probability)
    #[arg(long)]
    pub posterior: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelOpts {
    /// Units of the first LSTM layer
    #[arg(long, default_value_t = 42)]
    pub input_units: usize,
    /// Units of the second LSTM layer
    #[arg(long, default_value_t = 12)]
    pub hidden_units: usize,
    /// Output units (only 1 is supported)
    #[arg(long, default_value_t = 1)]
    pub output_units: usize,
    #[arg(long, default_value_t = 0.2)]
    pub dropout_rate: f64,
    /// Adam learning rate
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 128)]
    pub epochs: usize,
    /// Leading share of samples used for training
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub train_fraction: f64,
    /// Similarity values per sample
    #[arg(long, default_value_t = 10)]
    pub lookback: usize,
    /// Initialization, shuffling and dropout seed
    #[arg(long, default_value_t = 0)]
    pub model_seed: u64,
}

impl ModelOpts {
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            input_units: self.input_units,
            hidden_units: self.hidden_units,
            output_units: self.output_units,
            dropout_rate: self.dropout_rate,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            train_fraction: self.train_fraction,
            lookback: self.lookback,
            features: 1,
            seed: self.model_seed,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Benign log or similarity CSV
    #[arg(long)]
    pub benign: PathBuf,
    /// Label sidecar for the benign log [default: all benign]
    #[arg(long)]
    pub benign_labels: Option<PathBuf>,
    /// Attack log or similarity CSV
    #[arg(long)]
    pub attack: PathBuf,
    /// Label sidecar for the attack log [default: all injected]
    #[arg(long)]
    pub attack_labels: Option<PathBuf>,
    /// Similarity metric: cosine or pearson
    #[arg(long, default_value_t = Metric::Pearson)]
    pub metric: Metric,
    #[command(flatten)]
    pub window: WindowOpts,
    #[command(flatten)]
    pub log: LogOpts,
    #[command(flatten)]
    pub model: ModelOpts,
    /// Where to write the trained model (JSON)
    #[arg(long)]
    pub model_out: PathBuf,
    /// Per-epoch loss and accuracy CSV
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub series: SeriesOpts,
    /// Trained model (JSON)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Train on the leading share of the labelled input and predict the rest
    #[arg(long)]
    pub train: bool,
    #[command(flatten)]
    pub model_opts: ModelOpts,
    /// Prediction CSV [default: stdout]
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectorArg {
    Threshold,
    Cpd,
    Lstm,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Labelled candump log
    #[arg(short, long)]
    pub input: PathBuf,
    /// Label sidecar: one 0/1 per frame
    #[arg(long)]
    pub labels: PathBuf,
    /// Window sizes to sweep
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub window_sizes: Vec<usize>,
    /// Metrics to sweep
    #[arg(long, value_delimiter = ',', default_value = "cosine,pearson")]
    pub metrics: Vec<Metric>,
    /// Detectors to sweep
    #[arg(long, value_enum, value_delimiter = ',', default_value = "threshold,cpd")]
    pub detectors: Vec<DetectorArg>,
    /// Threshold for the threshold detector
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Calibrate the threshold per run instead
    #[arg(long)]
    pub calibrate: bool,
    #[command(flatten)]
    pub cpd: CpdOpts,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub log: LogOpts,
    /// Result matrix CSV [default: stdout]
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Directory for one JSON report per run
    #[arg(long)]
    pub reports: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Distinct identifiers (at most 16)
    #[arg(long, default_value_t = 10)]
    pub pids: usize,
    /// Probability mass spread away from the cyclic successor
    #[arg(long, default_value_t = 0.05)]
    pub jitter: f64,
    /// Frames to generate
    #[arg(long, default_value_t = 10_000)]
    pub length: usize,
    /// Mean seconds between frames
    #[arg(long, default_value_t = 0.001)]
    pub inter_arrival: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Channel name written on every frame
    #[arg(long, default_value = "can0")]
    pub bus: String,
    /// Output log [default: stdout]
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write an all-benign label sidecar
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InjectArgs {
    /// Benign candump log
    #[arg(short, long)]
    pub input: PathBuf,
    /// Existing label sidecar to carry over
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Identifier of the fabricated frames
    #[arg(long, default_value = "7FF")]
    pub target_pid: String,
    /// Payload as hex bytes
    #[arg(long, default_value = "FFFF")]
    pub payload: String,
    /// One fabricated frame after every this many original frames
    #[arg(long, default_value_t = 1)]
    pub rate: usize,
    /// First original frame of the injection interval
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// End (exclusive) of the injection interval [default: end of log]
    #[arg(long)]
    pub end: Option<usize>,
    /// Timestamp jitter seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub log: LogOpts,
    /// Output log [default: stdout]
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Label sidecar for the output
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DotArgs {
    /// candump log
    #[arg(short, long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub window: WindowOpts,
    #[command(flatten)]
    pub log: LogOpts,
    /// Only this window index [default: every window]
    #[arg(long)]
    pub window_index: Option<usize>,
    /// Output DOT [default: stdout]
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log_level).format_timestamp(None).init();
    match commands::run(cli.command) {
        Ok(()) | Err(error::CliError::Closed) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
