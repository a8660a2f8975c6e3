//! The `memprop` command line: single-neuron simulation, gradient checks,
//! training, evaluation, weight export and hardware cost reports.
//!
//! Exit codes: 0 ok, 1 failed check, 2 configuration error, 3 numerical
//! failure, 4 data error.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::data::DataError;
use crate::device::{DeviceError, Integrator};
use crate::hwcost::HwError;
use crate::network::NetworkError;
use crate::train::{Readout, TrainError};

pub type Out = dyn Write + Send;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    CheckFailed(String),
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Data(_) | CliError::Output(_) => 4,
        }
    }
}

impl From<DeviceError> for CliError {
    fn from(e: DeviceError) -> Self {
        match e {
            DeviceError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Device(d) => d.into(),
            NetworkError::NonFinite { .. } | NetworkError::Autodiff(_) => CliError::Numeric(e.to_string()),
            NetworkError::Config(_) | NetworkError::Dimension { .. } => CliError::Config(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Network(n) => n.into(),
            TrainError::Config(_) => CliError::Config(e.to_string()),
            TrainError::NonFinite(_) | TrainError::Diverged { .. } => CliError::Numeric(e.to_string()),
            TrainError::EmptyDataset | TrainError::Checkpoint(_) | TrainError::Io { .. } => {
                CliError::Data(e.to_string())
            }
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<HwError> for CliError {
    fn from(e: HwError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "memprop", version, about = "Memristive spiking network simulator and trainer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one MIF neuron driven by alpha-current impulses.
    NeuronSim(NeuronSimArgs),
    /// Compare tape gradients of a random model with finite differences.
    Gradcheck(GradcheckArgs),
    /// Train a dense network with backpropagation through time.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Map checkpoint weights to differential conductance pairs.
    ExportWeights(ExportArgs),
    /// Area, power and latency against a mixed-signal design.
    Hwcost(HwcostArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Oracle {
    None,
    Rk4,
}

#[derive(Debug, Args)]
pub struct NeuronSimArgs {
    /// TOML file with device parameters; missing keys keep their defaults.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub integrator: Option<Integrator>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long, value_enum, default_value_t = Oracle::None)]
    pub oracle: Oracle,
    /// RK4 inner steps per outer step.
    #[arg(long, default_value_t = 10)]
    pub oracle_substeps: usize,
    /// Input impulses as `step:weight,...` (weights in A).
    #[arg(long, default_value = "100:3e-5")]
    pub spikes: String,
    /// CSV destination; the trace goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "8-4-3")]
    pub arch: String,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds to check, starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 100.0)]
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Mnist,
    Fmnist,
    Dvs,
    /// Synthetic 8x8 bright-left vs bright-right images.
    Toy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetKind,
    /// Directory with IDX files (`train-*`, `t10k-*`) or `train/` and
    /// `test/` event folders.
    #[arg(long, env = "MSNN_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Use at most this many samples of each split.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Steps per evaluation sample (event test data uses 360).
    #[arg(long)]
    pub eval_steps: Option<usize>,
    /// Hidden layer sizes, e.g. `100` or `200-100`.
    #[arg(long, default_value = "100")]
    pub hidden: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eval_fraction: f64,
    /// Impulse weight per unit input (A).
    #[arg(long)]
    pub input_gain: Option<f64>,
    /// Attenuation of crossbars fed by MIF layers (A/V).
    #[arg(long)]
    pub hidden_attenuation: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Directory receiving `best.msnn`.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint file, or a directory holding `best.msnn`.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
    /// Defaults to the checkpoint's evaluation steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = Readout::Membrane)]
    pub readout: Readout,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Write the confusion matrix as CSV.
    #[arg(long)]
    pub confusion: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Siemens per unit weight; fitted to the largest weight when omitted.
    #[arg(long)]
    pub g_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct HwcostArgs {
    /// TOML file with hardware assumptions; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub devices_per_weight: Option<usize>,
    #[arg(long)]
    pub activity: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub adc_freq: Option<f64>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

impl ValueEnum for Readout {
    fn value_variants<'a>() -> &'a [Self] {
        &[Readout::Membrane, Readout::Spikes]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Readout::Membrane => "membrane",
            Readout::Spikes => "spikes",
        }))
    }
}

/// Run a parsed command. Results go to `out`; notes that must stay out of
/// a CSV written to `out` go to `err`.
pub fn execute(cli: Cli, out: &mut Out, err: &mut Out) -> Result<(), CliError> {
    match cli.command {
        Command::NeuronSim(a) => commands::neuron_sim(&a, out, err),
        Command::Gradcheck(a) => commands::gradcheck(&a, out),
        Command::Train(a) => commands::train(&a, out),
        Command::Eval(a) => commands::eval(&a, out),
        Command::ExportWeights(a) => commands::export(&a, out),
        Command::Hwcost(a) => commands::hwcost(&a, out),
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
/// Results go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut Out, err: &mut Out) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
