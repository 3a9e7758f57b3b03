use std::path::PathBuf;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dtc::optimize::{EstimatorKind, Mode};

pub const OUT_DIR_ENV: &str = "DTC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "dtc", version, about = "Learned distance-to-collision estimation for planar manipulators")]
pub struct Cli {
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an environment file: a robot plus explicit or random obstacles.
    GenEnv(GenEnvArgs),
    /// Sample configurations uniformly and label them with noisy distances.
    GenDataset(GenDatasetArgs),
    /// Fit a GP or kernel-regression model to a dataset.
    Fit(FitArgs),
    /// Accuracy of a model against a noise-free test set.
    Eval(EvalArgs),
    /// Per-query time of the oracle and of one or more models.
    Bench(BenchArgs),
    /// Optimize a trajectory with one distance estimator.
    Optimize(OptimizeArgs),
    /// Run a packaged experiment.
    Experiment(ExperimentArgs),
    /// Rasterize the C-space distance field of a 2-joint scene.
    Field(FieldArgs),
}

fn estimator_parser() -> impl TypedValueParser<Value = EstimatorKind> {
    PossibleValuesParser::new(EstimatorKind::ALL.map(EstimatorKind::name))
        .map(|s| s.parse::<EstimatorKind>().expect("restricted to known names"))
}

fn mode_parser() -> impl TypedValueParser<Value = Mode> {
    PossibleValuesParser::new(["constraint", "maximize"]).map(|s| s.parse::<Mode>().expect("restricted to known names"))
}

#[derive(Debug, Args, Serialize)]
pub struct GenEnvArgs {
    #[arg(long, default_value_t = 7)]
    pub dof: usize,
    #[arg(long, default_value_t = 1.0)]
    pub link_length: f64,
    #[arg(long, default_value_t = dtc::kinematics::DEFAULT_LINK_WIDTH)]
    pub link_width: f64,
    /// Explicit obstacle as `x,y;x,y;...` in counter-clockwise order; repeatable.
    /// When absent, random obstacles are drawn [default: none].
    #[arg(long = "obstacle", value_name = "VERTICES")]
    pub obstacles: Vec<String>,
    /// Number of random obstacles.
    #[arg(long, default_value_t = 1)]
    pub random_obstacles: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output path [default: <out-dir>/env.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long, default_value_t = dtc::dataset::DEFAULT_TRAIN_SIZE)]
    pub n: usize,
    /// Sensor noise standard deviation; 0 produces a noise-free set.
    #[arg(long, default_value_t = dtc::dataset::DEFAULT_ETA)]
    pub eta: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads for labeling; the output does not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output path [default: <out-dir>/dataset.txt].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gp,
    Kr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelArg {
    Gaussian,
    Fk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorArg {
    Zero,
    LabelMean,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Environment the dataset was labeled against; supplies the robot for the FK kernel.
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Gp)]
    pub model: ModelKind,
    /// Kernel; kernel regression supports only `gaussian`.
    #[arg(long, value_enum, default_value_t = KernelArg::Fk)]
    pub kernel: KernelArg,
    /// Fixed kernel width; searched on a grid when absent [default: search].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Fixed GP noise variance.
    #[arg(long, default_value_t = dtc::regression::DEFAULT_ETA2, conflicts_with = "search_eta2")]
    pub eta2: f64,
    /// Select the GP noise variance by marginal likelihood instead [default: off].
    #[arg(long, default_value_t = false)]
    pub search_eta2: bool,
    #[arg(long, value_enum, default_value_t = PriorArg::Zero)]
    pub prior_mean: PriorArg,
    /// Output path [default: <out-dir>/model.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Noise-free test set; generated from `--env` when absent [default: none].
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Environment for a generated test set [default: none].
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Size of a generated test set.
    #[arg(long, default_value_t = dtc::dataset::DEFAULT_TEST_SIZE)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub seed: u64,
    /// CSV output [default: <out-dir>/metrics.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub env: PathBuf,
    /// Model file to time next to the oracle; repeatable [default: none].
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    #[arg(long, default_value_t = dtc::bench::MIN_TIMED_QUERIES)]
    pub n_queries: usize,
    #[arg(long, default_value_t = dtc::bench::DEFAULT_WARMUP)]
    pub warmup: usize,
    #[arg(long, default_value_t = 3)]
    pub seed: u64,
    /// CSV output [default: <out-dir>/timing.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long, value_parser = estimator_parser(), default_value = "oracle")]
    pub estimator: EstimatorKind,
    /// Fitted model; required by kr, gp-gaussian, gp-fk and hybrid (a GP-FK model) [default: none].
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_parser = mode_parser(), default_value = "constraint")]
    pub mode: Mode,
    /// Start configuration `a,b,...`; drawn from `--seed` with the goal when absent [default: random].
    #[arg(long, allow_hyphen_values = true, requires = "goal")]
    pub start: Option<String>,
    /// Goal configuration; given together with `--start` [default: random].
    #[arg(long, allow_hyphen_values = true, requires = "start")]
    pub goal: Option<String>,
    /// Seeds endpoint sampling, the RRT seed path and the sensor stream.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = dtc::optimize::DEFAULT_WAYPOINTS)]
    pub waypoints: usize,
    #[arg(long, default_value_t = dtc::optimize::DEFAULT_DTHETA)]
    pub dtheta_max: f64,
    #[arg(long, default_value_t = dtc::optimize::DEFAULT_D_MIN)]
    pub d_min: f64,
    /// Sensor noise used by noisy-oracle and hybrid.
    #[arg(long, default_value_t = dtc::dataset::DEFAULT_ETA)]
    pub eta: f64,
    #[arg(long, default_value_t = dtc::hybrid::DEFAULT_Z)]
    pub z: f64,
    #[arg(long, default_value_t = dtc::hybrid::DEFAULT_N_SENSOR)]
    pub n_sensor: usize,
    /// Lower bound the hybrid's confidence interval must clear to trust the GP.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub threshold: f64,
    /// Trajectory output; the report goes next to it with a `.report.json` suffix
    /// [default: <out-dir>/trajectory.txt].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Table1,
    Table2,
    Table3,
    NarrowPassage,
}

#[derive(Debug, Args, Serialize)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub kind: ExperimentKind,
    /// TOML file overriding fields of the built-in configuration [default: built-in].
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed override [default: from config].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trial or scene count override [default: from config].
    #[arg(long)]
    pub count: Option<usize>,
    /// Worker threads; timing always runs single-threaded.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Print the resolved configuration and exit [default: off].
    #[arg(long, default_value_t = false)]
    pub print_config: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct FieldArgs {
    #[arg(long)]
    pub env: PathBuf,
    /// GP model whose mean and confidence are added as columns [default: none].
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub threshold: f64,
    /// CSV output [default: <out-dir>/field.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}
