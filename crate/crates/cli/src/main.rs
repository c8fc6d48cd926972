use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trustbench::sampler::SamplerConfig;
use trustbench::trust::DomainConfig;

mod commands;

/// Supervisor trust models: simulate cohorts, identify and cluster models,
/// evaluate them, and run the live study service.
#[derive(Debug, Parser)]
#[command(name = "trustbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run synthetic supervisors through practice and two full sessions.
    Simulate(SimulateArgs),
    /// Fit trust models to training sessions.
    Identify(IdentifyArgs),
    /// Cluster individual models and fit one model per cluster.
    Cluster(ClusterArgs),
    /// Score model families on test sessions and export figure data.
    Evaluate(EvaluateArgs),
    /// Serve live study sessions over websocket.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DomainArgs {
    /// Step length, seconds.
    #[arg(long, default_value_t = DomainConfig::default().dt)]
    pub dt: f64,
    /// Performance threshold separating the low and high modes.
    #[arg(long, default_value_t = DomainConfig::default().p_star)]
    pub p_star: f64,
    /// Lower soft trust boundary.
    #[arg(long, default_value_t = DomainConfig::default().tau1)]
    pub tau1: f64,
    /// Upper soft trust boundary.
    #[arg(long, default_value_t = DomainConfig::default().tau2)]
    pub tau2: f64,
    /// Saturation pull-back rate.
    #[arg(long, default_value_t = DomainConfig::default().epsilon)]
    pub epsilon: f64,
    /// Exogenous environmental input.
    #[arg(long, default_value_t = DomainConfig::default().w)]
    pub w: f64,
}

impl DomainArgs {
    pub fn config(&self) -> DomainConfig {
        DomainConfig {
            dt: self.dt,
            p_star: self.p_star,
            tau1: self.tau1,
            tau2: self.tau2,
            epsilon: self.epsilon,
            w: self.w,
            ..DomainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    /// Trigger ratio of both event samplers.
    #[arg(long = "sampler-tau", default_value_t = SamplerConfig::default().tau)]
    pub tau: f64,
    /// Error weight of the trigger function.
    #[arg(long = "sampler-gain", default_value_t = SamplerConfig::default().w_gain)]
    pub w_gain: f64,
    /// Minimum seconds between sampling events.
    #[arg(long, default_value_t = SamplerConfig::default().min_interval)]
    pub min_interval: f64,
}

impl SamplerArgs {
    pub fn config(&self) -> SamplerConfig {
        SamplerConfig {
            tau: self.tau,
            w_gain: self.w_gain,
            min_interval: self.min_interval,
            ..SamplerConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory for the generated session logs.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Members drawn from each parameter blob.
    #[arg(long, default_value_t = 8)]
    pub members_per_blob: usize,
    /// JSON list of blob specifications replacing the three defaults.
    #[arg(long)]
    pub blobs: Option<PathBuf>,
    /// Standard deviation of per-step latent trust noise.
    #[arg(long, default_value_t = 0.002)]
    pub noise_sd: f64,
    /// Fuel per full session, seconds.
    #[arg(long, default_value_t = 600.0)]
    pub fuel: f64,
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelOrder {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

impl ModelOrder {
    pub fn get(self) -> usize {
        match self {
            ModelOrder::One => 1,
            ModelOrder::Two => 2,
        }
    }
}

#[derive(Debug, Args)]
#[group(id = "grouping", required = true, multiple = false)]
pub struct Grouping {
    /// One model for all members.
    #[arg(long, group = "grouping")]
    pub population: bool,
    /// One model per member.
    #[arg(long, group = "grouping")]
    pub individual: bool,
    /// JSON object mapping group names to member-id lists; one model per group.
    #[arg(long, group = "grouping")]
    pub groups: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub cohort_dir: PathBuf,
    /// Model directory to write into.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "n-t", value_enum, default_value = "1")]
    pub order: ModelOrder,
    /// Memory lengths to sweep, seconds.
    #[arg(long, value_delimiter = ',', default_values_t = trustbench::sysid::NQ_GRID_SECONDS)]
    pub nq_grid: Vec<f64>,
    #[command(flatten)]
    pub grouping: Grouping,
    #[command(flatten)]
    pub domain: DomainArgs,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Model directory holding `individual/` fits.
    #[arg(long)]
    pub models: PathBuf,
    /// Output file; defaults to `cluster.json` in the model directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fixed cluster count instead of selecting one.
    #[arg(long)]
    pub k: Option<usize>,
    /// Candidate cluster counts, e.g. `2-10` or `2,3,5`.
    #[arg(long, default_value = "2-10")]
    pub k_range: String,
    #[arg(long, default_value_t = trustbench::cluster::DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Allow k values whose best clustering has a one-member cluster.
    #[arg(long)]
    pub allow_singletons: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub cohort_dir: PathBuf,
    #[arg(long)]
    pub models: PathBuf,
    /// Directory for the report and figure exports.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub domain: DomainArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: std::net::SocketAddr,
    /// Where finished session logs are written.
    #[arg(long, env = "TRUSTBENCH_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Browser bundle served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    pub time_scale: f64,
    /// State updates per wall-clock second.
    #[arg(long, default_value_t = trustbench::study::DISPLAY_RATE_HZ)]
    pub display_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 600.0)]
    pub fuel: f64,
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

/// Exit status per error class.
fn exit_code(class: &str) -> u8 {
    match class {
        "numeric" => 10,
        "config" => 11,
        "data" => 12,
        "identification" => 13,
        "clustering" => 14,
        "cohort" => 15,
        "format" => 16,
        "io" => 17,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Identify(a) => commands::identify(&a),
        Command::Cluster(a) => commands::cluster(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Serve(a) => commands::serve(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({}): {e}", e.class());
            ExitCode::from(exit_code(e.class()))
        }
    }
}
