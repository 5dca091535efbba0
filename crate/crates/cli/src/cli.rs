use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use raris::{ConfigOverrides, EndpointSource, Method, NormalizerMode, TiltMode};

#[derive(Debug, Parser)]
#[command(name = "raris", version, about = "Rare-event probabilities of i.i.d. sample means")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate P(S_n/n > a) with naive MC, classical IS or ATIS
    Estimate(EstimateArgs),
    /// Choose the adaptive block length k from the ratio statistic
    SelectK(SelectKArgs),
    /// Re-run ATIS over a grid of mixture sizes
    MScan(MScanArgs),
    /// Exact, Richter and Jensen tail values
    Tail(TailArgs),
    /// Empirical checks of the conditioned-walk asymptotics
    Diagnose(DiagnoseArgs),
    /// Reproduce the reference experiment grids
    Benchmark(BenchmarkArgs),
}

/// Problem and run parameters shared by the simulation subcommands.
#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// Flat `key = value` file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Summand law: normal or cexp
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Threshold a_n
    #[arg(long = "a", alias = "a-n", allow_negative_numbers = true)]
    pub a: Option<f64>,
    /// Adaptive block length (ATIS)
    #[arg(long)]
    pub k: Option<usize>,
    /// Mixture components (ATIS)
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Replicates
    #[arg(long = "L")]
    pub l: Option<usize>,
    /// Draws per Monte Carlo normalizer
    #[arg(long = "nc")]
    pub n_c: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "tilt-mode", value_parser = parse_tilt_mode)]
    pub tilt_mode: Option<TiltMode>,
    #[arg(long = "ci-mode", value_parser = parse_ci_mode)]
    pub ci_mode: Option<NormalizerMode>,
    #[arg(long = "endpoint-source", value_parser = parse_endpoint_source)]
    pub endpoint_source: Option<EndpointSource>,
    #[arg(long, env = "RARIS_WORKERS")]
    pub workers: Option<usize>,
}

fn parse_tilt_mode(s: &str) -> Result<TiltMode, String> {
    s.parse().map_err(|e: raris::Error| e.to_string())
}

fn parse_ci_mode(s: &str) -> Result<NormalizerMode, String> {
    s.parse().map_err(|e: raris::Error| e.to_string())
}

fn parse_endpoint_source(s: &str) -> Result<EndpointSource, String> {
    s.parse().map_err(|e: raris::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: raris::Error| e.to_string())
}

impl ExperimentArgs {
    pub fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            dist: self.dist.clone(),
            n: self.n,
            a_n: self.a,
            k: self.k,
            m: self.m,
            l: self.l,
            n_c: self.n_c,
            seed: self.seed,
            tilt_mode: self.tilt_mode,
            ci_mode: self.ci_mode,
            endpoint_source: self.endpoint_source,
            method: None,
            workers: self.workers,
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Per-replicate CSV (replicate_index, log_weight, hit, endpoint)
    #[arg(long = "emit-weights")]
    pub emit_weights: Option<PathBuf>,
    /// Summary JSON; printed to stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run manifest; defaults to `<out>.manifest.json`
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectKArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// `start:stop:step` or a comma list; defaults to multiples of n/20
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = raris::ktune::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long = "L-scan", default_value_t = raris::ktune::DEFAULT_L_SCAN)]
    pub l_scan: usize,
    #[arg(long = "M-scan", default_value_t = raris::ktune::DEFAULT_M_SCAN)]
    pub m_scan: usize,
    /// CSV with columns j, stat
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MScanArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Comma list of mixture sizes
    #[arg(long = "m-grid", default_value = "10,30,100,300")]
    pub m_grid: String,
    /// CSV with columns M, p_hat, re_hat
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TailArgs {
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long = "a", alias = "a-n", allow_negative_numbers = true)]
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Endpoint,
    Gibbs,
    Maxpath,
    Paths,
    Rejection,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long, value_enum)]
    pub check: Check,
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Conditioned samples per check (paths per method for `paths`)
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Pass threshold; defaults depend on the check and law
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Values of n for `maxpath`
    #[arg(long = "n-grid", default_value = "50,100,200,400")]
    pub n_grid: String,
    /// `maxpath` uses a_n = z/√n
    #[arg(long, default_value_t = 2.326_35)]
    pub z: f64,
    #[arg(long = "k-fraction", default_value_t = 0.6)]
    pub k_fraction: f64,
    #[arg(long = "slope-cap", default_value_t = 2.0)]
    pub slope_cap: f64,
    #[arg(long = "curvature-cap", default_value_t = 0.5)]
    pub curvature_cap: f64,
    /// JSON report, or CSV for `paths`
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    GaussFig1,
    GaussFig2,
    GaussFig3,
    ExpCase,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long, env = "RARIS_WORKERS", default_value_t = 1)]
    pub workers: usize,
    /// Paired runs per point for gauss-fig3
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
    /// Override the preset's list of replicate counts
    #[arg(long = "l-grid")]
    pub l_grid: Option<String>,
    /// Override the preset's k grid
    #[arg(long = "k-grid")]
    pub k_grid: Option<String>,
}
