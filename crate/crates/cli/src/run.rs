use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use raris::diag::{self, MaxPathCaps};
use raris::estimate::estimate;
use raris::ktune::{default_grid, m_scan, parse_grid, select_k};
use raris::rng::with_workers;
use raris::tilt::{chernoff, exact_log_tail, jensen_log_tail, richter_log_density};
use raris::{ConfigOverrides, DistributionModel, ExperimentConfig, Method};
use serde::Serialize;

use crate::cli::{Check, DiagnoseArgs, EstimateArgs, ExperimentArgs, MScanArgs, SelectKArgs, TailArgs};
use crate::output::{default_manifest_path, to_json_string, Outputs};

/// Invalid invocation detected by the harness itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// File entries overlaid with flags.
pub fn merged_overrides(exp: &ExperimentArgs, method: Option<Method>) -> Result<ConfigOverrides> {
    let file = match &exp.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            ConfigOverrides::from_kv_str(&text)?
        }
        None => ConfigOverrides::default(),
    };
    let mut flags = exp.overrides();
    flags.method = method;
    Ok(file.merge(flags))
}

pub fn resolve(exp: &ExperimentArgs, method: Option<Method>, default: Method) -> Result<ExperimentConfig> {
    Ok(merged_overrides(exp, method)?.resolve(default)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    print!("{}", to_json_string(value)?);
    Ok(())
}

fn finish(outputs: Outputs, manifest: Option<&Path>, primary: Option<&Path>, command: &str, cfg: &ExperimentConfig) -> Result<()> {
    let path = match (manifest, primary) {
        (Some(m), _) => m.to_path_buf(),
        (None, Some(p)) => default_manifest_path(p),
        (None, None) => return Ok(()),
    };
    outputs.manifest(&path, command, serde_json::to_value(cfg)?, cfg.seed)
}

fn warn_clamps(count: u64) {
    if count > 0 {
        eprintln!("warning: {count} tilt targets were clamped into the attainable mean range");
    }
}

#[derive(Serialize)]
struct WeightRow {
    replicate_index: u64,
    log_weight: f64,
    hit: u8,
    endpoint: Option<f64>,
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    let merged = merged_overrides(&args.exp, args.method)?;
    let method = merged.method.ok_or_else(|| usage("missing required field method (flag --method)"))?;
    let mut cfg = merged.resolve(method)?;
    cfg.keep_weights = args.emit_weights.is_some();
    let summary = estimate(&cfg)?;
    warn_clamps(summary.clamp_count);
    let mut outputs = Outputs::new();
    if let Some(path) = &args.emit_weights {
        let rows = summary.replicates.iter().flatten().map(|r| WeightRow {
            replicate_index: r.replicate_index,
            log_weight: r.log_weight,
            hit: u8::from(r.hit),
            endpoint: r.endpoint,
        });
        outputs.csv(path, rows)?;
    }
    match &args.out {
        Some(path) => outputs.json(path, &summary)?,
        None => print_json(&summary)?,
    }
    finish(outputs, args.manifest.as_deref(), args.out.as_deref(), "estimate", &cfg)
}

#[derive(Serialize)]
struct KRow {
    j: usize,
    stat: f64,
}

pub fn cmd_select_k(args: &SelectKArgs) -> Result<()> {
    let cfg = resolve(&args.exp, Some(Method::Atis), Method::Atis)?;
    let grid = match &args.grid {
        Some(g) => parse_grid(g)?,
        None => default_grid(cfg.n),
    };
    let scan = select_k(&cfg.dist, &cfg, &grid, args.threshold, args.l_scan, args.m_scan)?;
    warn_clamps(scan.clamp_count);
    let mut outputs = Outputs::new();
    if let Some(path) = &args.out {
        let rows = scan.j_values.iter().zip(&scan.stats).map(|(&j, &stat)| KRow { j, stat });
        outputs.csv(path, rows)?;
    }
    print_json(&scan)?;
    finish(outputs, args.manifest.as_deref(), args.out.as_deref(), "select-k", &cfg)
}

#[derive(Serialize)]
struct MRow {
    #[serde(rename = "M")]
    m: usize,
    p_hat: f64,
    re_hat: f64,
}

fn parse_list(text: &str, what: &str) -> Result<Vec<usize>> {
    let v: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("invalid {what} '{text}' (expected a comma list of positive integers)")))?;
    if v.is_empty() || v.contains(&0) {
        return Err(usage(format!("invalid {what} '{text}'")));
    }
    Ok(v)
}

pub fn cmd_m_scan(args: &MScanArgs) -> Result<()> {
    let cfg = resolve(&args.exp, Some(Method::Atis), Method::Atis)?;
    let grid = parse_list(&args.m_grid, "M grid")?;
    let rows = m_scan(&cfg, &grid)?;
    let mut outputs = Outputs::new();
    if let Some(path) = &args.out {
        outputs.csv(path, rows.iter().map(|r| MRow { m: r.m, p_hat: r.p_hat, re_hat: r.re_hat }))?;
    }
    print_json(&rows)?;
    finish(outputs, args.manifest.as_deref(), args.out.as_deref(), "m-scan", &cfg)
}

#[derive(Serialize)]
struct TailReport {
    dist: String,
    n: usize,
    a_n: f64,
    exact_tail: Option<f64>,
    richter_density: f64,
    jensen_tail: f64,
    chernoff_rate: f64,
}

pub fn cmd_tail(args: &TailArgs) -> Result<()> {
    let model: DistributionModel = args.dist.parse()?;
    if args.n == 0 {
        return Err(usage("n must be at least 1"));
    }
    let report = TailReport {
        dist: model.name().to_string(),
        n: args.n,
        a_n: args.a,
        exact_tail: exact_log_tail(&model, args.n, args.a).map(f64::exp),
        richter_density: richter_log_density(&model, args.n, args.a)?.exp(),
        jensen_tail: jensen_log_tail(&model, args.n, args.a)?.exp(),
        chernoff_rate: chernoff(&model, args.a)?,
    };
    print_json(&report)
}

fn default_threshold(check: Check, model: &DistributionModel) -> f64 {
    match (check, model) {
        (Check::Gibbs, DistributionModel::CenteredExponential) => 0.08,
        (Check::Rejection, _) => 3.0,
        (Check::Maxpath, _) => 1.0,
        _ => 0.05,
    }
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<()> {
    let merged = merged_overrides(&args.exp, None)?;
    let mut outputs = Outputs::new();
    if args.check == Check::Maxpath {
        let model: DistributionModel = merged
            .dist
            .as_deref()
            .ok_or_else(|| usage("missing required field dist"))?
            .parse()?;
        let grid = parse_list(&args.n_grid, "n grid")?;
        let seed = merged.seed.unwrap_or(0);
        let z = args.z;
        let caps = MaxPathCaps { slope: args.slope_cap, curvature: args.curvature_cap };
        let report = with_workers(merged.workers.unwrap_or(1), || {
            diag::max_path_check(&model, &grid, |n| z / (n as f64).sqrt(), args.k_fraction, args.samples, seed, caps)
        })??;
        return emit_report(outputs, &report, args, model.name(), seed);
    }
    let mut cfg = merged.resolve(Method::Naive)?;
    let threshold = args.threshold.unwrap_or_else(|| default_threshold(args.check, &cfg.dist));
    let (model, n, a, seed, samples) = (cfg.dist.clone(), cfg.n, cfg.a_n, cfg.seed, args.samples);
    let report = with_workers(cfg.workers, || match args.check {
        Check::Endpoint => diag::endpoint_law_check(&model, n, a, samples, seed, threshold).map(Some),
        Check::Gibbs => diag::gibbs_marginal_check(&model, n, a, samples, seed, threshold).map(Some),
        Check::Rejection => diag::rejection_rate_check(&model, n, a, samples, seed).map(Some),
        Check::Paths | Check::Maxpath => Ok(None),
    })??;
    if let Some(report) = report {
        return emit_report(outputs, &report, args, model.name(), seed);
    }
    // typical paths
    cfg.method = Method::Atis;
    let path = args.out.as_ref().ok_or_else(|| usage("--out is required for --check paths"))?;
    let rows = with_workers(cfg.workers, || diag::dump_typical_paths(&model, &cfg, samples))??;
    outputs.csv(path, rows)?;
    finish(outputs, args.manifest.as_deref(), Some(path), "diagnose", &cfg)
}

fn emit_report(mut outputs: Outputs, report: &raris::DiagReport, args: &DiagnoseArgs, dist: &str, seed: u64) -> Result<()> {
    match &args.out {
        Some(path) => outputs.json(path, report)?,
        None => print_json(report)?,
    }
    let manifest = match (&args.manifest, &args.out) {
        (Some(m), _) => m.clone(),
        (None, Some(p)) => default_manifest_path(p),
        (None, None) => return Ok(()),
    };
    let config = serde_json::json!({ "check": format!("{:?}", args.check).to_lowercase(), "dist": dist, "samples": args.samples });
    outputs.manifest(&manifest, "diagnose", config, seed)
}
