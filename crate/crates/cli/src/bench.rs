use std::path::Path;

use anyhow::Result;
use raris::estimate::{estimate, mse_ratio_prediction, theoretical_re_atis, theoretical_re_classical};
use raris::ktune::parse_grid;
use raris::tilt::exact_log_tail;
use raris::{make_centered_exponential, make_normal, DistributionModel, ExperimentConfig, Method};
use serde::Serialize;

use crate::cli::{BenchmarkArgs, Preset};
use crate::output::Outputs;

const GAUSS_N: usize = 100;
const GAUSS_A: f64 = 0.232635;
const EXP_N: usize = 100;
const EXP_A: f64 = 0.232;
pub const EXP_REFERENCE: f64 = 0.013887;
const FIG_M: usize = 30;
const FIG_K: usize = 60;

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    value: f64,
    lower: f64,
    upper: f64,
    pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, lower: f64, upper: f64) -> Self {
        Check { name: name.into(), value, lower, upper, pass: value >= lower && value <= upper }
    }
}

#[derive(Debug, Serialize)]
struct BenchSummary {
    preset: String,
    seed: u64,
    reference: f64,
    checks: Vec<Check>,
    all_pass: bool,
}

fn preset_name(p: Preset) -> &'static str {
    match p {
        Preset::GaussFig1 => "gauss-fig1",
        Preset::GaussFig2 => "gauss-fig2",
        Preset::GaussFig3 => "gauss-fig3",
        Preset::ExpCase => "exp-case",
    }
}

fn list(text: Option<&str>, default: &[usize]) -> Result<Vec<usize>> {
    Ok(match text {
        Some(s) => parse_grid(s)?,
        None => default.to_vec(),
    })
}

/// Seed for paired run `r`; both methods share it.
fn run_seed(seed: u64, r: usize) -> u64 {
    seed ^ (r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn base(model: DistributionModel, n: usize, a: f64, args: &BenchmarkArgs) -> ExperimentConfig {
    ExperimentConfig::new(model, n, a, Method::Atis)
        .with_m(FIG_M)
        .with_k(FIG_K)
        .with_seed(args.seed)
        .with_workers(args.workers)
}

fn gauss_truth() -> f64 {
    exact_log_tail(&make_normal(), GAUSS_N, GAUSS_A).map(f64::exp).unwrap_or(f64::NAN)
}

fn z_score(p: f64, se: f64, truth: f64) -> f64 {
    (p - truth).abs() / se
}

#[derive(Serialize)]
struct KPoint {
    method: Method,
    k: Option<usize>,
    #[serde(rename = "L")]
    l: usize,
    p_hat: f64,
    std_error: f64,
    re_hat: f64,
    reference: f64,
}

fn fig1(args: &BenchmarkArgs, dir: &Path, outputs: &mut Outputs) -> Result<(f64, Vec<Check>)> {
    let truth = gauss_truth();
    let ks = list(args.k_grid.as_deref(), &[10, 20, 30, 40, 50, 60, 70, 80, 90])?;
    let l = list(args.l_grid.as_deref(), &[2000])?[0];
    let cfg = base(make_normal(), GAUSS_N, GAUSS_A, args).with_l(l);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let cis = estimate(&cfg.clone().with_method(Method::Cis))?;
    checks.push(Check::new("cis_z", z_score(cis.p_hat, cis.std_error(), truth), 0.0, 3.0));
    rows.push(KPoint { method: Method::Cis, k: None, l, p_hat: cis.p_hat, std_error: cis.std_error(), re_hat: cis.re_hat, reference: truth });
    for &k in &ks {
        let s = estimate(&cfg.clone().with_k(k))?;
        if k == FIG_K {
            checks.push(Check::new("atis_k60_z", z_score(s.p_hat, s.std_error(), truth), 0.0, 3.0));
        }
        rows.push(KPoint { method: Method::Atis, k: Some(k), l, p_hat: s.p_hat, std_error: s.std_error(), re_hat: s.re_hat, reference: truth });
    }
    outputs.csv(&dir.join("fig1_kgrid.csv"), rows)?;
    Ok((truth, checks))
}

#[derive(Serialize)]
struct RePoint {
    method: Method,
    #[serde(rename = "L")]
    l: usize,
    p_hat: f64,
    re_empirical: f64,
    re_theoretical: f64,
}

fn fig2(args: &BenchmarkArgs, dir: &Path, outputs: &mut Outputs) -> Result<(f64, Vec<Check>)> {
    let truth = gauss_truth();
    let ls = list(args.l_grid.as_deref(), &[100, 200, 500, 1000, 2000, 5000])?;
    let cfg = base(make_normal(), GAUSS_N, GAUSS_A, args);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &l in &ls {
        let cis = estimate(&cfg.clone().with_l(l).with_method(Method::Cis))?;
        let atis = estimate(&cfg.clone().with_l(l))?;
        let re_c = theoretical_re_classical(GAUSS_N, GAUSS_A, l);
        let re_a = theoretical_re_atis(GAUSS_N, FIG_K, GAUSS_A, l);
        rows.push(RePoint { method: Method::Cis, l, p_hat: cis.p_hat, re_empirical: cis.re_hat, re_theoretical: re_c });
        rows.push(RePoint { method: Method::Atis, l, p_hat: atis.p_hat, re_empirical: atis.re_hat, re_theoretical: re_a });
        if l == *ls.last().unwrap() {
            checks.push(Check::new("cis_re_ratio", cis.re_hat / re_c, 0.7, 1.3));
        }
    }
    outputs.csv(&dir.join("fig2_re.csv"), rows)?;
    Ok((truth, checks))
}

#[derive(Serialize)]
struct MsePoint {
    #[serde(rename = "L")]
    l: usize,
    runs: usize,
    mse_atis: f64,
    mse_cis: f64,
    mse_ratio: f64,
    predicted: f64,
}

fn fig3(args: &BenchmarkArgs, dir: &Path, outputs: &mut Outputs) -> Result<(f64, Vec<Check>)> {
    let truth = gauss_truth();
    let ls = list(args.l_grid.as_deref(), &[500, 1000, 2000, 5000])?;
    let predicted = mse_ratio_prediction(GAUSS_N, FIG_K);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &l in &ls {
        let (mut sa, mut sc) = (0.0, 0.0);
        for r in 0..args.runs {
            let cfg = base(make_normal(), GAUSS_N, GAUSS_A, args).with_l(l).with_seed(run_seed(args.seed, r));
            sa += (estimate(&cfg)?.p_hat - truth).powi(2);
            sc += (estimate(&cfg.with_method(Method::Cis))?.p_hat - truth).powi(2);
        }
        let runs = args.runs as f64;
        let ratio = sa / sc;
        rows.push(MsePoint { l, runs: args.runs, mse_atis: sa / runs, mse_cis: sc / runs, mse_ratio: ratio, predicted });
        if l == *ls.last().unwrap() {
            checks.push(Check::new(format!("mse_ratio_L{l}"), ratio, 0.45, 0.85));
        }
    }
    outputs.csv(&dir.join("fig3_mse_ratio.csv"), rows)?;
    Ok((truth, checks))
}

fn exp_case(args: &BenchmarkArgs, dir: &Path, outputs: &mut Outputs) -> Result<(f64, Vec<Check>)> {
    let ks = list(args.k_grid.as_deref(), &[10, 20, 30, 40, 50, 60, 70, 80])?;
    let ls = list(args.l_grid.as_deref(), &[1000, 10000])?;
    let cfg = base(make_centered_exponential(), EXP_N, EXP_A, args);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &l in &ls {
        for &k in &ks {
            let s = estimate(&cfg.clone().with_l(l).with_k(k))?;
            if k == FIG_K && l == *ls.last().unwrap() {
                checks.push(Check::new("rel_error_k60", (s.p_hat / EXP_REFERENCE - 1.0).abs(), 0.0, 0.05));
                checks.push(Check::new("z_k60", z_score(s.p_hat, s.std_error(), EXP_REFERENCE), 0.0, 3.0));
            }
            rows.push(KPoint { method: Method::Atis, k: Some(k), l, p_hat: s.p_hat, std_error: s.std_error(), re_hat: s.re_hat, reference: EXP_REFERENCE });
        }
    }
    outputs.csv(&dir.join("exp_case.csv"), rows)?;
    Ok((EXP_REFERENCE, checks))
}

/// Runs a preset; returns whether every check passed.
pub fn run_benchmark(args: &BenchmarkArgs) -> Result<bool> {
    let dir = args.out_dir.as_path();
    let mut outputs = Outputs::new();
    let (reference, checks) = match args.preset {
        Preset::GaussFig1 => fig1(args, dir, &mut outputs)?,
        Preset::GaussFig2 => fig2(args, dir, &mut outputs)?,
        Preset::GaussFig3 => fig3(args, dir, &mut outputs)?,
        Preset::ExpCase => exp_case(args, dir, &mut outputs)?,
    };
    let all_pass = checks.iter().all(|c| c.pass);
    let summary = BenchSummary { preset: preset_name(args.preset).to_string(), seed: args.seed, reference, checks, all_pass };
    outputs.json(&dir.join("summary.json"), &summary)?;
    let config = serde_json::json!({
        "preset": summary.preset,
        "workers": args.workers,
        "runs": args.runs,
        "l_grid": args.l_grid,
        "k_grid": args.k_grid,
    });
    outputs.manifest(&dir.join("manifest.json"), "benchmark", config, args.seed)?;
    Ok(all_pass)
}
