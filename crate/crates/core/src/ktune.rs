//! Choosing the adaptive block length `k` and tabulating the effect of `M`.
//!
//! For a candidate block length `j`, paths `x_1^j` are drawn from `g_E`
//! with fresh endpoints and the average of `ḡ(x_1^j)/p̂(x_1^j)` is
//! computed, where `p̂` is a saddlepoint approximation of the conditional
//! density mixed over an independent endpoint set. While `g_i` tracks the
//! conditioned walk the average stays near 1.

use rayon::prelude::*;
use serde::Serialize;

use crate::atis::{log_g_sigma, sample_endpoint, sample_head, SamplerStats};
use crate::config::{ExperimentConfig, Method, CLAMP_MARGIN};
use crate::dist::DistributionModel;
use crate::error::{Error, Result};
use crate::estimate::atis_estimate;
use crate::rng::{stream, with_workers, Purpose};
use crate::special::{log_sum_exp, CompensatedSum};
use crate::tilt::tilt_at_mean;

pub const DEFAULT_THRESHOLD: f64 = 0.2;
pub const DEFAULT_L_SCAN: usize = 500;
pub const DEFAULT_M_SCAN: usize = 50;

/// Result of a k-scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KScan {
    pub j_values: Vec<usize>,
    pub stats: Vec<f64>,
    pub selected_k: usize,
    pub threshold: f64,
    /// First grid point whose statistic left `1 ± threshold`.
    pub first_departure: Option<usize>,
    pub no_departure: bool,
    pub clamp_count: u64,
}

/// Default grid: multiples of `max(1, n/20)` up to `n − 2`.
pub fn default_grid(n: usize) -> Vec<usize> {
    let step = (n / 20).max(1);
    (1..).map(|i| i * step).take_while(|&j| j + 2 <= n).collect()
}

/// Parses `start:stop:step` (inclusive) or a comma list.
pub fn parse_grid(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::config(format!("invalid grid '{text}' (expected start:stop:step or a comma list)"));
    let grid: Vec<usize> = if text.contains(':') {
        let parts: Vec<usize> = text
            .split(':')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else { return Err(bad()) };
        if step == 0 || start > stop {
            return Err(bad());
        }
        (start..=stop).step_by(step).collect()
    } else {
        text.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

fn rate(model: &DistributionModel, x: f64) -> Result<f64> {
    let sol = tilt_at_mean(model, x, x)?;
    Ok(sol.t * x - sol.log_mgf_at_t)
}

fn clamp_mean(model: &DistributionModel, x: f64) -> (f64, bool) {
    let (lo, hi) = model.mean_range();
    if x < lo + CLAMP_MARGIN {
        (lo + CLAMP_MARGIN, true)
    } else if x > hi - CLAMP_MARGIN {
        (hi - CLAMP_MARGIN, true)
    } else {
        (x, false)
    }
}

fn phat_counted(model: &DistributionModel, n: usize, values: &[f64], endpoint: f64) -> Result<(f64, bool)> {
    let j = values.len();
    if j + 1 > n {
        return Err(Error::config(format!("block of {j} values needs j < n (n={n})")));
    }
    if j == 0 {
        return Ok((0.0, false));
    }
    let s: f64 = values.iter().sum();
    let r = (n - j) as f64;
    let nf = n as f64;
    let (arg, clamped) = clamp_mean(model, (nf * endpoint - s) / r);
    let lp: f64 = values.iter().map(|&x| model.log_density(x)).sum();
    let v = 0.5 * (nf / r).ln() - r * rate(model, arg)? + nf * rate(model, endpoint)? + lp;
    Ok((v, clamped))
}

/// Log of the saddlepoint approximation to the density of `X_1^j` given
/// `S_n = n·endpoint`:
/// `√(n/(n−j)) exp(−(n−j) I((nE − s_j)/(n−j)) + n I(E)) Π p(x_i)`.
/// `j` is `values.len()`; an out-of-range argument of `I` is clamped.
pub fn phat_richter(model: &DistributionModel, n: usize, values: &[f64], endpoint: f64) -> Result<f64> {
    phat_counted(model, n, values, endpoint).map(|(v, _)| v)
}

fn scan_cfg(cfg: &ExperimentConfig, j: usize) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.k = j;
    c
}

/// Scan statistic for explicit runs and endpoint sets.
pub fn khat_from_runs(
    model: &DistributionModel,
    cfg: &ExperimentConfig,
    runs: &[Vec<f64>],
    gbar_endpoints: &[f64],
    phat_endpoints: &[f64],
) -> Result<(f64, u64)> {
    if runs.is_empty() || gbar_endpoints.is_empty() || phat_endpoints.is_empty() {
        return Err(Error::config("k-scan needs at least one run and one endpoint per mixture"));
    }
    let j = runs[0].len();
    let c = scan_cfg(cfg, j);
    let ln_mg = (gbar_endpoints.len() as f64).ln();
    let ln_mp = (phat_endpoints.len() as f64).ln();
    let ratios: Vec<(f64, u64)> = runs
        .par_iter()
        .map(|x| {
            let g = gbar_endpoints
                .iter()
                .map(|&e| log_g_sigma(model, &c, x, e))
                .collect::<Result<Vec<_>>>()?;
            let mut clamps = 0;
            let mut p = Vec::with_capacity(phat_endpoints.len());
            for &e in phat_endpoints {
                let (v, cl) = phat_counted(model, cfg.n, x, e)?;
                clamps += u64::from(cl);
                p.push(v);
            }
            let log_ratio = (log_sum_exp(&g) - ln_mg) - (log_sum_exp(&p) - ln_mp);
            Ok((log_ratio.exp(), clamps))
        })
        .collect::<Result<_>>()?;
    let mut acc = CompensatedSum::new();
    let mut clamps = 0;
    for (r, c) in &ratios {
        acc.add(*r);
        clamps += c;
    }
    Ok((acc.value() / runs.len() as f64, clamps))
}

struct ScanPoint {
    stat: f64,
    clamps: u64,
}

fn scan_point(model: &DistributionModel, cfg: &ExperimentConfig, j: usize, l_scan: usize, m_scan: usize) -> Result<ScanPoint> {
    if j == 0 || j + 2 > cfg.n {
        return Err(Error::config(format!("scan point j={j} must satisfy 1 ≤ j ≤ n−2 (n={})", cfg.n)));
    }
    if l_scan == 0 || m_scan == 0 {
        return Err(Error::config("L_scan and M_scan must be at least 1"));
    }
    let c = scan_cfg(cfg, j);
    let jj = j as u64;
    let mut stats = SamplerStats::default();
    let runs: Vec<(Vec<f64>, SamplerStats)> = (0..l_scan as u64)
        .into_par_iter()
        .map(|l| {
            let mut rng = stream(cfg.seed, Purpose::ScanRun, (jj << 32) | l);
            let e = sample_endpoint(cfg.n, cfg.a_n, &mut rng);
            let mut st = SamplerStats::default();
            let (x, _) = sample_head(model, &c, e, &mut rng, &mut st)?;
            Ok((x, st))
        })
        .collect::<Result<_>>()?;
    let runs: Vec<Vec<f64>> = runs
        .into_iter()
        .map(|(x, st)| {
            stats.merge(&st);
            x
        })
        .collect();
    let mut rg = stream(cfg.seed, Purpose::ScanGbarEndpoints, jj);
    let gbar: Vec<f64> = (0..m_scan).map(|_| sample_endpoint(cfg.n, cfg.a_n, &mut rg)).collect();
    let mut rp = stream(cfg.seed, Purpose::ScanPhatEndpoints, jj);
    let phat: Vec<f64> = (0..m_scan).map(|_| sample_endpoint(cfg.n, cfg.a_n, &mut rp)).collect();
    let (stat, clamps) = khat_from_runs(model, cfg, &runs, &gbar, &phat)?;
    Ok(ScanPoint { stat, clamps: clamps + stats.clamps })
}

/// Scan statistic at block length `j`: the mean of `ḡ/p̂` over `l_scan`
/// paths, each mixture over `m_scan` endpoints.
pub fn khat_statistic(model: &DistributionModel, cfg: &ExperimentConfig, j: usize, l_scan: usize, m_scan: usize) -> Result<f64> {
    with_workers(cfg.workers, || scan_point(model, cfg, j, l_scan, m_scan))?.map(|p| p.stat)
}

/// Scans `grid` and returns the last block length before the statistic
/// first leaves `1 ± threshold`, or the largest grid point if it never does.
pub fn select_k(
    model: &DistributionModel,
    cfg: &ExperimentConfig,
    grid: &[usize],
    threshold: f64,
    l_scan: usize,
    m_scan: usize,
) -> Result<KScan> {
    if grid.is_empty() {
        return Err(Error::config("k-scan grid is empty"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("k-scan grid must be strictly increasing"));
    }
    if !(threshold > 0.0) {
        return Err(Error::config(format!("threshold must be positive (got {threshold})")));
    }
    let points = with_workers(cfg.workers, || {
        grid.iter().map(|&j| scan_point(model, cfg, j, l_scan, m_scan)).collect::<Result<Vec<_>>>()
    })??;
    let stats: Vec<f64> = points.iter().map(|p| p.stat).collect();
    Ok(decide(grid, stats, threshold, points.iter().map(|p| p.clamps).sum()))
}

fn decide(grid: &[usize], stats: Vec<f64>, threshold: f64, clamp_count: u64) -> KScan {
    let departs = |s: f64| !((s - 1.0).abs() <= threshold);
    let first = stats.iter().position(|&s| departs(s));
    let (selected_k, no_departure) = match first {
        None => (*grid.last().unwrap(), true),
        Some(0) => (grid[0], false),
        Some(i) => (grid[i - 1], false),
    };
    KScan {
        j_values: grid.to_vec(),
        stats,
        selected_k,
        threshold,
        first_departure: first.map(|i| grid[i]),
        no_departure,
        clamp_count,
    }
}

/// One row of an M-scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MScanRow {
    #[serde(rename = "M")]
    pub m: usize,
    pub p_hat: f64,
    pub re_hat: f64,
    pub std_error: f64,
}

/// Runs ATIS once per mixture size in `m_grid` with the same seed.
pub fn m_scan(cfg: &ExperimentConfig, m_grid: &[usize]) -> Result<Vec<MScanRow>> {
    if m_grid.is_empty() {
        return Err(Error::config("M grid is empty"));
    }
    m_grid
        .iter()
        .map(|&m| {
            let c = cfg.clone().with_method(Method::Atis).with_m(m);
            let s = atis_estimate(&c)?;
            Ok(MScanRow { m, p_hat: s.p_hat, re_hat: s.re_hat, std_error: s.std_error() })
        })
        .collect()
}
