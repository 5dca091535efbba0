//! Naive Monte Carlo, classical tilted IS and ATIS estimators of
//! `P(S_n/n > a_n)`, with the leading-order efficiency formulas.

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::atis::{log_gbar_mixture, sample_endpoint, sample_trajectory_from, SamplerStats};
use crate::config::{EndpointSource, ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::rng::{stream, with_workers, Purpose};
use crate::special::CompensatedSum;
use crate::tilt::{sample_tilted, solve_tilt};

/// One replicate's contribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub replicate_index: u64,
    /// `log w`; `−∞` for a miss.
    pub log_weight: f64,
    pub hit: bool,
    /// Endpoint used by an ATIS replicate.
    pub endpoint: Option<f64>,
}

impl ReplicateRecord {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Result of one estimation run.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateSummary {
    pub method: Method,
    pub dist: String,
    pub n: usize,
    pub a_n: f64,
    pub k: Option<usize>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    #[serde(rename = "L")]
    pub l: usize,
    pub seed: u64,
    pub p_hat: f64,
    /// Empirical variance of the weights divided by `L`.
    pub var_hat: f64,
    /// `var_hat / p_hat²`; NaN when `p_hat = 0`.
    pub re_hat: f64,
    /// Mean of the squared weights.
    pub second_moment: f64,
    pub hit_rate: f64,
    pub clamp_count: u64,
    pub fallback_count: u64,
    pub wall_seconds: f64,
    #[serde(skip)]
    pub stats: SamplerStats,
    #[serde(skip)]
    pub mixture_endpoints: Option<Vec<f64>>,
    #[serde(skip)]
    pub replicates: Option<Vec<ReplicateRecord>>,
}

impl EstimateSummary {
    /// Standard error of `p_hat`.
    pub fn std_error(&self) -> f64 {
        self.var_hat.sqrt()
    }
}

struct Replicate {
    record: ReplicateRecord,
    stats: SamplerStats,
}

/// Runs `f` for every replicate index on `cfg.workers` threads, returning
/// results in index order.
fn run_replicates<F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<Replicate>>
where
    F: Fn(u64) -> Result<Replicate> + Sync + Send,
{
    with_workers(cfg.workers, || (0..cfg.l as u64).into_par_iter().map(&f).collect())?
}

fn summarize(
    cfg: &ExperimentConfig,
    reps: Vec<Replicate>,
    started: Instant,
    mixture_endpoints: Option<Vec<f64>>,
) -> EstimateSummary {
    let l = reps.len() as f64;
    let mut sum = CompensatedSum::new();
    let mut sum_sq = CompensatedSum::new();
    let mut hits = 0usize;
    let mut stats = SamplerStats::default();
    for r in &reps {
        let w = r.record.weight();
        sum.add(w);
        sum_sq.add(w * w);
        hits += usize::from(r.record.hit);
        stats.merge(&r.stats);
    }
    let p_hat = sum.value() / l;
    let mut dev = CompensatedSum::new();
    for r in &reps {
        let d = r.record.weight() - p_hat;
        dev.add(d * d);
    }
    let var_w = if reps.len() > 1 { dev.value() / (l - 1.0) } else { 0.0 };
    let var_hat = var_w / l;
    let atis = cfg.method == Method::Atis;
    EstimateSummary {
        method: cfg.method,
        dist: cfg.dist.name().to_string(),
        n: cfg.n,
        a_n: cfg.a_n,
        k: atis.then_some(cfg.k),
        m: atis.then_some(cfg.m),
        l: cfg.l,
        seed: cfg.seed,
        p_hat,
        var_hat,
        re_hat: if p_hat > 0.0 { var_hat / (p_hat * p_hat) } else { f64::NAN },
        second_moment: sum_sq.value() / l,
        hit_rate: hits as f64 / l,
        clamp_count: stats.clamps,
        fallback_count: stats.fallbacks,
        wall_seconds: started.elapsed().as_secs_f64(),
        stats,
        mixture_endpoints,
        replicates: cfg.keep_weights.then(|| reps.iter().map(|r| r.record).collect()),
    }
}

fn check_method(cfg: &ExperimentConfig, want: Method) -> Result<()> {
    if cfg.method != want {
        return Err(Error::config(format!("config method is {}, expected {want}", cfg.method)));
    }
    cfg.validate()
}

fn is_hit(cfg: &ExperimentConfig, sum: f64) -> bool {
    sum > cfg.n as f64 * cfg.a_n
}

/// Plain Monte Carlo: the fraction of i.i.d. paths with `S_n/n > a_n`.
pub fn naive_estimate(cfg: &ExperimentConfig) -> Result<EstimateSummary> {
    check_method(cfg, Method::Naive)?;
    let started = Instant::now();
    let model = &cfg.dist;
    let reps = run_replicates(cfg, |l| {
        let mut rng = stream(cfg.seed, Purpose::Replicate, l);
        let sum: f64 = (0..cfg.n).map(|_| model.sample(&mut rng)).sum();
        let hit = is_hit(cfg, sum);
        Ok(Replicate {
            record: ReplicateRecord {
                replicate_index: l,
                log_weight: if hit { 0.0 } else { f64::NEG_INFINITY },
                hit,
                endpoint: None,
            },
            stats: SamplerStats::default(),
        })
    })?;
    Ok(summarize(cfg, reps, started, None))
}

/// Classical IS: paths i.i.d. from `π^{a_n}` with weight
/// `exp(−t S_n + n log Φ(t))` on hits.
pub fn classical_is_estimate(cfg: &ExperimentConfig) -> Result<EstimateSummary> {
    check_method(cfg, Method::Cis)?;
    let started = Instant::now();
    let model = &cfg.dist;
    let sol = solve_tilt(model, cfg.a_n)?;
    let n = cfg.n as f64;
    let reps = run_replicates(cfg, |l| {
        let mut rng = stream(cfg.seed, Purpose::Replicate, l);
        let sum: f64 = (0..cfg.n).map(|_| sample_tilted(model, &sol, &mut rng)).sum();
        let hit = is_hit(cfg, sum);
        let log_weight = if hit { -sol.t * sum + n * sol.log_mgf_at_t } else { f64::NEG_INFINITY };
        Ok(Replicate {
            record: ReplicateRecord { replicate_index: l, log_weight, hit, endpoint: None },
            stats: SamplerStats::default(),
        })
    })?;
    Ok(summarize(cfg, reps, started, None))
}

/// Shared mixture endpoints of an ATIS run.
pub fn mixture_endpoints(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut rng = stream(cfg.seed, Purpose::MixtureEndpoints, 0);
    (0..cfg.m).map(|_| sample_endpoint(cfg.n, cfg.a_n, &mut rng)).collect()
}

/// ATIS: `M` endpoints are drawn once; each replicate draws a path from
/// `g_E` and is weighted by `p/ḡ` on hits.
///
/// With [`EndpointSource::Mixture`] each replicate's `E` is one of the `M`
/// shared endpoints chosen uniformly, so paths are distributed exactly as
/// `ḡ`. With [`EndpointSource::Fresh`] every replicate draws its own `E`.
pub fn atis_estimate(cfg: &ExperimentConfig) -> Result<EstimateSummary> {
    check_method(cfg, Method::Atis)?;
    let started = Instant::now();
    let model = &cfg.dist;
    let ends = mixture_endpoints(cfg);
    let reps = run_replicates(cfg, |l| {
        let mut rng = stream(cfg.seed, Purpose::Replicate, l);
        let endpoint = match cfg.endpoint_source {
            EndpointSource::Mixture => ends[rng.random_range(0..ends.len())],
            EndpointSource::Fresh => sample_endpoint(cfg.n, cfg.a_n, &mut rng),
        };
        let mut traj = sample_trajectory_from(model, cfg, endpoint, &mut rng)?;
        if traj.hit {
            // misses carry zero weight; skip the mixture evaluation
            traj.log_gbar = Some(log_gbar_mixture(model, cfg, &traj.values, &ends)?);
        } else {
            traj.log_gbar = Some(f64::NAN);
        }
        let log_weight = traj.log_weight().map_err(|e| {
            Error::numerical(format!("replicate {l}: {e}"))
        })?;
        Ok(Replicate {
            record: ReplicateRecord { replicate_index: l, log_weight, hit: traj.hit, endpoint: Some(endpoint) },
            stats: traj.stats,
        })
    })?;
    Ok(summarize(cfg, reps, started, Some(ends)))
}

/// Dispatches on `cfg.method`.
pub fn estimate(cfg: &ExperimentConfig) -> Result<EstimateSummary> {
    match cfg.method {
        Method::Naive => naive_estimate(cfg),
        Method::Cis => classical_is_estimate(cfg),
        Method::Atis => atis_estimate(cfg),
    }
}

/// Leading-order relative error of classical IS: `√(2π n) a_n / L`.
pub fn theoretical_re_classical(n: usize, a_n: f64, l: usize) -> f64 {
    (2.0 * PI).sqrt() * (n as f64).sqrt() * a_n / l as f64
}

/// Leading-order relative error of ATIS: `√(2π (n−k−1)) a_n / L`.
pub fn theoretical_re_atis(n: usize, k: usize, a_n: f64, l: usize) -> f64 {
    (2.0 * PI).sqrt() * ((n - k - 1) as f64).sqrt() * a_n / l as f64
}

/// Predicted MSE ratio ATIS/classical: `√(n−k)/√n`.
pub fn mse_ratio_prediction(n: usize, k: usize) -> f64 {
    ((n - k) as f64 / n as f64).sqrt()
}
