//! Empirical checks of the conditioned-walk asymptotics: the endpoint law,
//! the Gibbs marginal, the growth of path maxima, and path dumps for
//! plotting.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::atis::sample_trajectory;
use crate::config::{ExperimentConfig, Method};
use crate::dist::DistributionModel;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::special::{ks_one_sample, mean_var, quantile, sample_std_normal_above};
use crate::tilt::{exact_log_tail, sample_tilted, solve_tilt};

/// Rejection attempts allowed per conditioned draw.
pub const DRAW_BUDGET: u64 = 1_000_000;

/// Outcome of one diagnostic. `pass` is `statistic ≤ threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub samples_used: usize,
    pub notes: String,
    pub values: BTreeMap<String, f64>,
}

impl DiagReport {
    fn new(name: &str, statistic: f64, threshold: f64, samples_used: usize, notes: String) -> Self {
        DiagReport {
            name: name.to_string(),
            statistic,
            threshold,
            pass: statistic <= threshold,
            samples_used,
            notes,
            values: BTreeMap::new(),
        }
    }

    fn budget_exceeded(name: &str, threshold: f64, samples_used: usize) -> Self {
        let mut r = DiagReport::new(
            name,
            f64::INFINITY,
            threshold,
            samples_used,
            format!("conditioned sampler exceeded {DRAW_BUDGET} attempts for one draw"),
        );
        r.pass = false;
        r
    }

    fn with(mut self, key: &str, v: f64) -> Self {
        self.values.insert(key.to_string(), v);
        self
    }
}

/// Exact or rejection sampler for paths conditioned on `S_n > n a_n`.
///
/// Normal: `S_n` from its truncated law, then a Gaussian bridge.
/// Centered exponential: `S_n + n ~ Gamma(n, 1)` by rejection, then
/// Dirichlet spacings. Other laws: whole paths by rejection. `a_n = 0` is
/// treated as no conditioning.
#[derive(Debug, Clone)]
pub struct ConditionedSampler {
    model: DistributionModel,
    n: usize,
    a_n: f64,
}

impl ConditionedSampler {
    pub fn new(model: &DistributionModel, n: usize, a_n: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("n must be at least 1"));
        }
        if !(a_n >= 0.0) {
            return Err(Error::domain(format!("conditioned sampling needs a_n ≥ 0 (got {a_n})")));
        }
        Ok(ConditionedSampler { model: model.clone(), n, a_n })
    }

    fn conditioned(&self) -> bool {
        self.a_n > 0.0
    }

    /// Draws `S_n` given the event; also returns the number of attempts.
    /// `None` when the budget runs out.
    pub fn draw_sum<R: Rng>(&self, rng: &mut R) -> Option<(f64, u64)> {
        let n = self.n as f64;
        let level = n * self.a_n;
        match &self.model {
            DistributionModel::Normal => {
                if !self.conditioned() {
                    let z: f64 = rand_distr::StandardNormal.sample(rng);
                    return Some((n.sqrt() * z, 1));
                }
                Some((n.sqrt() * sample_std_normal_above(level / n.sqrt(), rng), 1))
            }
            DistributionModel::CenteredExponential => {
                let gamma = Gamma::new(n, 1.0).expect("n ≥ 1");
                for attempt in 1..=DRAW_BUDGET {
                    let s = gamma.sample(rng) - n;
                    if !self.conditioned() || s > level {
                        return Some((s, attempt));
                    }
                }
                None
            }
            DistributionModel::Custom(_) => self.draw_path(rng).map(|(x, a)| (x.iter().sum(), a)),
        }
    }

    /// Draws a whole conditioned path.
    pub fn draw_path<R: Rng>(&self, rng: &mut R) -> Option<(Vec<f64>, u64)> {
        let n = self.n as f64;
        match &self.model {
            DistributionModel::Normal => {
                let (s, a) = self.draw_sum(rng)?;
                let z: Vec<f64> = (0..self.n).map(|_| rand_distr::StandardNormal.sample(rng)).collect();
                let shift = (z.iter().sum::<f64>() - s) / n;
                Some((z.into_iter().map(|v| v - shift).collect(), a))
            }
            DistributionModel::CenteredExponential => {
                let (s, a) = self.draw_sum(rng)?;
                let e: Vec<f64> = (0..self.n).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = e.iter().sum();
                let g = s + n;
                Some((e.into_iter().map(|v: f64| g * v / total - 1.0).collect(), a))
            }
            DistributionModel::Custom(_) => {
                let level = n * self.a_n;
                for attempt in 1..=DRAW_BUDGET {
                    let x: Vec<f64> = (0..self.n).map(|_| self.model.sample(rng)).collect();
                    if !self.conditioned() || x.iter().sum::<f64>() > level {
                        return Some((x, attempt));
                    }
                }
                None
            }
        }
    }
}

/// Runs `f` on `count` independent diagnostic streams.
fn draws<T: Send, F>(seed: u64, count: usize, f: F) -> Option<Vec<T>>
where
    F: Fn(&mut crate::rng::SimRng) -> Option<T> + Sync + Send,
{
    (0..count as u64)
        .into_par_iter()
        .map(|i| f(&mut stream(seed, Purpose::Diagnostic, i)))
        .collect()
}

/// KS distance of `Z = n t^{a_n} (T − a_n)` to Exp(1), where `T = S_n/n`
/// given `T > a_n`.
pub fn endpoint_law_check(model: &DistributionModel, n: usize, a_n: f64, n_samples: usize, seed: u64, threshold: f64) -> Result<DiagReport> {
    const NAME: &str = "endpoint_law";
    if !(a_n > 0.0) {
        return Err(Error::domain(format!("endpoint law needs a_n > 0 (got {a_n})")));
    }
    let sampler = ConditionedSampler::new(model, n, a_n)?;
    let t = solve_tilt(model, a_n)?.t;
    let nf = n as f64;
    let Some(z) = draws(seed, n_samples, |rng| sampler.draw_sum(rng).map(|(s, _)| nf * t * (s / nf - a_n))) else {
        return Ok(DiagReport::budget_exceeded(NAME, threshold, n_samples));
    };
    let ks = ks_one_sample(&z, |u| if u <= 0.0 { 0.0 } else { -(-u).exp_m1() });
    let (mean, _) = mean_var(&z);
    Ok(DiagReport::new(NAME, ks, threshold, n_samples, format!("KS(Z, Exp(1)) with Z = n t (T − a_n); mean Z = {mean:.4}"))
        .with("mean_z", mean)
        .with("t", t))
}

/// KS distance between the conditioned law of `X_1` and `π^{a_n}`.
pub fn gibbs_marginal_check(model: &DistributionModel, n: usize, a_n: f64, n_samples: usize, seed: u64, threshold: f64) -> Result<DiagReport> {
    const NAME: &str = "gibbs_marginal";
    let sampler = ConditionedSampler::new(model, n, a_n)?;
    let t = solve_tilt(model, a_n)?.t;
    if model.tilted_cdf(t, 0.0).is_none() {
        return Err(Error::config(format!("gibbs check needs a closed-form tilted CDF for '{}'", model.name())));
    }
    let Some(x1) = draws(seed, n_samples, |rng| sampler.draw_path(rng).map(|(x, _)| x[0])) else {
        return Ok(DiagReport::budget_exceeded(NAME, threshold, n_samples));
    };
    let ks = ks_one_sample(&x1, |x| model.tilted_cdf(t, x).unwrap());
    let (mean, _) = mean_var(&x1);
    Ok(DiagReport::new(NAME, ks, threshold, n_samples, format!("KS(X_1 | S_n > n a_n, π^a_n); mean X_1 = {mean:.4}"))
        .with("mean_x1", mean))
}

/// Checks that the rejection oracle accepts at the exact tail rate:
/// statistic is `|rate − P_n| / SE`, threshold 3.
pub fn rejection_rate_check(model: &DistributionModel, n: usize, a_n: f64, n_samples: usize, seed: u64) -> Result<DiagReport> {
    const NAME: &str = "rejection_rate";
    let p = exact_log_tail(model, n, a_n)
        .ok_or_else(|| Error::config(format!("no exact tail for '{}'", model.name())))?
        .exp();
    // rejection on S_n from the unconditioned law, for any built-in
    let nf = n as f64;
    let Some(attempts) = draws(seed, n_samples, |rng| {
        for a in 1..=DRAW_BUDGET {
            let s: f64 = match model {
                DistributionModel::CenteredExponential => Gamma::new(nf, 1.0).expect("n ≥ 1").sample(rng) - nf,
                _ => (0..n).map(|_| model.sample(rng)).sum(),
            };
            if s > nf * a_n {
                return Some(a);
            }
        }
        None
    }) else {
        return Ok(DiagReport::budget_exceeded(NAME, 3.0, n_samples));
    };
    let total: u64 = attempts.iter().sum();
    let rate = n_samples as f64 / total as f64;
    let se = (p * (1.0 - p) / total as f64).sqrt();
    let z = (rate - p).abs() / se;
    Ok(DiagReport::new(NAME, z, 3.0, n_samples, format!("acceptance {rate:.6} vs exact tail {p:.6}"))
        .with("acceptance_rate", rate)
        .with("exact_tail", p)
        .with("attempts_per_sample", total as f64 / n_samples as f64))
}

/// Least-squares polynomial fit of degree `deg` (≤ 2); coefficients from
/// the constant term up.
fn poly_fit(x: &[f64], y: &[f64], deg: usize) -> Vec<f64> {
    let m = deg + 1;
    let mut a = vec![vec![0.0; m + 1]; m];
    for (&xi, &yi) in x.iter().zip(y) {
        for r in 0..m {
            for c in 0..m {
                a[r][c] += xi.powi((r + c) as i32);
            }
            a[r][m] += yi * xi.powi(r as i32);
        }
    }
    // Gauss–Jordan with partial pivoting
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..m).map(|r| a[r][m] / a[r][r]).collect()
}

/// Settings for [`max_path_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPathCaps {
    pub slope: f64,
    pub curvature: f64,
}

impl Default for MaxPathCaps {
    fn default() -> Self {
        MaxPathCaps { slope: 2.0, curvature: 0.5 }
    }
}

/// Median of `max(X_1..X_k)` under conditioning, `k = ⌈k_fraction·n⌉`, at
/// each `n` in `n_grid`. The statistic is
/// `max(slope/slope_cap, |curvature|/curvature_cap)` against threshold 1,
/// from linear and quadratic fits of the medians on `ln n`.
pub fn max_path_check<A>(
    model: &DistributionModel,
    n_grid: &[usize],
    a_fn: A,
    k_fraction: f64,
    n_samples: usize,
    seed: u64,
    caps: MaxPathCaps,
) -> Result<DiagReport>
where
    A: Fn(usize) -> f64,
{
    const NAME: &str = "max_path";
    if n_grid.len() < 3 {
        return Err(Error::config("max-path check needs at least 3 values of n"));
    }
    if !(k_fraction > 0.0 && k_fraction <= 1.0) {
        return Err(Error::config(format!("k_fraction must lie in (0, 1] (got {k_fraction})")));
    }
    let mut medians = Vec::with_capacity(n_grid.len());
    let mut values = BTreeMap::new();
    for (g, &n) in n_grid.iter().enumerate() {
        let k = ((k_fraction * n as f64).ceil() as usize).clamp(1, n);
        let sampler = ConditionedSampler::new(model, n, a_fn(n))?;
        let sub_seed = seed ^ ((g as u64 + 1) << 48);
        let Some(maxima) = draws(sub_seed, n_samples, |rng| {
            sampler.draw_path(rng).map(|(x, _)| x[..k].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        }) else {
            return Ok(DiagReport::budget_exceeded(NAME, 1.0, n_samples * g));
        };
        let med = quantile(&maxima, 0.5);
        values.insert(format!("median_n{n}"), med);
        medians.push(med);
    }
    let x: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let slope = poly_fit(&x, &medians, 1)[1];
    let curvature = poly_fit(&x, &medians, 2)[2];
    let stat = (slope / caps.slope).max(curvature.abs() / caps.curvature);
    let mut r = DiagReport::new(
        NAME,
        stat,
        1.0,
        n_samples * n_grid.len(),
        format!(
            "median max vs ln n: slope {slope:.4} (cap {}), quadratic coefficient {curvature:.4} (cap {})",
            caps.slope, caps.curvature
        ),
    );
    values.insert("slope".into(), slope);
    values.insert("curvature".into(), curvature);
    r.values = values;
    Ok(r)
}

/// One row of a path dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRow {
    pub run_id: usize,
    pub method: Method,
    pub step: usize,
    pub value: f64,
    pub running_mean: f64,
}

/// `count` ATIS paths and `count` classical-IS paths, one row per step.
pub fn dump_typical_paths(model: &DistributionModel, cfg: &ExperimentConfig, count: usize) -> Result<Vec<PathRow>> {
    let mut atis_cfg = cfg.clone().with_method(Method::Atis);
    atis_cfg.dist = model.clone();
    atis_cfg.validate()?;
    let sol = solve_tilt(model, cfg.a_n)?;
    let mut rows = Vec::with_capacity(2 * count * cfg.n);
    let mut push = |run_id: usize, method: Method, values: &[f64]| {
        let mut s = 0.0;
        for (i, &v) in values.iter().enumerate() {
            s += v;
            rows.push(PathRow { run_id, method, step: i + 1, value: v, running_mean: s / (i + 1) as f64 });
        }
    };
    for r in 0..count {
        let mut rng = stream(cfg.seed, Purpose::Paths, r as u64);
        let t = sample_trajectory(model, &atis_cfg, &mut rng)?;
        push(r, Method::Atis, &t.values);
    }
    for r in 0..count {
        let mut rng = stream(cfg.seed, Purpose::Paths, (count + r) as u64);
        let x: Vec<f64> = (0..cfg.n).map(|_| sample_tilted(model, &sol, &mut rng)).collect();
        push(count + r, Method::Cis, &x);
    }
    Ok(rows)
}
