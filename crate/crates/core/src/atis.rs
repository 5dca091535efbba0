//! Adaptive twisted sampling of trajectories and the mixture density used
//! for their importance weights.
//!
//! The first `k` coordinates of a path are drawn one at a time from
//! `g_i(y) ∝ p(y) 𝔫(ab, a; y)`, a Gaussian-corrected approximation of the law
//! of `X_{i+1}` given the past and `S_n = nσ`. The remaining `n − k`
//! coordinates are i.i.d. from `π^{α_k}`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};
use serde::Serialize;

use crate::config::{ExperimentConfig, NormalizerMode, TiltMode, CLAMP_MARGIN};
use crate::dist::DistributionModel;
use crate::error::{Error, Result};
use crate::quad::integrate;
use crate::rng::{stream, Purpose};
use crate::special::{log_normal_pdf, log_sum_exp, std_normal_quantile};
use crate::tilt::{tilt_at_mean, tilted_log_density, TiltSolution};

/// Acceptance–rejection attempts before giving up.
pub const MAX_AR_ITER: usize = 1_000_000;
/// Below this predicted acceptance rate, closed-form product samplers are
/// used instead of acceptance–rejection.
pub const MIN_AR_ACCEPTANCE: f64 = 1e-3;

/// Counters for events that alter a run without aborting it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SamplerStats {
    /// Target means pulled back inside the attainable range.
    pub clamps: u64,
    /// First-order updates replaced by an exact solve.
    pub fallbacks: u64,
    /// `g_i` draws taken from a closed-form sampler instead of
    /// acceptance–rejection.
    pub direct_draws: u64,
}

impl SamplerStats {
    pub fn merge(&mut self, other: &SamplerStats) {
        self.clamps += other.clamps;
        self.fallbacks += other.fallbacks;
        self.direct_draws += other.direct_draws;
    }
}

/// Tilt state before drawing `x_{i+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltState {
    pub n: usize,
    pub i: usize,
    pub partial_sum: f64,
    pub sigma: f64,
    /// `m_{i,n} = (nσ − Σ_1^i)/(n − i)`, after clamping.
    pub target: f64,
    pub t_in: f64,
    /// `m(t_in)`; equals `target` up to solver tolerance in exact mode.
    pub m_in: f64,
    pub s2_in: f64,
    pub mu3_in: f64,
    pub clamped: bool,
    pub fell_back: bool,
}

impl TiltState {
    fn from_solution(n: usize, i: usize, partial_sum: f64, sigma: f64, target: f64, sol: &TiltSolution) -> Self {
        TiltState {
            n,
            i,
            partial_sum,
            sigma,
            target,
            t_in: sol.t,
            m_in: sol.alpha,
            s2_in: sol.s2,
            mu3_in: sol.mu3,
            clamped: false,
            fell_back: false,
        }
    }

    /// `m(t_in) − m_{i,n}`; nonzero only in first-order mode.
    pub fn residual(&self) -> f64 {
        self.m_in - self.target
    }
}

/// Parameters of one `g_i`. The normalized density is
/// `exp(log_c) · p(x) · 𝔫(ab, a; x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GiParams {
    pub a: f64,
    pub b: f64,
    pub log_c: f64,
}

impl GiParams {
    pub fn mean(&self) -> f64 {
        self.a * self.b
    }

    pub fn log_density(&self, model: &DistributionModel, x: f64) -> f64 {
        let lp = model.log_density(x);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        self.log_c + lp + log_normal_pdf(x, self.mean(), self.a)
    }
}

/// One simulated path with its densities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub values: Vec<f64>,
    pub endpoint: f64,
    /// `Σ log p(x_i)`.
    pub log_p: f64,
    /// Log density of the law that generated this path (single endpoint).
    pub log_q: f64,
    /// Log mixture density, once evaluated.
    pub log_gbar: Option<f64>,
    pub hit: bool,
    pub alpha_k: f64,
    pub stats: SamplerStats,
}

impl Trajectory {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `log(p/ḡ)`, or `−∞` for a miss. Requires `log_gbar`.
    pub fn log_weight(&self) -> Result<f64> {
        let lg = self
            .log_gbar
            .ok_or_else(|| Error::numerical("mixture density not evaluated for trajectory"))?;
        if !self.hit {
            return Ok(f64::NEG_INFINITY);
        }
        if !lg.is_finite() || !self.log_p.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite log densities on a hit (log p = {}, log ḡ = {lg})",
                self.log_p
            )));
        }
        Ok(self.log_p - lg)
    }
}

/// Endpoint draw `E = a_n + Exp(1)/(n a_n)`.
pub fn sample_endpoint<R: Rng>(n: usize, a_n: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    let x = a_n + e / (n as f64 * a_n);
    // Exp1 can return exactly 0
    if x > a_n {
        x
    } else {
        a_n.next_up()
    }
}

fn clamp_target(model: &DistributionModel, target: f64) -> Result<(f64, bool)> {
    if target.is_nan() {
        return Err(Error::numerical("tilt target is NaN"));
    }
    let (lo, hi) = model.mean_range();
    let lo = lo + CLAMP_MARGIN;
    let hi = hi - CLAMP_MARGIN;
    if target < lo {
        Ok((lo, true))
    } else if target > hi {
        Ok((hi, true))
    } else {
        Ok((target, false))
    }
}

fn check_step(n: usize, i: usize) -> Result<()> {
    if i + 2 > n {
        return Err(Error::config(format!("step i={i} needs i ≤ n−2 (n={n})")));
    }
    Ok(())
}

fn exact_state(model: &DistributionModel, n: usize, sigma: f64, partial_sum: f64, i: usize, guess: f64) -> Result<TiltState> {
    check_step(n, i)?;
    let raw = (n as f64 * sigma - partial_sum) / (n - i) as f64;
    let (target, clamped) = clamp_target(model, raw)?;
    let sol = tilt_at_mean(model, target, guess)?;
    let mut st = TiltState::from_solution(n, i, partial_sum, sigma, target, &sol);
    st.clamped = clamped;
    Ok(st)
}

/// Exact tilt state at step `i`: solves `m(t) = m_{i,n}`, clamping the
/// target into the attainable range when needed.
pub fn tilt_exact(model: &DistributionModel, n: usize, sigma: f64, partial_sum: f64, i: usize) -> Result<TiltState> {
    let guess = (n as f64 * sigma - partial_sum) / (n - i.min(n - 1)) as f64;
    exact_state(model, n, sigma, partial_sum, i, guess)
}

/// First-order step from `state` after observing `x_new`:
/// `t ← t + (m_{i+1,n} − m(t))/s²(t)`. Falls back to an exact solve when the
/// new tilt leaves the domain or the new target leaves the mean range.
pub fn tilt_update(model: &DistributionModel, state: &TiltState, x_new: f64) -> Result<TiltState> {
    let (n, i) = (state.n, state.i + 1);
    check_step(n, i)?;
    let partial_sum = state.partial_sum + x_new;
    let raw = (n as f64 * state.sigma - partial_sum) / (n - i) as f64;
    let (target, clamped) = clamp_target(model, raw)?;
    let t = state.t_in + (target - state.m_in) / state.s2_in;
    if clamped || !t.is_finite() || !model.in_tilt_domain(t) {
        let mut st = exact_state(model, n, state.sigma, partial_sum, i, state.t_in)?;
        st.fell_back = true;
        return Ok(st);
    }
    Ok(TiltState {
        n,
        i,
        partial_sum,
        sigma: state.sigma,
        target,
        t_in: t,
        m_in: model.mean_tilted(t),
        s2_in: model.var_tilted(t),
        mu3_in: model.mu3_tilted(t),
        clamped: false,
        fell_back: false,
    })
}

/// `(a, b)` of `g_i` for a state.
///
/// With `r = n − i − 1`, `a = r s²` and
/// `b = t + ((n−i) m_{i,n} − r m(t))/a + μ₃/(2 s⁴ r)`.
/// The middle term places the Gaussian factor at the remaining sum
/// `nσ − Σ_1^i − r m(t)`; it makes `g_i` the exact conditional density for
/// the normal law.
pub fn gi_kernel(state: &TiltState) -> (f64, f64) {
    let r = (state.n - state.i - 1) as f64;
    let a = state.s2_in * r;
    let c = (state.n - state.i) as f64 * state.target - r * state.m_in;
    let b = state.t_in + c / a + state.mu3_in / (2.0 * state.s2_in * state.s2_in * r);
    (a, b)
}

/// `ln ∫ p(x) 𝔫(μ, v; x) dx` by adaptive quadrature.
fn log_overlap_quadrature(model: &DistributionModel, mu: f64, var: f64) -> Result<f64> {
    let (slo, shi) = model.support();
    let sd = var.sqrt();
    let lo = slo.max(mu - 40.0 * sd);
    let hi = shi.min(mu + 40.0 * sd);
    if lo >= hi {
        return Err(Error::numerical(format!("g_i has empty support window around mean {mu}")));
    }
    // split at 0 and at the Gaussian center so both bumps are resolved
    let mut cuts = vec![lo, hi];
    for c in [0.0, mu] {
        if c > lo && c < hi {
            cuts.push(c);
        }
    }
    cuts.sort_by(f64::total_cmp);
    let f = |x: f64| (model.log_density(x) + log_normal_pdf(x, mu, var)).exp();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += integrate(f, w[0], w[1], 0.0, 1e-11)?.value;
    }
    if !(total > 0.0) {
        return Err(Error::numerical(format!("g_i normalizer vanished (mean {mu}, var {var})")));
    }
    Ok(total.ln())
}

fn closed_or_quadrature(model: &DistributionModel, mu: f64, var: f64) -> Result<f64> {
    match model.log_gauss_overlap(mu, var) {
        Some(v) => Ok(v),
        None => log_overlap_quadrature(model, mu, var),
    }
}

fn log_overlap_mc<R: Rng>(model: &DistributionModel, mu: f64, var: f64, n_c: usize, rng: &mut R) -> Result<f64> {
    if n_c == 0 {
        return Err(Error::config("N_C must be at least 1 in mc normalizer mode"));
    }
    let sd = var.sqrt();
    let mut acc = 0.0;
    for _ in 0..n_c {
        let z: f64 = StandardNormal.sample(rng);
        acc += model.density(mu + sd * z);
    }
    if !(acc > 0.0) {
        return Err(Error::numerical(format!(
            "mc normalizer is zero after {n_c} draws (mean {mu}, var {var})"
        )));
    }
    Ok((acc / n_c as f64).ln())
}

/// Kernel and normalizer of `g_i`.
pub fn gi_params<R: Rng>(
    model: &DistributionModel,
    state: &TiltState,
    mode: NormalizerMode,
    n_c: usize,
    rng: &mut R,
) -> Result<GiParams> {
    let (a, b) = gi_kernel(state);
    let log_z = log_normalizer(model, a * b, a, mode, n_c, rng)?;
    Ok(GiParams { a, b, log_c: -log_z })
}

fn log_normalizer<R: Rng>(
    model: &DistributionModel,
    mu: f64,
    var: f64,
    mode: NormalizerMode,
    n_c: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(var > 0.0) || !mu.is_finite() {
        return Err(Error::numerical(format!("degenerate g_i kernel (mean {mu}, var {var})")));
    }
    match mode {
        NormalizerMode::Closed => closed_or_quadrature(model, mu, var),
        NormalizerMode::Mc => log_overlap_mc(model, mu, var, n_c, rng),
        NormalizerMode::Quadrature => log_overlap_quadrature(model, mu, var),
    }
}

/// Normalizer for use inside a run. In mc mode the draws are keyed by the
/// kernel itself, so generation and every later evaluation of the same
/// `g_i` see the same estimate.
fn run_gi_params(model: &DistributionModel, cfg: &ExperimentConfig, state: &TiltState) -> Result<GiParams> {
    let (a, b) = gi_kernel(state);
    if !(a > 0.0) || !(a * b).is_finite() {
        return Err(Error::numerical(format!("degenerate g_i kernel (a = {a}, b = {b})")));
    }
    let log_z = match cfg.ci_mode {
        NormalizerMode::Mc => {
            let key = a.to_bits() ^ b.to_bits().rotate_left(29);
            let mut rng = stream(cfg.seed, Purpose::Normalizer, key);
            log_overlap_mc(model, a * b, a, cfg.n_c, &mut rng)?
        }
        NormalizerMode::Closed => closed_or_quadrature(model, a * b, a)?,
        NormalizerMode::Quadrature => log_overlap_quadrature(model, a * b, a)?,
    };
    Ok(GiParams { a, b, log_c: -log_z })
}

fn sample_gi_counted<R: Rng>(model: &DistributionModel, params: &GiParams, rng: &mut R) -> Result<(f64, bool)> {
    let mu = params.mean();
    let sup = model.density_sup();
    if let Some(log_z) = model.log_gauss_overlap(mu, params.a) {
        if log_z.exp() / sup < MIN_AR_ACCEPTANCE {
            if let Some(x) = model.sample_gauss_product(mu, params.a, rng) {
                return Ok((x, true));
            }
        }
    }
    let sd = params.a.sqrt();
    for _ in 0..MAX_AR_ITER {
        let u: f64 = Open01.sample(rng);
        let y = mu + sd * std_normal_quantile(u);
        let v: f64 = rng.random();
        if v * sup <= model.density(y) {
            return Ok((y, false));
        }
    }
    Err(Error::numerical(format!(
        "g_i acceptance-rejection exceeded {MAX_AR_ITER} attempts (a = {}, b = {})",
        params.a, params.b
    )))
}

/// Exact draw from `g_i ∝ p(x) 𝔫(ab, a; x)`.
///
/// Acceptance–rejection in the probability scale of `𝔫(ab, a)` with envelope
/// `sup p`. When a closed-form product sampler exists and the predicted
/// acceptance rate is below [`MIN_AR_ACCEPTANCE`], that sampler is used.
pub fn sample_gi<R: Rng>(model: &DistributionModel, params: &GiParams, rng: &mut R) -> Result<f64> {
    sample_gi_counted(model, params, rng).map(|(x, _)| x)
}

fn check_k(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.k == 0 || cfg.k >= cfg.n {
        return Err(Error::config(format!(
            "adaptive block needs 1 ≤ k ≤ n−1 (got k={}, n={})",
            cfg.k, cfg.n
        )));
    }
    Ok(())
}

/// Runs the `k` adaptive steps for endpoint `sigma`; `step` supplies
/// `x_{i+1}` given the parameters of `g_i`. Returns `Σ log g_i(x_{i+1})`.
fn adaptive_walk<F>(
    model: &DistributionModel,
    cfg: &ExperimentConfig,
    sigma: f64,
    stats: &mut SamplerStats,
    mut step: F,
) -> Result<f64>
where
    F: FnMut(usize, &GiParams) -> Result<f64>,
{
    let n = cfg.n;
    let mut state = tilt_exact(model, n, sigma, 0.0, 0)?;
    let mut log_g = 0.0;
    for i in 0..cfg.k {
        stats.clamps += u64::from(state.clamped);
        stats.fallbacks += u64::from(state.fell_back);
        let params = run_gi_params(model, cfg, &state)?;
        let x = step(i, &params)?;
        log_g += params.log_density(model, x);
        if i + 1 < cfg.k {
            state = match cfg.tilt_mode {
                TiltMode::Exact => exact_state(model, n, sigma, state.partial_sum + x, i + 1, state.t_in)?,
                TiltMode::FirstOrder => tilt_update(model, &state, x)?,
            };
        }
    }
    Ok(log_g)
}

/// Tilt of the i.i.d. tail block: `m(t) = (n a_n − Σ_1^k)/(n − k)`.
pub fn tail_tilt(model: &DistributionModel, cfg: &ExperimentConfig, head_sum: f64) -> Result<(TiltSolution, bool)> {
    let raw = (cfg.n as f64 * cfg.a_n - head_sum) / (cfg.n - cfg.k) as f64;
    let (alpha, clamped) = clamp_target(model, raw)?;
    Ok((tilt_at_mean(model, alpha, alpha)?, clamped))
}

/// `Σ_{i>k} log π^{α_k}(x_i)` and `α_k`.
pub fn tail_log_density(model: &DistributionModel, cfg: &ExperimentConfig, values: &[f64]) -> Result<(f64, f64)> {
    check_k(cfg)?;
    if values.len() != cfg.n {
        return Err(Error::config(format!("trajectory has {} values, expected n={}", values.len(), cfg.n)));
    }
    let head: f64 = values[..cfg.k].iter().sum();
    let (sol, _) = tail_tilt(model, cfg, head)?;
    let lt = values[cfg.k..].iter().map(|&x| tilted_log_density(model, &sol, x)).sum();
    Ok((lt, sol.alpha))
}

/// Draws only the adaptive block `x_1^k` from `g_endpoint`, returning it
/// with `log g_endpoint(x_1^k)`.
pub fn sample_head<R: Rng>(
    model: &DistributionModel,
    cfg: &ExperimentConfig,
    endpoint: f64,
    rng: &mut R,
    stats: &mut SamplerStats,
) -> Result<(Vec<f64>, f64)> {
    check_k(cfg)?;
    let mut values = Vec::with_capacity(cfg.n);
    let mut direct_draws = 0;
    let log_head = adaptive_walk(model, cfg, endpoint, stats, |_, params| {
        let (x, direct) = sample_gi_counted(model, params, rng)?;
        direct_draws += u64::from(direct);
        values.push(x);
        Ok(x)
    })?;
    stats.direct_draws += direct_draws;
    Ok((values, log_head))
}

/// Draws a path whose first `k` values follow `g_endpoint`.
pub fn sample_trajectory_from<R: Rng>(
    model: &DistributionModel,
    cfg: &ExperimentConfig,
    endpoint: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut stats = SamplerStats::default();
    let (mut values, log_head) = sample_head(model, cfg, endpoint, rng, &mut stats)?;
    let head: f64 = values.iter().sum();
    let (sol, clamped) = tail_tilt(model, cfg, head)?;
    stats.clamps += u64::from(clamped);
    let mut log_tail = 0.0;
    for _ in cfg.k..cfg.n {
        let x = model.sample_tilted_t(sol.t, rng);
        log_tail += tilted_log_density(model, &sol, x);
        values.push(x);
    }
    let log_p = values.iter().map(|&x| model.log_density(x)).sum();
    let sum: f64 = values.iter().sum();
    Ok(Trajectory {
        hit: sum > cfg.n as f64 * cfg.a_n,
        values,
        endpoint,
        log_p,
        log_q: log_head + log_tail,
        log_gbar: None,
        alpha_k: sol.alpha,
        stats,
    })
}

/// Draws a fresh endpoint, then a path from `g_E`.
pub fn sample_trajectory<R: Rng>(model: &DistributionModel, cfg: &ExperimentConfig, rng: &mut R) -> Result<Trajectory> {
    let e = sample_endpoint(cfg.n, cfg.a_n, rng);
    sample_trajectory_from(model, cfg, e, rng)
}

/// `log g_σ(x_1^k)`: the adaptive-block density for endpoint `sigma`.
pub fn log_g_sigma(model: &DistributionModel, cfg: &ExperimentConfig, head: &[f64], sigma: f64) -> Result<f64> {
    check_k(cfg)?;
    if head.len() < cfg.k {
        return Err(Error::config(format!("need at least k={} values, got {}", cfg.k, head.len())));
    }
    let mut stats = SamplerStats::default();
    adaptive_walk(model, cfg, sigma, &mut stats, |i, _| Ok(head[i]))
}

/// `log ḡ(x_1^n)` for a mixture over `endpoints`.
pub fn log_gbar_mixture(model: &DistributionModel, cfg: &ExperimentConfig, values: &[f64], endpoints: &[f64]) -> Result<f64> {
    if endpoints.is_empty() {
        return Err(Error::config("mixture needs at least one endpoint"));
    }
    let (log_tail, _) = tail_log_density(model, cfg, values)?;
    let comps = endpoints
        .iter()
        .map(|&e| log_g_sigma(model, cfg, values, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_sum_exp(&comps) - (endpoints.len() as f64).ln() + log_tail)
}
