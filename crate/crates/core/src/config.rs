//! Experiment configuration: resolved parameters, `key = value` config files
//! and layered overrides.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::dist::DistributionModel;
use crate::error::{Error, Result};

/// Estimator selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Cis,
    Atis,
}

/// How the tilt parameter `t_{i,n}` is tracked along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiltMode {
    /// Solve `m(t) = m_{i,n}` at every step.
    #[default]
    Exact,
    /// One Newton step from the previous tilt toward the next target.
    FirstOrder,
}

/// How the normalizing constant of each `g_i` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizerMode {
    /// Closed form (built-in laws); falls back to quadrature otherwise.
    #[default]
    Closed,
    /// Plain Monte Carlo average of `p(Z)` with `Z ~ 𝔫(ab, a)`.
    Mc,
    /// Adaptive quadrature.
    Quadrature,
}

/// Where each ATIS replicate takes its endpoint draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointSource {
    /// Uniformly among the run's shared mixture endpoints; the mixture density
    /// is then exactly the proposal density.
    #[default]
    Mixture,
    /// A fresh endpoint per replicate.
    Fresh,
}

macro_rules! impl_choice {
    ($ty:ty, $what:literal, { $($s:literal => $v:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($v),)+
                    other => Err(Error::config(format!(
                        concat!("unknown ", $what, " '{}' (expected one of: {})"),
                        other,
                        [$($s),+].join(", ")
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $v { return f.write_str($s); })+
                unreachable!()
            }
        }
    };
}

impl_choice!(Method, "method", { "naive" => Method::Naive, "cis" => Method::Cis, "atis" => Method::Atis });
impl_choice!(TiltMode, "tilt mode", { "exact" => TiltMode::Exact, "first-order" => TiltMode::FirstOrder });
impl_choice!(NormalizerMode, "normalizer mode", {
    "closed" => NormalizerMode::Closed,
    "mc" => NormalizerMode::Mc,
    "quadrature" => NormalizerMode::Quadrature,
});
impl_choice!(EndpointSource, "endpoint source", { "mixture" => EndpointSource::Mixture, "fresh" => EndpointSource::Fresh });

fn serialize_model<S: Serializer>(model: &DistributionModel, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(model.name())
}

pub const DEFAULT_M: usize = 30;
pub const DEFAULT_L: usize = 1000;
pub const DEFAULT_N_C: usize = 1000;
pub const CLAMP_MARGIN: f64 = 1e-6;

/// Fully resolved experiment parameters.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    #[serde(serialize_with = "serialize_model")]
    pub dist: DistributionModel,
    pub n: usize,
    pub a_n: f64,
    /// Length of the adaptive block (ATIS only).
    pub k: usize,
    /// Number of mixture components (ATIS only).
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "N_C")]
    pub n_c: usize,
    pub seed: u64,
    pub tilt_mode: TiltMode,
    pub ci_mode: NormalizerMode,
    pub endpoint_source: EndpointSource,
    pub method: Method,
    pub workers: usize,
    /// Keep per-replicate records in the summary.
    #[serde(skip)]
    pub keep_weights: bool,
}

impl ExperimentConfig {
    /// A configuration with defaults for everything but the problem itself.
    pub fn new(dist: DistributionModel, n: usize, a_n: f64, method: Method) -> Self {
        ExperimentConfig {
            dist,
            n,
            a_n,
            k: default_k(n),
            m: DEFAULT_M,
            l: DEFAULT_L,
            n_c: DEFAULT_N_C,
            seed: 0,
            tilt_mode: TiltMode::Exact,
            ci_mode: NormalizerMode::Closed,
            endpoint_source: EndpointSource::Mixture,
            method,
            workers: 1,
            keep_weights: false,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_l(mut self, l: usize) -> Self {
        self.l = l;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    /// Checks every bound the chosen method relies on.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n must be at least 1"));
        }
        if !self.a_n.is_finite() {
            return Err(Error::config(format!("a_n must be finite (got {})", self.a_n)));
        }
        let (lo, hi) = self.dist.mean_range();
        if !(self.a_n > lo && self.a_n < hi) {
            return Err(Error::config(format!(
                "a_n = {} outside the attainable mean range ({lo}, {hi}) of '{}'",
                self.a_n,
                self.dist.name()
            )));
        }
        if self.l == 0 {
            return Err(Error::config("L must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.method == Method::Atis {
            if self.n < 3 {
                return Err(Error::config(format!("atis needs n ≥ 3 (got n={})", self.n)));
            }
            check_k(self.k, self.n)?;
            if self.m == 0 {
                return Err(Error::config("M must be at least 1"));
            }
            if self.a_n <= 0.0 {
                return Err(Error::config(format!("atis needs a_n > 0 (got {})", self.a_n)));
            }
            if self.ci_mode == NormalizerMode::Mc && self.n_c == 0 {
                return Err(Error::config("N_C must be at least 1 in mc normalizer mode"));
            }
        }
        Ok(())
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k + 2 > n {
        return Err(Error::config(format!("k must satisfy k ≤ n−2 and k ≥ 1 (got k={k}, n={n})")));
    }
    Ok(())
}

/// Default adaptive block length: 60% of n, kept within `[1, n−2]`.
pub fn default_k(n: usize) -> usize {
    ((n as f64 * 0.6).floor() as usize).clamp(1, n.saturating_sub(2).max(1))
}

/// Partially specified configuration, as read from a file or from flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub dist: Option<String>,
    pub n: Option<usize>,
    pub a_n: Option<f64>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub l: Option<usize>,
    pub n_c: Option<usize>,
    pub seed: Option<u64>,
    pub tilt_mode: Option<TiltMode>,
    pub ci_mode: Option<NormalizerMode>,
    pub endpoint_source: Option<EndpointSource>,
    pub method: Option<Method>,
    pub workers: Option<usize>,
}

fn parse_field<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::config(format!("invalid value '{value}' for {key}: {e}")))
}

impl ConfigOverrides {
    /// Parses flat `key = value` text. Blank lines and `#` comments are
    /// ignored; unknown keys are errors.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut out = ConfigOverrides::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1)))?;
            out.set(key.trim(), value.trim())?;
        }
        Ok(out)
    }

    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dist" => self.dist = Some(value.to_string()),
            "n" => self.n = Some(parse_field(key, value)?),
            "a" | "a_n" => self.a_n = Some(parse_field(key, value)?),
            "k" => self.k = Some(parse_field(key, value)?),
            "M" | "m" => self.m = Some(parse_field(key, value)?),
            "L" | "l" => self.l = Some(parse_field(key, value)?),
            "N_C" | "nc" => self.n_c = Some(parse_field(key, value)?),
            "seed" => self.seed = Some(parse_field(key, value)?),
            "tilt_mode" | "tilt-mode" => self.tilt_mode = Some(value.parse()?),
            "ci_mode" | "ci-mode" => self.ci_mode = Some(value.parse()?),
            "endpoint_source" | "endpoint-source" => self.endpoint_source = Some(value.parse()?),
            "method" => self.method = Some(value.parse()?),
            "workers" => self.workers = Some(parse_field(key, value)?),
            other => return Err(Error::config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Layers `other` on top of `self`; fields set in `other` win.
    pub fn merge(self, other: ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            dist: other.dist.or(self.dist),
            n: other.n.or(self.n),
            a_n: other.a_n.or(self.a_n),
            k: other.k.or(self.k),
            m: other.m.or(self.m),
            l: other.l.or(self.l),
            n_c: other.n_c.or(self.n_c),
            seed: other.seed.or(self.seed),
            tilt_mode: other.tilt_mode.or(self.tilt_mode),
            ci_mode: other.ci_mode.or(self.ci_mode),
            endpoint_source: other.endpoint_source.or(self.endpoint_source),
            method: other.method.or(self.method),
            workers: other.workers.or(self.workers),
        }
    }

    /// Fills defaults and validates. `dist`, `n` and `a_n` are required.
    /// An explicitly given `k` is always range-checked.
    pub fn resolve(&self, default_method: Method) -> Result<ExperimentConfig> {
        let dist_name = self.dist.as_deref().ok_or_else(|| Error::config("missing required field dist"))?;
        let dist: DistributionModel = dist_name.parse()?;
        let n = self.n.ok_or_else(|| Error::config("missing required field n"))?;
        let a_n = self.a_n.ok_or_else(|| Error::config("missing required field a_n (flag --a)"))?;
        if let Some(k) = self.k {
            check_k(k, n)?;
        }
        let method = self.method.unwrap_or(default_method);
        let mut cfg = ExperimentConfig::new(dist, n, a_n, method);
        if let Some(k) = self.k {
            cfg.k = k;
        }
        cfg.m = self.m.unwrap_or(cfg.m);
        cfg.l = self.l.unwrap_or(cfg.l);
        cfg.n_c = self.n_c.unwrap_or(cfg.n_c);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.tilt_mode = self.tilt_mode.unwrap_or_default();
        cfg.ci_mode = self.ci_mode.unwrap_or_default();
        cfg.endpoint_source = self.endpoint_source.unwrap_or_default();
        cfg.workers = self.workers.unwrap_or(cfg.workers);
        cfg.validate()?;
        Ok(cfg)
    }
}
