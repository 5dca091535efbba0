//! Summand laws and their cumulant-generating-function quantities.
//!
//! All models are centered with unit variance. Two laws are built in (the
//! standard normal and `Exp(1) − 1`); [`CustomModel`] is an extension point
//! for user-supplied closed forms.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::special::{log_ndtr, sample_std_normal_above, std_normal_cdf, LN_SQRT_2PI};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type SamplerFn = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;
type TiltedSamplerFn = Arc<dyn Fn(f64, &mut dyn RngCore) -> f64 + Send + Sync>;

/// A user-supplied summand law. All callables must be closed forms valid on
/// the declared domains.
#[derive(Clone)]
pub struct CustomModel {
    pub name: String,
    pub log_density: RealFn,
    pub log_mgf: RealFn,
    pub mean_tilted: RealFn,
    pub var_tilted: RealFn,
    pub mu3_tilted: RealFn,
    /// Exact draw from the base density.
    pub sample: SamplerFn,
    /// Exact draw from the tilted density with parameter `t`.
    pub sample_tilted: TiltedSamplerFn,
    /// Open interval of `t` where the MGF is finite.
    pub tilt_domain: (f64, f64),
    /// Open interval where the density is positive.
    pub support: (f64, f64),
    /// Limits of `m(t)` at the ends of the tilt domain.
    pub mean_range: (f64, f64),
    pub density_sup: f64,
}

impl fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomModel")
            .field("name", &self.name)
            .field("tilt_domain", &self.tilt_domain)
            .field("support", &self.support)
            .field("mean_range", &self.mean_range)
            .field("density_sup", &self.density_sup)
            .finish_non_exhaustive()
    }
}

/// Immutable description of the summand law.
#[derive(Debug, Clone)]
pub enum DistributionModel {
    /// Standard normal.
    Normal,
    /// `E − 1` with `E ~ Exp(1)`, supported on `(−1, ∞)`.
    CenteredExponential,
    Custom(Arc<CustomModel>),
}

pub fn make_normal() -> DistributionModel {
    DistributionModel::Normal
}

pub fn make_centered_exponential() -> DistributionModel {
    DistributionModel::CenteredExponential
}

impl FromStr for DistributionModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(DistributionModel::Normal),
            "cexp" => Ok(DistributionModel::CenteredExponential),
            other => Err(Error::config(format!("unknown distribution '{other}' (expected normal or cexp)"))),
        }
    }
}

impl DistributionModel {
    /// Wraps a custom law after checking its declared domains.
    pub fn custom(model: CustomModel) -> Result<Self> {
        let (lo, hi) = model.tilt_domain;
        if !(lo < 0.0 && 0.0 < hi) {
            return Err(Error::config(format!(
                "custom model '{}': tilt domain ({lo}, {hi}) must contain 0",
                model.name
            )));
        }
        if !(model.support.0 < model.support.1) {
            return Err(Error::config(format!("custom model '{}': empty support", model.name)));
        }
        if !(model.mean_range.0 < 0.0 && 0.0 < model.mean_range.1) {
            return Err(Error::config(format!("custom model '{}': mean range must contain 0", model.name)));
        }
        if !(model.density_sup.is_finite() && model.density_sup > 0.0) {
            return Err(Error::config(format!(
                "custom model '{}': density_sup must be finite and positive (got {})",
                model.name, model.density_sup
            )));
        }
        Ok(DistributionModel::Custom(Arc::new(model)))
    }

    pub fn name(&self) -> &str {
        match self {
            DistributionModel::Normal => "normal",
            DistributionModel::CenteredExponential => "cexp",
            DistributionModel::Custom(c) => &c.name,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, DistributionModel::Custom(_))
    }

    pub fn log_density(&self, x: f64) -> f64 {
        match self {
            DistributionModel::Normal => -0.5 * x * x - LN_SQRT_2PI,
            DistributionModel::CenteredExponential => {
                if x > -1.0 {
                    -(x + 1.0)
                } else {
                    f64::NEG_INFINITY
                }
            }
            DistributionModel::Custom(c) => {
                if x > c.support.0 && x < c.support.1 {
                    (c.log_density)(x)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    /// Open interval of tilt parameters with a finite MGF.
    pub fn tilt_domain(&self) -> (f64, f64) {
        match self {
            DistributionModel::Normal => (f64::NEG_INFINITY, f64::INFINITY),
            DistributionModel::CenteredExponential => (f64::NEG_INFINITY, 1.0),
            DistributionModel::Custom(c) => c.tilt_domain,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            DistributionModel::Normal => (f64::NEG_INFINITY, f64::INFINITY),
            DistributionModel::CenteredExponential => (-1.0, f64::INFINITY),
            DistributionModel::Custom(c) => c.support,
        }
    }

    /// Open interval of attainable tilted means `m(tilt_domain)`.
    pub fn mean_range(&self) -> (f64, f64) {
        match self {
            DistributionModel::Normal => (f64::NEG_INFINITY, f64::INFINITY),
            DistributionModel::CenteredExponential => (-1.0, f64::INFINITY),
            DistributionModel::Custom(c) => c.mean_range,
        }
    }

    pub fn density_sup(&self) -> f64 {
        match self {
            DistributionModel::Normal => (-LN_SQRT_2PI).exp(),
            DistributionModel::CenteredExponential => 1.0,
            DistributionModel::Custom(c) => c.density_sup,
        }
    }

    pub fn in_tilt_domain(&self, t: f64) -> bool {
        let (lo, hi) = self.tilt_domain();
        t > lo && t < hi
    }

    /// `log Φ(t)`; fails outside the tilt domain.
    pub fn log_mgf(&self, t: f64) -> Result<f64> {
        if !self.in_tilt_domain(t) {
            let (lo, hi) = self.tilt_domain();
            return Err(Error::domain(format!(
                "tilt parameter {t} outside the tilt domain ({lo}, {hi}) of '{}'",
                self.name()
            )));
        }
        Ok(self.log_mgf_unchecked(t))
    }

    pub(crate) fn log_mgf_unchecked(&self, t: f64) -> f64 {
        match self {
            DistributionModel::Normal => 0.5 * t * t,
            DistributionModel::CenteredExponential => -t - (-t).ln_1p(),
            DistributionModel::Custom(c) => (c.log_mgf)(t),
        }
    }

    /// `m(t)`, the mean of the tilted law.
    pub fn mean_tilted(&self, t: f64) -> f64 {
        match self {
            DistributionModel::Normal => t,
            DistributionModel::CenteredExponential => t / (1.0 - t),
            DistributionModel::Custom(c) => (c.mean_tilted)(t),
        }
    }

    /// `s²(t) = m′(t)`.
    pub fn var_tilted(&self, t: f64) -> f64 {
        match self {
            DistributionModel::Normal => 1.0,
            DistributionModel::CenteredExponential => {
                let r = 1.0 / (1.0 - t);
                r * r
            }
            DistributionModel::Custom(c) => (c.var_tilted)(t),
        }
    }

    /// Third centered moment of the tilted law.
    pub fn mu3_tilted(&self, t: f64) -> f64 {
        match self {
            DistributionModel::Normal => 0.0,
            DistributionModel::CenteredExponential => {
                let r = 1.0 / (1.0 - t);
                2.0 * r * r * r
            }
            DistributionModel::Custom(c) => (c.mu3_tilted)(t),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            DistributionModel::Normal => StandardNormal.sample(rng),
            DistributionModel::CenteredExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            DistributionModel::Custom(c) => (c.sample)(rng as &mut dyn RngCore),
        }
    }

    /// Exact draw from the law tilted by `t`.
    pub fn sample_tilted_t<R: Rng>(&self, t: f64, rng: &mut R) -> f64 {
        match self {
            DistributionModel::Normal => {
                let z: f64 = StandardNormal.sample(rng);
                t + z
            }
            DistributionModel::CenteredExponential => {
                let e: f64 = Exp1.sample(rng);
                e / (1.0 - t) - 1.0
            }
            DistributionModel::Custom(c) => (c.sample_tilted)(t, rng as &mut dyn RngCore),
        }
    }

    /// CDF of the law tilted by `t`, when a closed form exists.
    pub fn tilted_cdf(&self, t: f64, x: f64) -> Option<f64> {
        match self {
            DistributionModel::Normal => Some(std_normal_cdf(x - t)),
            DistributionModel::CenteredExponential => {
                if x <= -1.0 {
                    Some(0.0)
                } else {
                    Some(-(-(1.0 - t) * (x + 1.0)).exp_m1())
                }
            }
            DistributionModel::Custom(_) => None,
        }
    }

    /// Closed form of `ln ∫ p(x) 𝔫(μ, v; x) dx`, when available.
    pub(crate) fn log_gauss_overlap(&self, mu: f64, var: f64) -> Option<f64> {
        match self {
            DistributionModel::Normal => {
                let v = 1.0 + var;
                Some(-0.5 * mu * mu / v - 0.5 * v.ln() - LN_SQRT_2PI)
            }
            DistributionModel::CenteredExponential => {
                // e^{-(x+1)} 𝔫(μ,v;x) = e^{-(μ+1)+v/2} 𝔫(μ−v, v; x) on x > −1
                let sd = var.sqrt();
                Some(-(mu + 1.0) + 0.5 * var + log_ndtr((mu - var + 1.0) / sd))
            }
            DistributionModel::Custom(_) => None,
        }
    }

    /// Direct draw from the density proportional to `p(x) 𝔫(μ, v; x)`, when
    /// a closed form exists.
    pub(crate) fn sample_gauss_product<R: Rng>(&self, mu: f64, var: f64, rng: &mut R) -> Option<f64> {
        match self {
            DistributionModel::Normal => {
                let v = var / (1.0 + var);
                let z: f64 = StandardNormal.sample(rng);
                Some(mu / (1.0 + var) + v.sqrt() * z)
            }
            DistributionModel::CenteredExponential => {
                // truncated N(μ − v, v) on (−1, ∞)
                let sd = var.sqrt();
                let center = mu - var;
                let z = sample_std_normal_above((-1.0 - center) / sd, rng);
                let y = center + sd * z;
                Some(if y > -1.0 { y } else { -1.0 + f64::EPSILON })
            }
            DistributionModel::Custom(_) => None,
        }
    }
}
