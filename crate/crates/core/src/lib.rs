//! Rare-event estimation for sample means of i.i.d. variables.
//!
//! Estimators for `P(S_n / n > a_n)`: naive Monte Carlo, classical
//! exponentially tilted importance sampling, and adaptive twisted importance
//! sampling (ATIS) which samples the first `k` coordinates of a path from a
//! conditional-law approximation and mixes over random endpoints.

pub mod atis;
pub mod config;
pub mod diag;
pub mod dist;
pub mod error;
pub mod estimate;
pub mod ktune;
pub mod quad;
pub mod rng;
pub mod special;
pub mod tilt;

pub use atis::{GiParams, SamplerStats, TiltState, Trajectory};
pub use config::{ConfigOverrides, EndpointSource, ExperimentConfig, Method, NormalizerMode, TiltMode};
pub use diag::DiagReport;
pub use dist::{make_centered_exponential, make_normal, CustomModel, DistributionModel};
pub use error::{Error, Result};
pub use estimate::{EstimateSummary, ReplicateRecord};
pub use ktune::{KScan, MScanRow};
pub use tilt::TiltSolution;
