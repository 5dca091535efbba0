//! Exponential tilting: solving `m(t) = α`, tilted densities, the Chernoff
//! rate `I(x)` and leading-order saddlepoint density/tail approximations.

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};

use crate::dist::DistributionModel;
use crate::error::{Error, Result};
use crate::special::{log_ndtr, LN_SQRT_2PI};

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-12;

/// Tilt parameter solving `m(t) = alpha` with the cached moments of `π^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltSolution {
    pub alpha: f64,
    pub t: f64,
    pub s2: f64,
    pub mu3: f64,
    pub log_mgf_at_t: f64,
}

impl TiltSolution {
    fn at(model: &DistributionModel, alpha: f64, t: f64) -> Self {
        TiltSolution {
            alpha,
            t,
            s2: model.var_tilted(t),
            mu3: model.mu3_tilted(t),
            log_mgf_at_t: model.log_mgf_unchecked(t),
        }
    }
}

pub(crate) fn check_mean_range(model: &DistributionModel, alpha: f64) -> Result<()> {
    let (lo, hi) = model.mean_range();
    if alpha > lo && alpha < hi {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "target mean {alpha} outside the attainable range ({lo}, {hi}) of '{}'",
            model.name()
        )))
    }
}

/// Solves `m(t) = alpha` by safeguarded Newton iteration.
///
/// `m` is strictly increasing, so every evaluation tightens a bracket; Newton
/// steps leaving the bracket are replaced by bisection (or by doubling while
/// one side of the bracket is still unbounded).
pub fn solve_tilt(model: &DistributionModel, alpha: f64) -> Result<TiltSolution> {
    solve_tilt_from(model, alpha, alpha)
}

pub(crate) fn solve_tilt_from(model: &DistributionModel, alpha: f64, guess: f64) -> Result<TiltSolution> {
    check_mean_range(model, alpha)?;
    let (mut lo, mut hi) = model.tilt_domain();
    let mut t = if guess > lo && guess < hi {
        guess
    } else if lo.is_finite() && hi.is_finite() {
        0.5 * (lo + hi)
    } else {
        0.0
    };
    let tol = TOL * alpha.abs().max(1.0);
    for _ in 0..MAX_ITER {
        let f = model.mean_tilted(t) - alpha;
        if f.abs() <= tol {
            return Ok(TiltSolution::at(model, alpha, t));
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - f / model.var_tilted(t);
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if hi.is_finite() {
            t - 2.0 * t.abs().max(1.0)
        } else {
            t + 2.0 * t.abs().max(1.0)
        };
        if next == t {
            // bracket collapsed to adjacent floats
            let residual = (model.mean_tilted(t) - alpha).abs();
            if residual <= 1e-10 * alpha.abs().max(1.0) {
                return Ok(TiltSolution::at(model, alpha, t));
            }
            break;
        }
        t = next;
    }
    Err(Error::numerical(format!(
        "tilt solver for m(t) = {alpha} on '{}' did not converge in {MAX_ITER} iterations",
        model.name()
    )))
}

/// Like [`solve_tilt_from`], with closed-form inverses of `m` for the
/// built-in laws.
pub(crate) fn tilt_at_mean(model: &DistributionModel, alpha: f64, guess: f64) -> Result<TiltSolution> {
    match model {
        DistributionModel::Normal => {
            check_mean_range(model, alpha)?;
            Ok(TiltSolution::at(model, alpha, alpha))
        }
        DistributionModel::CenteredExponential => {
            check_mean_range(model, alpha)?;
            Ok(TiltSolution::at(model, alpha, alpha / (1.0 + alpha)))
        }
        DistributionModel::Custom(_) => solve_tilt_from(model, alpha, guess),
    }
}

/// `log π^α(x) = t·x − log Φ(t) + log p(x)`; `−∞` off the support.
pub fn tilted_log_density(model: &DistributionModel, sol: &TiltSolution, x: f64) -> f64 {
    let lp = model.log_density(x);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    sol.t * x - sol.log_mgf_at_t + lp
}

/// Exact draw from `π^α`.
pub fn sample_tilted<R: Rng>(model: &DistributionModel, sol: &TiltSolution, rng: &mut R) -> f64 {
    model.sample_tilted_t(sol.t, rng)
}

/// Chernoff rate `I(x) = sup_t {t·x − log Φ(t)}`.
pub fn chernoff(model: &DistributionModel, x: f64) -> Result<f64> {
    let sol = solve_tilt(model, x)?;
    Ok(sol.t * x - sol.log_mgf_at_t)
}

/// Log of the leading-order density of `S₁ⁿ/n` at `a`:
/// `½ log n − n I(a) − log √(2π)`.
pub fn richter_log_density(model: &DistributionModel, n: usize, a: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    let nf = n as f64;
    Ok(0.5 * nf.ln() - nf * chernoff(model, a)? - LN_SQRT_2PI)
}

/// Log of the leading-order tail `P(S₁ⁿ/n > a) ≈ e^{−nI(a)} / (√(2πn) ψ(a))`
/// with `ψ(a) = t_a s(t_a)`.
pub fn jensen_log_tail(model: &DistributionModel, n: usize, a: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if a <= 0.0 {
        return Err(Error::domain(format!("Jensen tail needs a > 0 (got {a}); ψ(a) vanishes at 0")));
    }
    let sol = solve_tilt(model, a)?;
    let nf = n as f64;
    let rate = sol.t * a - sol.log_mgf_at_t;
    let psi = sol.t * sol.s2.sqrt();
    Ok(-nf * rate - LN_SQRT_2PI - 0.5 * nf.ln() - psi.ln())
}

/// Exact `log P(S₁ⁿ/n > a)` for the built-in laws.
pub fn exact_log_tail(model: &DistributionModel, n: usize, a: f64) -> Option<f64> {
    let nf = n as f64;
    match model {
        DistributionModel::Normal => Some(log_ndtr(-a * nf.sqrt())),
        DistributionModel::CenteredExponential => {
            // S₁ⁿ + n ~ Gamma(n, 1)
            let g = Gamma::new(nf, 1.0).ok()?;
            Some(g.sf(nf * (1.0 + a)).ln())
        }
        DistributionModel::Custom(_) => None,
    }
}

/// Exact density of `S₁ⁿ/n` at `a` for the built-in laws.
pub fn exact_mean_density(model: &DistributionModel, n: usize, a: f64) -> Option<f64> {
    let nf = n as f64;
    match model {
        DistributionModel::Normal => Some(nf.sqrt() * crate::special::std_normal_pdf(a * nf.sqrt())),
        DistributionModel::CenteredExponential => {
            let g = Gamma::new(nf, 1.0).ok()?;
            Some(nf * g.pdf(nf * (1.0 + a)))
        }
        DistributionModel::Custom(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{make_centered_exponential, make_normal};
    use crate::quad::integrate;
    use crate::special::{ks_two_sample, ks_two_sample_critical_1pct, mean_var};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solve_tilt_examples() {
        assert_eq!(solve_tilt(&make_normal(), 0.5).unwrap().t, 0.5);
        assert_eq!(solve_tilt(&make_normal(), 0.0).unwrap().t, 0.0);
        let s = solve_tilt(&make_centered_exponential(), 1.0).unwrap();
        assert!((s.t - 0.5).abs() < 1e-12);
        assert!((s.s2 - 4.0).abs() < 1e-10);
        assert!((s.mu3 - 16.0).abs() < 1e-9);
    }

    #[test]
    fn solve_tilt_rejects_unattainable_means() {
        let err = solve_tilt(&make_centered_exponential(), -1.0).unwrap_err();
        match err {
            Error::Domain(msg) => assert!(msg.contains("(-1, inf)"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(solve_tilt(&make_centered_exponential(), -3.0).is_err());
        assert!(solve_tilt(&make_normal(), f64::NAN).is_err());
    }

    #[test]
    fn solve_tilt_handles_extreme_targets() {
        let m = make_centered_exponential();
        for &alpha in &[-1.0 + 1e-6, -0.999, 50.0, 1e3] {
            let s = solve_tilt(&m, alpha).unwrap();
            assert!((m.mean_tilted(s.t) - alpha).abs() <= 1e-10 * alpha.abs().max(1.0), "alpha={alpha}");
        }
        let s = solve_tilt(&make_normal(), -1e4).unwrap();
        assert_eq!(s.t, -1e4);
    }

    #[test]
    fn closed_form_inverse_matches_newton() {
        for model in [make_normal(), make_centered_exponential()] {
            for alpha in [-0.6, -0.1, 0.0, 0.232, 1.5, 7.0] {
                let fast = tilt_at_mean(&model, alpha, 0.0).unwrap();
                let slow = solve_tilt(&model, alpha).unwrap();
                assert!((fast.t - slow.t).abs() < 1e-10, "{} {alpha}", model.name());
                assert!((model.mean_tilted(fast.t) - alpha).abs() < 1e-10);
            }
        }
        assert!(tilt_at_mean(&make_centered_exponential(), -1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_normal(alpha in -8.0f64..8.0) {
            let m = make_normal();
            let s = solve_tilt(&m, alpha).unwrap();
            prop_assert!((m.mean_tilted(s.t) - alpha).abs() < 1e-10);
        }

        #[test]
        fn round_trip_cexp(alpha in -0.99f64..8.0) {
            let m = make_centered_exponential();
            let s = solve_tilt(&m, alpha).unwrap();
            prop_assert!((m.mean_tilted(s.t) - alpha).abs() < 1e-10);
            prop_assert!(m.in_tilt_domain(s.t));
        }

        #[test]
        fn cached_moments_are_consistent(alpha in -0.9f64..3.0) {
            let m = make_centered_exponential();
            let s = solve_tilt(&m, alpha).unwrap();
            prop_assert_eq!(s.s2, m.var_tilted(s.t));
            prop_assert_eq!(s.mu3, m.mu3_tilted(s.t));
            prop_assert_eq!(s.log_mgf_at_t, m.log_mgf(s.t).unwrap());
        }
    }

    #[test]
    fn tilted_log_density_examples() {
        let n = make_normal();
        let s0 = solve_tilt(&n, 0.0).unwrap();
        assert!((tilted_log_density(&n, &s0, 0.0) + 0.918_939).abs() < 1e-6);
        let s = solve_tilt(&n, 0.5).unwrap();
        assert!((tilted_log_density(&n, &s, 0.5) + 0.918_939).abs() < 1e-6);
        let c = make_centered_exponential();
        let s = solve_tilt(&c, 1.0).unwrap();
        assert_eq!(tilted_log_density(&c, &s, -1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn tilted_densities_are_normalized() {
        for (m, alphas) in [
            (make_normal(), [-1.3, -0.2, 0.1, 0.5, 2.0]),
            (make_centered_exponential(), [-0.6, -0.1, 0.232, 1.0, 3.0]),
        ] {
            let (lo, hi) = m.support();
            for alpha in alphas {
                let s = solve_tilt(&m, alpha).unwrap();
                let q = integrate(|x| tilted_log_density(&m, &s, x).exp(), lo, hi, 1e-12, 1e-12).unwrap();
                assert!((q.value - 1.0).abs() < 1e-6, "{} alpha={alpha}: {}", m.name(), q.value);
            }
        }
    }

    #[test]
    fn sample_tilted_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = make_normal();
        let s = solve_tilt(&n, 0.3).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| sample_tilted(&n, &s, &mut rng)).collect();
        assert!((mean_var(&xs).0 - 0.3).abs() < 0.01);

        let c = make_centered_exponential();
        let s = solve_tilt(&c, 1.0).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| sample_tilted(&c, &s, &mut rng)).collect();
        assert!((mean_var(&xs).0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn zero_tilt_reproduces_base_law() {
        for m in [make_normal(), make_centered_exponential()] {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let s = solve_tilt(&m, 0.0).unwrap();
            let a: Vec<f64> = (0..10_000).map(|_| sample_tilted(&m, &s, &mut rng)).collect();
            let b: Vec<f64> = (0..10_000).map(|_| m.sample(&mut rng)).collect();
            assert!(ks_two_sample(&a, &b) < ks_two_sample_critical_1pct(10_000, 10_000));
        }
    }

    #[test]
    fn chernoff_examples() {
        assert!((chernoff(&make_normal(), 0.5).unwrap() - 0.125).abs() < 1e-14);
        assert_eq!(chernoff(&make_normal(), 0.0).unwrap(), 0.0);
        let c = make_centered_exponential();
        let v = chernoff(&c, 0.232).unwrap();
        // closed form x − log(1 + x)
        assert!((v - 0.023_361_134_888_672).abs() < 1e-12);
        // grid search over t for the supremum
        let grid_max = (0..200_000)
            .map(|j| -5.0 + j as f64 * (5.999 / 200_000.0))
            .map(|t| t * 0.232 - c.log_mgf(t).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((grid_max - v).abs() < 1e-8);
    }

    #[test]
    fn chernoff_is_convex_with_derivative_equal_to_tilt() {
        for (m, lo, hi) in [(make_normal(), -2.0, 2.0), (make_centered_exponential(), -0.8, 2.0)] {
            assert_eq!(chernoff(&m, 0.0).unwrap(), 0.0);
            let h = 1e-4;
            for j in 0..20 {
                let x = lo + (hi - lo) * (j as f64 + 0.5) / 20.0;
                let i = |y: f64| chernoff(&m, y).unwrap();
                let second = (i(x + h) - 2.0 * i(x) + i(x - h)) / (h * h);
                assert!(second >= 0.0, "{} x={x}", m.name());
                let first = (i(x + 1e-6) - i(x - 1e-6)) / 2e-6;
                let t = solve_tilt(&m, x).unwrap().t;
                assert!((first - t).abs() < 1e-5, "{} x={x}: {first} vs {t}", m.name());
            }
        }
    }

    #[test]
    fn richter_examples() {
        let n = make_normal();
        let v = richter_log_density(&n, 100, 0.0).unwrap();
        assert!((v - (10.0 / (2.0 * std::f64::consts::PI).sqrt()).ln()).abs() < 1e-12);
        assert!((v - 1.383_646_559_789_373).abs() < 1e-12);
        // exact N(0, 1/100) density at a: 10 φ(2.32635)
        let v = richter_log_density(&n, 100, 0.232_635).unwrap().exp();
        assert!((v - 0.266_520_103_896_758_5).abs() < 1e-12);
        assert!((v - exact_mean_density(&n, 100, 0.232_635).unwrap()).abs() < 1e-12);

        let c = make_centered_exponential();
        let v = richter_log_density(&c, 100, 0.232).unwrap().exp();
        assert!((v - 0.385_788_136_613_533_3).abs() < 1e-9);
        // the leading form omits the 1/s(t_a) = 1/(1 + a) factor of the exact density
        let exact = exact_mean_density(&c, 100, 0.232).unwrap();
        assert!((exact - 0.312_878_881_077_453_8).abs() < 1e-9);
        assert!((v / exact / 1.232 - 1.0).abs() < 2e-3);
    }

    #[test]
    fn jensen_examples() {
        let n = make_normal();
        let v = jensen_log_tail(&n, 100, 0.232_635).unwrap().exp();
        // Mills ratio φ(z)/z at z = 2.32635
        assert!((v - 0.011_456_578_068_508_97).abs() < 1e-9);
        let exact = exact_log_tail(&n, 100, 0.232_635).unwrap().exp();
        assert!((exact - 0.01).abs() < 1e-6);

        let c = make_centered_exponential();
        let v = jensen_log_tail(&c, 100, 0.232).unwrap().exp();
        assert!((v - 0.016_628_798_991_962_64).abs() < 1e-9);
        let exact = exact_log_tail(&c, 100, 0.232).unwrap().exp();
        assert!((exact - 0.014_107_890_377_504_3).abs() < 1e-9);

        assert!(matches!(jensen_log_tail(&n, 100, 0.0), Err(Error::Domain(_))));
        assert!(matches!(jensen_log_tail(&n, 100, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn jensen_ratio_depends_only_on_standardized_threshold_for_normal() {
        let m = make_normal();
        let z: f64 = 2.326_35;
        let ratios: Vec<f64> = [100usize, 1000, 10_000]
            .iter()
            .map(|&n| {
                let a = z / (n as f64).sqrt();
                (jensen_log_tail(&m, n, a).unwrap() - exact_log_tail(&m, n, a).unwrap()).exp()
            })
            .collect();
        for r in &ratios {
            assert!((r - 1.145_664_298_325_237).abs() < 1e-9, "{r}");
        }
        // growing z brings the ratio toward 1
        let r5 = (jensen_log_tail(&m, 100, 0.5).unwrap() - exact_log_tail(&m, 100, 0.5).unwrap()).exp();
        assert!(r5 < ratios[0] && r5 > 1.0);
    }

    #[test]
    fn deep_tails_stay_finite_in_log_scale() {
        let m = make_normal();
        let v = jensen_log_tail(&m, 10_000, 0.5).unwrap();
        assert!(v.is_finite() && v < -1000.0);
        let e = exact_log_tail(&m, 10_000, 0.5).unwrap();
        assert!((v - e).abs() < 0.01);
    }
}
