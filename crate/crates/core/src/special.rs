//! Special functions and small statistical helpers shared by the samplers
//! and diagnostics.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};
use statrs::function::erf::{erfc, erfc_inv};

/// `ln(sqrt(2π))`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Log density of `N(mean, var)` at `x`.
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Standard normal CDF `Φ(z)`.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal survival function `1 − Φ(z)`, accurate in the upper tail.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `ln Φ(z)`, finite for every finite `z`.
pub fn log_ndtr(z: f64) -> f64 {
    if z > 5.0 {
        (-std_normal_sf(z)).ln_1p()
    } else if z > -20.0 {
        std_normal_cdf(z).ln()
    } else {
        // Mills-ratio asymptotic series; six terms are exact to f64 below -20.
        let r = 1.0 / (z * z);
        let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r * (1.0 - 9.0 * r))));
        -0.5 * z * z - (-z).ln() - LN_SQRT_2PI + series.ln()
    }
}

/// Standard normal quantile `Φ⁻¹(u)` for `u ∈ (0, 1)`.
pub fn std_normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Draws `Z ~ N(0,1)` conditioned on `Z > lo`.
///
/// Uses inversion of the survival function for moderate `lo` and Robert's
/// exponential rejection sampler in the far tail.
pub fn sample_std_normal_above<R: Rng + ?Sized>(lo: f64, rng: &mut R) -> f64 {
    if lo < 4.0 {
        let tail = std_normal_sf(lo);
        loop {
            let u: f64 = Open01.sample(rng);
            let z = -std_normal_quantile(u * tail);
            if z.is_finite() && z > lo {
                return z;
            }
        }
    }
    let rate = 0.5 * (lo + (lo * lo + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = lo + e / rate;
        let u: f64 = rng.random();
        if u <= (-0.5 * (z - rate) * (z - rate)).exp() {
            return z;
        }
    }
}

/// `ln Σ exp(xᵢ)`, returning `−∞` for an empty slice or all-`−∞` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// One-sample Kolmogorov–Smirnov distance between the empirical law of
/// `samples` and a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let lo = f - i as f64 / n;
            let hi = (i + 1) as f64 / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at level 1%.
pub fn ks_two_sample_critical_1pct(na: usize, nb: usize) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    1.627_6 * ((na + nb) / (na * nb)).sqrt()
}

/// Asymptotic one-sample KS critical value at level 1%.
pub fn ks_one_sample_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs
        .iter()
        .map(|&x| (x - mean) * (x - mean))
        .collect::<CompensatedSum>()
        .value();
    (mean, ss / (n - 1.0))
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    xs[lo] + (pos - lo as f64) * (xs[hi] - xs[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_ndtr_matches_direct_evaluation_and_tail_series() {
        for &z in &[-3.0, -1.0, 0.0, 0.5, 2.0, 6.0] {
            assert!((log_ndtr(z) - std_normal_cdf(z).ln()).abs() < 1e-12, "z={z}");
        }
        // continuity across the series switch
        let a = log_ndtr(-20.0 + 1e-9);
        let b = log_ndtr(-20.0 - 1e-9);
        assert!((a - b).abs() < 1e-6);
        // ln Φ(-40) = -804.608442013754 (mpmath)
        assert!((log_ndtr(-40.0) - (-804.608_442_013_754)).abs() < 1e-9);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &u in &[1e-12, 0.01, 0.3, 0.5, 0.9, 0.999_999] {
            let z = std_normal_quantile(u);
            assert!((std_normal_cdf(z) - u).abs() / u < 1e-10, "u={u}");
        }
    }

    #[test]
    fn truncated_normal_mean_matches_mills_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &lo in &[-1.0, 2.326, 6.0] {
            let xs: Vec<f64> = (0..50_000).map(|_| sample_std_normal_above(lo, &mut rng)).collect();
            assert!(xs.iter().all(|&x| x > lo));
            let (m, _) = mean_var(&xs);
            let exact = std_normal_pdf(lo) / std_normal_sf(lo);
            assert!((m - exact).abs() < 0.01, "lo={lo} mean={m} exact={exact}");
        }
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn ks_distances() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.005).abs() < 1e-12);
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
        let ints: Vec<f64> = (0..100).map(f64::from).collect();
        let shifted: Vec<f64> = ints.iter().map(|x| x + 50.0).collect();
        assert!((ks_two_sample(&ints, &shifted) - 0.5).abs() < 1e-12);
    }
}
