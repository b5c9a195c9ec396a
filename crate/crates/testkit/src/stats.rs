//! Goodness-of-fit statistics for the generator-law suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided Kolmogorov-Smirnov test of `samples` against a CDF. Returns
/// `(statistic, p_value)` using the asymptotic Kolmogorov distribution with
/// the usual finite-n correction.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    assert!(!samples.is_empty());
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    let t = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_survival(t))
}

/// Survival function of the Kolmogorov distribution,
/// `Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2)`.
pub fn kolmogorov_survival(t: f64) -> f64 {
    if t < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0f64;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * t * t).exp();
        if term < 1e-16 {
            break;
        }
        sum += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson chi-square goodness-of-fit: `(statistic, p_value)` for observed
/// counts against expected counts (same total).
pub fn chi_square_gof(observed: &[usize], expected: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected.len());
    assert!(observed.len() >= 2);
    let mut chi2 = 0.0f64;
    for (&o, &e) in observed.iter().zip(expected) {
        assert!(e > 0.0, "expected counts must be positive");
        let d = o as f64 - e;
        chi2 += d * d / e;
    }
    let df = (observed.len() - 1) as f64;
    let dist = ChiSquared::new(df).expect("valid dof");
    (chi2, 1.0 - dist.cdf(chi2))
}

/// CDF of U[lo, hi] for KS tests.
pub fn uniform_cdf(lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
}
