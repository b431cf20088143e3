//! Self-contained statistical primitives: empirical CDFs, two-sample and
//! one-sample Kolmogorov-Smirnov tests, a Gaussianity check, and the Hill
//! tail-index estimator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{mean, variance};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("sample of size {n} below minimum {min}")]
    TooSmall { n: usize, min: usize },
    #[error("sample is degenerate (zero variance)")]
    Degenerate,
    #[error("hill estimator requires strictly positive values")]
    NonPositive,
    #[error("top-order count k = {k} invalid for sample size {n}")]
    BadK { k: usize, n: usize },
    #[error("sample must be non-empty and free of NaN")]
    Invalid,
}

/// A sorted sample of reals.
#[derive(Debug, Clone)]
pub struct EmpiricalSample {
    values: Vec<f64>,
}

impl EmpiricalSample {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self, StatsError> {
        if values.is_empty() || values.iter().any(|v| v.is_nan()) {
            return Err(StatsError::Invalid);
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Empirical CDF at x (right-continuous).
    pub fn cdf(&self, x: f64) -> f64 {
        let mut lo = 0usize;
        let mut hi = self.values.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.values[mid] <= x {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo as f64 / self.values.len() as f64
    }

    pub fn median(&self) -> f64 {
        let n = self.values.len();
        if n % 2 == 1 {
            self.values[n / 2]
        } else {
            0.5 * (self.values[n / 2 - 1] + self.values[n / 2])
        }
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.values.len();
        let pos = q * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        self.values[lo] * (1.0 - frac) + self.values[hi] * frac
    }
}

/// Outcome of a distributional test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub level: f64,
    pub pass: bool,
}

impl TestReport {
    fn new(test: &str, statistic: f64, p_value: f64, n1: usize, n2: usize, level: f64) -> Self {
        Self {
            test: test.to_string(),
            statistic,
            p_value,
            n1,
            n2,
            level,
            pass: p_value > level,
        }
    }
}

const MIN_TWO_SAMPLE: usize = 10;
const KS_SERIES_TERMS: usize = 100;
const KS_SERIES_TOL: f64 = 1e-10;

/// Survival function of the Kolmogorov distribution,
/// Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2).
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=KS_SERIES_TERMS {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < KS_SERIES_TOL {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Exact sup-distance between the two empirical CDFs.
pub fn ks_statistic(a: &EmpiricalSample, b: &EmpiricalSample) -> f64 {
    let (xs, ys) = (a.values(), b.values());
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Two-sample Kolmogorov-Smirnov test at the given level, with the
/// asymptotic p-value at effective size sqrt(n1*n2/(n1+n2)).
pub fn ks_two_sample(
    a: &EmpiricalSample,
    b: &EmpiricalSample,
    level: f64,
) -> Result<TestReport, StatsError> {
    for s in [a, b] {
        if s.len() < MIN_TWO_SAMPLE {
            return Err(StatsError::TooSmall {
                n: s.len(),
                min: MIN_TWO_SAMPLE,
            });
        }
    }
    let d = ks_statistic(a, b);
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let p = kolmogorov_survival(ne.sqrt() * d);
    Ok(TestReport::new("ks_two_sample", d, p, a.len(), b.len(), level))
}

fn erfc(x: f64) -> f64 {
    // Abramowitz-Stegun 7.1.26, |err| < 1.5e-7 (well below sampling noise
    // at the sizes these tests run at)
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    poly * (-x * x).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Gaussianity check plus moment diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianFit {
    pub report: TestReport,
    /// z-score of the sample skewness under the normal null.
    pub skewness_z: f64,
    /// z-score of the sample excess kurtosis under the normal null.
    pub excess_kurtosis_z: f64,
    /// The null is composite: mean and variance are fitted from the sample,
    /// which makes the KS p-value conservative.
    pub composite_null: bool,
}

const MIN_GAUSSIAN: usize = 100;

/// One-sample KS against the normal law with the sample's own mean and
/// variance, with skewness / excess-kurtosis z-scores as companions.
pub fn gaussian_fit_test(a: &EmpiricalSample, level: f64) -> Result<GaussianFit, StatsError> {
    let n = a.len();
    if n < MIN_GAUSSIAN {
        return Err(StatsError::TooSmall {
            n,
            min: MIN_GAUSSIAN,
        });
    }
    let m = mean(a.values());
    let var = variance(a.values());
    if var <= 0.0 {
        return Err(StatsError::Degenerate);
    }
    let sd = var.sqrt();
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in a.values().iter().enumerate() {
        let f = normal_cdf((x - m) / sd);
        d = d.max((f - i as f64 / nf).abs());
        d = d.max(((i + 1) as f64 / nf - f).abs());
    }
    let p = kolmogorov_survival(nf.sqrt() * d);
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &x in a.values() {
        let z = (x - m) / sd;
        m3 += z * z * z;
        m4 += z * z * z * z;
    }
    let skew = m3 / nf;
    let exkurt = m4 / nf - 3.0;
    Ok(GaussianFit {
        report: TestReport::new("gaussian_fit", d, p, n, 0, level),
        skewness_z: skew * (nf / 6.0).sqrt(),
        excess_kurtosis_z: exkurt * (nf / 24.0).sqrt(),
        composite_null: true,
    })
}

const MIN_HILL_K: usize = 10;

/// Hill estimator of the tail index over the top k+1 order statistics:
/// alpha_hat = k / sum_{i=1..k} ln(x_(n-i+1) / x_(n-k)).
pub fn hill_index(a: &EmpiricalSample, k: usize) -> Result<f64, StatsError> {
    let n = a.len();
    if k < MIN_HILL_K || k >= n {
        return Err(StatsError::BadK { k, n });
    }
    let xs = a.values();
    if xs[0] <= 0.0 {
        return Err(StatsError::NonPositive);
    }
    let threshold = xs[n - 1 - k].ln();
    let sum: f64 = (0..k).map(|i| xs[n - 1 - i].ln() - threshold).sum();
    Ok(k as f64 / sum)
}

/// Default top-order count ceil(n^0.6), a standard bias-variance compromise.
pub fn default_hill_k(n: usize) -> usize {
    ((n as f64).powf(0.6).ceil() as usize).clamp(MIN_HILL_K, n.saturating_sub(1))
}
