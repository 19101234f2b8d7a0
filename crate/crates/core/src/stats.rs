//! Small statistics toolkit: running moments, least squares, bootstrap,
//! two-sample Kolmogorov–Smirnov and chi-square tests, effective sample size.

use rand::RngCore;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::rng::uniform_below;

/// Welford accumulator.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * self.n as f64 * o.n as f64 / n as f64;
        self.n = n;
    }

    /// Unbiased sample variance (0 for fewer than two observations).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m: Moments = xs.iter().copied().collect();
    (m.mean, m.stderr())
}

/// `sqrt(a^2 + b^2)`, the standard error of a difference of independent estimates.
pub fn joint_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Ordinary least-squares line.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter("x and y lengths differ".into()));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData("regression needs two points".into()));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("regression abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if n > 2 { (sse / (n - 2) as f64 / sxx).sqrt() } else { 0.0 };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit { slope, intercept, slope_se, r_squared })
}

/// Percentile of a sorted sample by linear interpolation.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap over `n_units` resampling units. `stat` receives
/// the resampled unit indices and returns the statistic (or `None` to skip
/// degenerate resamples). Returns `(lo, hi)` at confidence `level`.
pub fn bootstrap_ci<R, F>(n_units: usize, resamples: usize, level: f64, rng: &mut R, mut stat: F) -> Result<(f64, f64)>
where
    R: RngCore + ?Sized,
    F: FnMut(&[usize]) -> Option<f64>,
{
    if n_units < 2 {
        return Err(Error::InsufficientData("bootstrap needs two units".into()));
    }
    let mut idx = vec![0usize; n_units];
    let mut vals = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for i in idx.iter_mut() {
            *i = uniform_below(rng, n_units as u32);
        }
        if let Some(v) = stat(&idx) {
            if v.is_finite() {
                vals.push(v);
            }
        }
    }
    if vals.len() < resamples / 2 {
        return Err(Error::InsufficientData("too many degenerate bootstrap resamples".into()));
    }
    vals.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&vals, a), quantile_sorted(&vals, 1.0 - a)))
}

/// A sorted sample of real observations.
#[derive(Clone, Debug, Serialize)]
pub struct DistributionSample {
    values: Vec<f64>,
}

impl DistributionSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientData("distribution sample needs two values".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("NaN in distribution sample".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(DistributionSample { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn moments(&self) -> Moments {
        self.values.iter().copied().collect()
    }

    pub fn quantile(&self, q: f64) -> f64 {
        quantile_sorted(&self.values, q)
    }
}

/// Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.3 {
        // Small-x form from the theta-function identity.
        let t = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let s: f64 = (1..=50).step_by(2).map(|k| (-(k * k) as f64 * t).exp()).sum();
        return 1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: f64,
}

/// Two-sample Kolmogorov–Smirnov distance with the asymptotic p-value.
pub fn ks_two_sample(a: &DistributionSample, b: &DistributionSample) -> TestResult {
    let (x, y) = (a.values(), b.values());
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let p = kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
    TestResult { statistic: d, p_value: p, df: 0.0 }
}

/// Pearson chi-square test of homogeneity for two count vectors over the
/// same categories. Categories empty in both samples are dropped.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter("category counts differ in length".into()));
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(Error::InsufficientData("empty sample in chi-square test".into()));
    }
    let n = (na + nb) as f64;
    let mut stat = 0.0;
    let mut cats = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let tot = (x + y) as f64;
        if tot == 0.0 {
            continue;
        }
        cats += 1;
        let ea = tot * na as f64 / n;
        let eb = tot * nb as f64 / n;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    if cats < 2 {
        return Ok(TestResult { statistic: 0.0, p_value: 1.0, df: 0.0 });
    }
    let df = (cats - 1) as f64;
    Ok(TestResult { statistic: stat, p_value: chi2_sf(stat, df), df })
}

/// Pearson goodness-of-fit test of counts against probabilities.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<TestResult> {
    if counts.len() != probs.len() || counts.len() < 2 {
        return Err(Error::InvalidParameter("need matching count and probability vectors".into()));
    }
    let n: u64 = counts.iter().sum();
    let stat = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum::<f64>();
    let df = (counts.len() - 1) as f64;
    Ok(TestResult { statistic: stat, p_value: chi2_sf(stat, df), df })
}

pub fn chi2_sf(x: f64, df: f64) -> f64 {
    match ChiSquared::new(df) {
        Ok(d) => d.sf(x),
        Err(_) => f64::NAN,
    }
}

/// Kish effective sample size `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Normalizes nonnegative weights to sum to one.
pub fn self_normalize(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter("weights must be finite and >= 0".into()));
    }
    let s: f64 = weights.iter().sum();
    if s <= 0.0 {
        return Err(Error::InsufficientData("all weights are zero".into()));
    }
    Ok(weights.iter().map(|w| w / s).collect())
}

/// Self-normalized weighted mean and a delta-method standard error.
pub fn weighted_mean_stderr(values: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    if values.len() != weights.len() {
        return Err(Error::InvalidParameter("values and weights differ in length".into()));
    }
    let w = self_normalize(weights)?;
    let m: f64 = w.iter().zip(values).map(|(w, v)| w * v).sum();
    let var: f64 = w.iter().zip(values).map(|(w, v)| w * w * (v - m).powi(2)).sum();
    Ok((m, var.sqrt()))
}
