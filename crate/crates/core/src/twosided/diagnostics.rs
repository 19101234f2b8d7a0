//! Shift-invariance and ergodicity diagnostics built on cylinder statistics.

use serde::Serialize;

use super::TwoSidedPath;
use crate::error::{Error, Result};
use crate::lattice::LatticePoint;
use crate::stats::{chi_square_two_sample, linear_fit, LinearFit, Moments, TestResult};
use crate::walk::cylinder_frequency;

/// Two-step cylinder category at index `k`: the pair of step directions
/// `(pts[k] -> pts[k+1], pts[k+1] -> pts[k+2])` encoded as `a * 2d + b`.
pub fn cylinder_category<const D: usize>(pts: &[LatticePoint<D>], k: usize) -> Result<usize> {
    if k + 2 >= pts.len() {
        return Err(Error::OutOfRange { index: k + 2, limit: pts.len() });
    }
    let a = pts[k].direction_to(&pts[k + 1]);
    let b = pts[k + 1].direction_to(&pts[k + 2]);
    match (a, b) {
        (Some(a), Some(b)) => Ok(a * 2 * D + b),
        _ => Err(Error::InvalidParameter("points are not a nearest-neighbor path".into())),
    }
}

/// Category counts at index `k` over a set of paths.
pub fn two_step_counts<const D: usize>(paths: &[&[LatticePoint<D>]], k: usize) -> Result<Vec<u64>> {
    let mut c = vec![0u64; 4 * D * D];
    for p in paths {
        c[cylinder_category(p, k)?] += 1;
    }
    Ok(c)
}

/// Chi-square homogeneity test of the two-step law at index `k` between two
/// groups of paths.
pub fn compare_cylinder_laws<const D: usize>(a: &[&[LatticePoint<D>]], b: &[&[LatticePoint<D>]], k: usize) -> Result<TestResult> {
    chi_square_two_sample(&two_step_counts(a, k)?, &two_step_counts(b, k)?)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShiftTest {
    pub k: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub df: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarityReport {
    pub samples: usize,
    pub shifts: Vec<ShiftTest>,
}

/// Compares the two-step law of the forward side at index 0 with the law
/// at index `k` (that is, of `T^k` of the path). For `k > 0` the samples are
/// split in halves so the two groups are independent; `k = 0` compares the
/// sample with itself.
pub fn stationarity_diagnostic<const D: usize>(samples: &[TwoSidedPath<D>], shifts: &[usize]) -> Result<StationarityReport> {
    if samples.len() < 20 {
        return Err(Error::InsufficientData(format!("{} samples; need at least 20", samples.len())));
    }
    let fwd: Vec<&[LatticePoint<D>]> = samples.iter().map(|s| s.forward.points()).collect();
    let (h0, h1) = fwd.split_at(fwd.len() / 2);
    let mut out = Vec::with_capacity(shifts.len());
    for &k in shifts {
        let r = if k == 0 {
            compare_cylinder_laws(&fwd, &fwd, 0)?
        } else {
            chi_square_two_sample(&two_step_counts(h0, 0)?, &two_step_counts(h1, k)?)?
        };
        out.push(ShiftTest { k, statistic: r.statistic, p_value: r.p_value, df: r.df });
    }
    Ok(StationarityReport { samples: samples.len(), shifts: out })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BirkhoffPoint {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BirkhoffReport {
    pub points: Vec<BirkhoffPoint>,
    /// Least squares of `log variance` on `log n`.
    pub fit: LinearFit,
}

/// Cross-sample variance of the Birkhoff average `H^n(xi)` for each `n`.
pub fn birkhoff_variance<const D: usize>(paths: &[&[LatticePoint<D>]], xi: &[LatticePoint<D>], ns: &[usize]) -> Result<BirkhoffReport> {
    if paths.len() < 2 {
        return Err(Error::InsufficientData("need at least two paths".into()));
    }
    let mut points = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut m = Moments::new();
        for p in paths {
            m.push(cylinder_frequency(p, xi, n)?);
        }
        points.push(BirkhoffPoint { n, mean: m.mean, variance: m.variance() });
    }
    let usable: Vec<_> = points.iter().filter(|p| p.variance > 0.0).collect();
    let x: Vec<f64> = usable.iter().map(|p| (p.n as f64).ln()).collect();
    let y: Vec<f64> = usable.iter().map(|p| p.variance.ln()).collect();
    let fit = linear_fit(&x, &y)?;
    Ok(BirkhoffReport { points, fit })
}
