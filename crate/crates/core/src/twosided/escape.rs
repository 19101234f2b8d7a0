//! Rescaled escape probabilities `(log n)^{1/3} P(W avoids eta | eta)` in
//! d = 4 and the importance-weighted forward side.

use serde::Serialize;

use crate::capacity::{escape_walk, return_bound};
use crate::error::{invalid, Error, Result};
use crate::lattice::{LatticePoint, PointSet};
use crate::parallel::{map_blocks, BLOCK};
use crate::rng::{DirectionSource, RngStream};
use crate::stats::{effective_sample_size, weighted_mean_stderr};
use crate::walk::{lerw_sample, LoopErasedPath};

/// Default order of the finite-n proxy for `X_inf`.
pub const DEFAULT_N_WEIGHT: usize = 1 << 12;

/// Which index is truncated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum XVariant {
    /// `X_n`: an `n`-step walk against the whole sampled path.
    Walk,
    /// `X~_n`: an unbounded walk (truncated at an exit radius) against `eta[0, n]`.
    Path,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct XEstimate {
    pub n: usize,
    pub variant: XVariant,
    pub value: f64,
    pub unscaled: f64,
    pub stderr: f64,
    pub trials: u64,
    /// Scaled truncation bracket; equal to `value` when nothing is truncated.
    pub lower: f64,
    pub upper: f64,
}

/// `(log n)^{1/3}`, defined for `n >= 2`.
pub fn log_scale(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid("n must be >= 2 for the (log n)^(1/3) scaling"));
    }
    Ok((n as f64).ln().cbrt())
}

fn check_d4<const D: usize>() -> Result<()> {
    if D != 4 {
        Err(Error::UnsupportedDimension(D))
    } else {
        Ok(())
    }
}

/// [`x_n_estimator_with`] with the default exit radius.
pub fn x_n_estimator<const D: usize>(eta: &LoopErasedPath<D>, n: usize, variant: XVariant, w_trials: u64, stream: RngStream) -> Result<XEstimate> {
    x_n_estimator_with(eta, n, variant, w_trials, None, stream)
}

/// Rescaled escape probability for one fixed `eta`, from `w_trials`
/// independent walks.
///
/// For [`XVariant::Walk`] the walk takes `n` steps and `eta` should be long
/// enough to cover where such a walk goes. For [`XVariant::Path`] the walk
/// runs until it leaves radius `exit_radius` (default four times the radius
/// of `eta[0, n]` plus 4); the bracket allows for later returns.
pub fn x_n_estimator_with<const D: usize>(
    eta: &LoopErasedPath<D>,
    n: usize,
    variant: XVariant,
    w_trials: u64,
    exit_radius: Option<f64>,
    stream: RngStream,
) -> Result<XEstimate> {
    check_d4::<D>()?;
    let scale = log_scale(n)?;
    if w_trials == 0 {
        return Err(invalid("w_trials must be >= 1"));
    }
    if eta.steps() < n {
        return Err(Error::OutOfRange { index: n, limit: eta.steps() });
    }
    let t = w_trials as f64;
    match variant {
        XVariant::Walk => {
            let set = PointSet::from_points(eta.points().iter().copied());
            let inner2 = set.iter().map(|p| p.norm_sq()).max().unwrap_or(0);
            let ok: u64 = map_blocks(w_trials, BLOCK / 4, stream, |_, _, len, st| {
                let mut rng = st.rng();
                let mut src = DirectionSource::new(&mut rng);
                let mut c = 0u64;
                for _ in 0..len {
                    let mut x = LatticePoint::<D>::ORIGIN;
                    let mut n2 = 0i64;
                    let mut free = true;
                    for _ in 0..n {
                        let dir = src.next(2 * D as u64);
                        let s = if dir & 1 == 0 { 1 } else { -1 };
                        n2 += 2 * s * x.0[dir >> 1] + 1;
                        x.0[dir >> 1] += s;
                        if n2 <= inner2 && set.contains(&x) {
                            free = false;
                            break;
                        }
                    }
                    c += free as u64;
                }
                c
            })
            .into_iter()
            .sum();
            let p = ok as f64 / t;
            let v = scale * p;
            Ok(XEstimate { n, variant, value: v, unscaled: p, stderr: scale * (p * (1.0 - p) / t).sqrt(), trials: w_trials, lower: v, upper: v })
        }
        XVariant::Path => {
            let set = PointSet::from_points(eta.points()[..=n].iter().copied());
            let r = exit_radius.unwrap_or(4.0 * set.radius() + 4.0);
            if !(r > 2.0 * set.radius()) {
                return Err(invalid("exit radius must exceed twice the path radius"));
            }
            let inner2 = set.iter().map(|p| p.norm_sq()).max().unwrap_or(0);
            let exit2 = (r * r).floor() as i64;
            let blocked = |x: &LatticePoint<D>| set.contains(x);
            let ok: u64 = map_blocks(w_trials, BLOCK / 4, stream, |_, _, len, st| {
                let mut rng = st.rng();
                let mut src = DirectionSource::new(&mut rng);
                (0..len)
                    .filter(|_| escape_walk(LatticePoint::ORIGIN, inner2, exit2, &blocked, &mut src))
                    .count() as u64
            })
            .into_iter()
            .sum();
            let p = ok as f64 / t;
            let lower = p * (1.0 - return_bound(D, (n + 1) as f64, r));
            Ok(XEstimate {
                n,
                variant,
                value: scale * p,
                unscaled: p,
                stderr: scale * (p * (1.0 - p) / t).sqrt(),
                trials: w_trials,
                lower: scale * lower,
                upper: scale * p,
            })
        }
    }
}

/// `X^_n` (avoid `eta[0, n]`) and `X^+_n` (avoid `eta[1, n]`) from shared walks.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct XHat {
    pub n: usize,
    pub x_hat: f64,
    pub x_hat_plus: f64,
    /// Unbiased estimate of the product of the two rescaled probabilities
    /// (off-diagonal pairs of walks).
    pub product: f64,
    pub stderr_hat: f64,
    pub stderr_plus: f64,
    pub stderr_product: f64,
    pub trials: u64,
    /// Exit radius of the truncated walks.
    pub exit_radius: f64,
}

/// Both rescaled escape probabilities of the forward side `eta[0, n]`.
pub fn x_hat_estimators<const D: usize>(
    forward: &LoopErasedPath<D>,
    n: usize,
    w_trials: u64,
    exit_radius: Option<f64>,
    stream: RngStream,
) -> Result<XHat> {
    check_d4::<D>()?;
    let scale = log_scale(n)?;
    if w_trials < 2 {
        return Err(invalid("w_trials must be >= 2"));
    }
    if forward.steps() < n {
        return Err(Error::OutOfRange { index: n, limit: forward.steps() });
    }
    let set = PointSet::from_ordered(&forward.points()[..=n])?;
    let r = exit_radius.unwrap_or(4.0 * set.radius() + 4.0);
    if !(r > 2.0 * set.radius()) {
        return Err(invalid("exit radius must exceed twice the path radius"));
    }
    let inner2 = set.iter().map(|p| p.norm_sq()).max().unwrap_or(0);
    let exit2 = (r * r).floor() as i64;
    let parts = map_blocks(w_trials, BLOCK / 4, stream, |_, _, len, st| {
        let mut rng = st.rng();
        let mut src = DirectionSource::new(&mut rng);
        let (mut a, mut b, mut ab) = (0u64, 0u64, 0u64);
        for _ in 0..len {
            let mut x = LatticePoint::<D>::ORIGIN;
            let mut n2 = 0i64;
            let mut origin_hit = false;
            let escaped = loop {
                let dir = src.next(2 * D as u64);
                let s = if dir & 1 == 0 { 1 } else { -1 };
                n2 += 2 * s * x.0[dir >> 1] + 1;
                x.0[dir >> 1] += s;
                if n2 <= inner2 {
                    match set.position(&x) {
                        Some(0) => origin_hit = true,
                        Some(_) => break false,
                        None => {}
                    }
                } else if n2 > exit2 {
                    break true;
                }
            };
            let ea = escaped && !origin_hit;
            a += ea as u64;
            b += escaped as u64;
            ab += (ea && escaped) as u64;
        }
        (a, b, ab)
    });
    let (a, b, ab) = parts.iter().fold((0, 0, 0), |s, p| (s.0 + p.0, s.1 + p.1, s.2 + p.2));
    let t = w_trials as f64;
    let (pa, pb) = (a as f64 / t, b as f64 / t);
    let prod = (a as f64 * b as f64 - ab as f64) / (t * (t - 1.0));
    let (va, vb) = (pa * (1.0 - pa) / t, pb * (1.0 - pb) / t);
    let s2 = scale * scale;
    Ok(XHat {
        n,
        x_hat: scale * pa,
        x_hat_plus: scale * pb,
        product: s2 * prod,
        stderr_hat: scale * va.sqrt(),
        stderr_plus: scale * vb.sqrt(),
        stderr_product: s2 * (pb * pb * va + pa * pa * vb).sqrt(),
        trials: w_trials,
        exit_radius: r,
    })
}

/// A forward side with its importance weight.
#[derive(Clone, Debug, Serialize)]
pub struct WeightedSample<const D: usize> {
    pub path: LoopErasedPath<D>,
    pub weight: f64,
    /// Order of the `X_n` proxy used as weight.
    pub n_weight: usize,
}

/// Plain LERW of length `max(side_len, horizon)` weighted by the `X_n`
/// estimate at `n_weight` with `w_trials` walks; the returned path is the
/// first `side_len` steps. The weight is a finite-n proxy for `X_inf`.
pub fn d4_weighted_two_sided(side_len: usize, n_weight: usize, horizon: usize, w_trials: u64, stream: RngStream) -> Result<WeightedSample<4>> {
    if side_len < 1 {
        return Err(invalid("side_len must be >= 1"));
    }
    log_scale(n_weight)?;
    let len = side_len.max(horizon).max(n_weight);
    let mut rng = stream.child(0).rng();
    let eta = lerw_sample::<_, 4>(len, &mut rng)?;
    let x = x_n_estimator(&eta, n_weight, XVariant::Walk, w_trials, stream.child(1))?;
    Ok(WeightedSample { path: eta.prefix(side_len)?, weight: x.value, n_weight })
}

/// Self-normalized weighted mean with its effective sample size.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WeightedSummary {
    pub mean: f64,
    pub stderr: f64,
    pub ess: f64,
    pub ess_fraction: f64,
    /// Set when the effective sample size is under 10% of the batch.
    pub flagged: bool,
}

pub fn weighted_summary(values: &[f64], weights: &[f64]) -> Result<WeightedSummary> {
    let (mean, stderr) = weighted_mean_stderr(values, weights)?;
    let ess = effective_sample_size(weights);
    let frac = ess / values.len() as f64;
    Ok(WeightedSummary { mean, stderr, ess, ess_fraction: frac, flagged: frac < 0.1 })
}
