//! Two-sided loop-erased random walk.
//!
//! In d >= 5 the two-sided path is sampled by rejection: two independent
//! walks are accepted when the second never steps on the loop erasure of
//! the first (away from the origin). In d = 4 the forward side is a plain
//! LERW carrying an importance weight from a finite-n escape estimate.
//! The module also holds the rescaled escape-probability estimators and
//! the shift-invariance diagnostics.

mod diagnostics;
mod escape;
mod exact;

pub use diagnostics::{
    birkhoff_variance, compare_cylinder_laws, cylinder_category, stationarity_diagnostic, two_step_counts, BirkhoffPoint,
    BirkhoffReport, ShiftTest, StationarityReport,
};
pub use escape::{
    d4_weighted_two_sided, log_scale, weighted_summary, x_hat_estimators, x_n_estimator, x_n_estimator_with, WeightedSample,
    WeightedSummary, XEstimate, XHat, XVariant, DEFAULT_N_WEIGHT,
};
pub use exact::{acceptance_exact, acceptance_exact_bruteforce, acceptance_mc, acceptance_trial, accepts_pure, canonicalize};

use rand::RngCore;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::{LatticePoint, SiteSet};
use crate::parallel::map_items;
use crate::rng::{DirectionSource, RngStream};
use crate::walk::{fast_step, LoopErasedPath, LoopEraser, DEFAULT_SAFETY_FACTOR};

/// `backward` holds `eta(0), eta(-1), ..., eta(-L)`; `forward` holds
/// `eta(0), ..., eta(L)`.
#[derive(Clone, Debug, Serialize)]
pub struct TwoSidedPath<const D: usize> {
    pub backward: LoopErasedPath<D>,
    pub forward: LoopErasedPath<D>,
}

impl<const D: usize> TwoSidedPath<D> {
    pub fn side_len(&self) -> usize {
        self.forward.steps().min(self.backward.steps())
    }

    /// `eta(-L), ..., eta(L)` in index order.
    pub fn points(&self) -> Vec<LatticePoint<D>> {
        let mut v: Vec<_> = self.backward.points().iter().rev().copied().collect();
        v.extend_from_slice(&self.forward.points()[1..]);
        v
    }

    pub fn is_self_avoiding(&self) -> bool {
        let pts = self.points();
        let mut seen = SiteSet::with_capacity(pts.len());
        pts.into_iter().all(|p| seen.insert(p))
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SamplerConfig {
    /// Steps kept on each side.
    pub side_len: usize,
    /// Minimum number of steps of each walk before acceptance is decided.
    pub horizon: usize,
    /// Each walk runs until it is beyond this multiple of its side radius.
    pub safety_factor: f64,
    /// Accepted pairs are extended to this multiple of the larger side
    /// radius to detect late violations.
    pub violation_factor: f64,
}

impl SamplerConfig {
    pub fn new(side_len: usize, horizon: usize) -> Result<Self> {
        let c = SamplerConfig { side_len, horizon, safety_factor: DEFAULT_SAFETY_FACTOR, violation_factor: 10.0 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.side_len < 1 {
            return Err(invalid("side_len must be >= 1"));
        }
        if self.horizon < self.side_len {
            return Err(invalid(format!("horizon {} is shorter than side_len {}", self.horizon, self.side_len)));
        }
        if !(self.safety_factor >= 1.0) || !(self.violation_factor >= self.safety_factor) {
            return Err(invalid("need 1 <= safety_factor <= violation_factor"));
        }
        Ok(())
    }
}

struct Side<const D: usize> {
    le: LoopEraser<D>,
    pos: LatticePoint<D>,
}

/// Runs a walk from the origin until it has taken `horizon` steps, its
/// erasure has `side_len + 1` points, and it stands beyond
/// `safety_factor` times the radius of that prefix. Gives up as soon as
/// the walk steps on a forbidden site.
fn run_side<R, F, const D: usize>(cfg: &SamplerConfig, src: &mut DirectionSource<'_, R>, forbidden: F) -> Option<Side<D>>
where
    R: RngCore + ?Sized,
    F: Fn(&LatticePoint<D>) -> bool,
{
    let l = cfg.side_len;
    let s2 = cfg.safety_factor * cfg.safety_factor;
    let mut le = LoopEraser::new(LatticePoint::<D>::ORIGIN);
    let mut pos = LatticePoint::<D>::ORIGIN;
    let mut t = 0usize;
    let mut r2: Option<i64> = None;
    loop {
        fast_step(&mut pos, src);
        t += 1;
        if forbidden(&pos) {
            return None;
        }
        le.push(pos);
        if le.len() < l + 1 {
            r2 = None;
            continue;
        }
        if t < cfg.horizon {
            continue;
        }
        let r = *r2.get_or_insert_with(|| le.points()[..=l].iter().map(|p| p.norm_sq()).max().unwrap_or(0));
        if pos.norm_sq() as f64 > s2 * r as f64 {
            return Some(Side { le, pos });
        }
    }
}

/// One rejection trial.
#[derive(Clone, Debug)]
pub struct Attempt<const D: usize> {
    pub path: Option<TwoSidedPath<D>>,
    /// For accepted pairs: whether the extended second walk later hit the
    /// first erasure.
    pub late_violation: bool,
}

fn check_highdim<const D: usize>() -> Result<()> {
    if D < 5 {
        Err(Error::UnsupportedDimension(D))
    } else {
        Ok(())
    }
}

/// Draws `S_1`, `S_2` and accepts when `S_2[1, .]` avoids `LE(S_1)[1, .]`.
pub fn two_sided_attempt<R: RngCore + ?Sized, const D: usize>(cfg: &SamplerConfig, rng: &mut R) -> Result<Attempt<D>> {
    check_highdim::<D>()?;
    cfg.validate()?;
    let mut src = DirectionSource::new(rng);
    let s1 = run_side::<_, _, D>(cfg, &mut src, |_| false).expect("unconstrained side always completes");
    let on_first = |p: &LatticePoint<D>| s1.le.position(p).is_some_and(|i| i >= 1);
    let Some(s2) = run_side(cfg, &mut src, on_first) else {
        return Ok(Attempt { path: None, late_violation: false });
    };
    let r1 = s1.le.points().iter().map(|p| p.norm_sq()).max().unwrap_or(0);
    let r2 = s2.le.points()[..=cfg.side_len].iter().map(|p| p.norm_sq()).max().unwrap_or(0);
    let lim2 = cfg.violation_factor.powi(2) * r1.max(r2) as f64;
    let mut pos = s2.pos;
    let mut late = false;
    while (pos.norm_sq() as f64) <= lim2 {
        fast_step(&mut pos, &mut src);
        if pos.norm_sq() <= r1 && on_first(&pos) {
            late = true;
            break;
        }
    }
    Ok(Attempt {
        path: Some(TwoSidedPath { backward: s2.le.prefix_path(cfg.side_len), forward: s1.le.prefix_path(cfg.side_len) }),
        late_violation: late,
    })
}

/// Repeats [`two_sided_attempt`] until acceptance; returns the path and the
/// number of attempts used.
pub fn two_sided_sample_highdim<R: RngCore + ?Sized, const D: usize>(cfg: &SamplerConfig, rng: &mut R) -> Result<(TwoSidedPath<D>, u64, bool)> {
    let mut attempts = 0u64;
    loop {
        attempts += 1;
        let a = two_sided_attempt(cfg, rng)?;
        if let Some(p) = a.path {
            return Ok((p, attempts, a.late_violation));
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BatchReport {
    pub attempts: u64,
    pub accepted: u64,
    pub acceptance: f64,
    pub acceptance_stderr: f64,
    pub late_violations: u64,
    /// Fraction of accepted pairs whose extension violated the condition;
    /// bounds the truncation error of the acceptance decision.
    pub violation_rate: f64,
    pub violation_stderr: f64,
}

impl BatchReport {
    fn from_counts(attempts: u64, accepted: u64, late: u64, geometric: bool) -> Self {
        let p = accepted as f64 / attempts.max(1) as f64;
        // Sampling until a fixed number of acceptances gives a negative
        // binomial count; its delta-method error is p sqrt((1-p)/k).
        let se = if geometric {
            p * ((1.0 - p) / accepted.max(1) as f64).sqrt()
        } else {
            (p * (1.0 - p) / attempts.max(1) as f64).sqrt()
        };
        let v = late as f64 / accepted.max(1) as f64;
        BatchReport {
            attempts,
            accepted,
            acceptance: p,
            acceptance_stderr: se,
            late_violations: late,
            violation_rate: v,
            violation_stderr: (v * (1.0 - v) / accepted.max(1) as f64).sqrt(),
        }
    }
}

/// `count` accepted samples, one derived stream per sample.
pub fn two_sided_batch<const D: usize>(cfg: &SamplerConfig, count: usize, stream: RngStream) -> Result<(Vec<TwoSidedPath<D>>, BatchReport)> {
    check_highdim::<D>()?;
    cfg.validate()?;
    let out = map_items(count, stream, |_, st| {
        let mut rng = st.rng();
        two_sided_sample_highdim::<_, D>(cfg, &mut rng)
    });
    let mut paths = Vec::with_capacity(count);
    let (mut attempts, mut late) = (0u64, 0u64);
    for r in out {
        let (p, a, l) = r?;
        attempts += a;
        late += l as u64;
        paths.push(p);
    }
    Ok((paths, BatchReport::from_counts(attempts, count as u64, late, true)))
}

/// Acceptance rate over a fixed number of attempts.
pub fn acceptance_rate<const D: usize>(cfg: &SamplerConfig, attempts: usize, stream: RngStream) -> Result<BatchReport> {
    check_highdim::<D>()?;
    cfg.validate()?;
    let out = map_items(attempts, stream, |_, st| {
        let mut rng = st.rng();
        two_sided_attempt::<_, D>(cfg, &mut rng)
    });
    let (mut acc, mut late) = (0u64, 0u64);
    for a in out {
        let a = a?;
        if a.path.is_some() {
            acc += 1;
            late += a.late_violation as u64;
        }
    }
    Ok(BatchReport::from_counts(attempts as u64, acc, late, false))
}
