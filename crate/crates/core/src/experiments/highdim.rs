//! Capacity laws of large numbers in d >= 5 and d = 4.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{num, rung_stats, within, Check, ExperimentConfig, Plot, RungRecord, Run, Table};
use crate::capacity::{capacity_mc_sampled, return_bound};
use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, PointSet};
use crate::parallel::{map_blocks, BLOCK};
use crate::rng::{tag, DirectionSource, RngStream};
use crate::stats::{joint_se, mean_stderr};
use crate::twosided::{d4_weighted_two_sided, log_scale, two_sided_batch, weighted_summary, x_hat_estimators, BatchReport, SamplerConfig, WeightedSummary};
use crate::walk::lerw_sample;

struct Replicate {
    value: f64,
    stderr: f64,
    radius: f64,
    exit_radius: f64,
    stream: RngStream,
}

/// `C(eta[0, n]) / n` for one LERW sample, by escape walks from random
/// members stopped at `r_factor * radius + pad`.
fn capacity_density<const D: usize>(n: usize, walks: u64, r_factor: f64, pad: f64, stream: RngStream) -> Result<Replicate> {
    let eta = lerw_sample::<_, D>(n, &mut stream.child(0).rng())?;
    let set = PointSet::from_ordered(eta.points())?;
    let radius = set.radius();
    let r = r_factor * radius + pad;
    let rec = capacity_mc_sampled(&set, r, walks, stream.child(1))?;
    Ok(Replicate { value: rec.value / n as f64, stderr: rec.stderr / n as f64, radius, exit_radius: r, stream })
}

fn capacity_ladder<const D: usize>(cfg: &ExperimentConfig, r_factor: f64, pad: f64) -> Result<(Vec<RungRecord>, Table)> {
    if cfg.walks == 0 {
        return Err(Error::InvalidParameter("walks must be >= 1".into()));
    }
    let mut table = Table::new(
        "replicates",
        &["n", "replicate", "master_seed", "stream_id", "cap_over_n", "stderr", "walks", "path_radius", "exit_radius"],
    );
    let mut rungs = Vec::with_capacity(cfg.ladder.len());
    for (k, &n) in cfg.ladder.iter().enumerate() {
        let t0 = Instant::now();
        let reps: Vec<Replicate> = (0..cfg.replicates)
            .into_par_iter()
            .map(|j| capacity_density::<D>(n, cfg.walks, r_factor, pad, cfg.stream(k as u64, j as u64)))
            .collect::<Result<_>>()?;
        for (j, r) in reps.iter().enumerate() {
            table.push(vec![
                n.to_string(),
                j.to_string(),
                r.stream.master_seed.to_string(),
                r.stream.stream_id.to_string(),
                num(r.value),
                num(r.stderr),
                cfg.walks.to_string(),
                num(r.radius),
                num(r.exit_radius),
            ]);
        }
        let values: Vec<f64> = reps.iter().map(|r| r.value).collect();
        let (m, se) = rung_stats(&values);
        rungs.push(RungRecord {
            n,
            estimate: m,
            stderr: se,
            replicates: cfg.replicates,
            trials: cfg.walks * cfg.replicates as u64,
            master_seed: cfg.seed,
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
    }
    Ok((rungs, table))
}

/// Two-sided avoidance bracket.
#[derive(Clone, Debug, Serialize)]
pub struct HighDimRhs {
    pub side_len: usize,
    pub samples: usize,
    pub walks_per_sample: u64,
    pub batch: BatchReport,
    /// Avoidance of `eta^[-L, L]`; an upper bound for the infinite path.
    pub avoid: f64,
    pub avoid_stderr: f64,
    /// Avoidance of `eta^[-L/4, L/4]` with the same walks.
    pub avoid_quarter: f64,
    /// `avoid_quarter - avoid`, the mass lost between the two windows.
    pub tail: f64,
    pub tail_stderr: f64,
    /// Largest per-sample bound on returns after the exit radius.
    pub return_bound: f64,
    pub lower: f64,
    pub lower_stderr: f64,
    pub upper: f64,
    pub upper_stderr: f64,
    /// `[lower - z se, upper + z se]`.
    pub interval: (f64, f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct HighDimSummary {
    pub dimension: usize,
    pub rungs: Vec<RungRecord>,
    pub final_interval: (f64, f64),
    pub rhs: Option<HighDimRhs>,
    /// Final rung estimate minus the bracket midpoint.
    pub gap: Option<f64>,
}

/// Walks from the origin against a two-sided path stored in index order
/// with the origin at `center`; counts walks avoiding the full path and
/// walks avoiding the indices within `quarter` of the center.
fn avoid_two_windows<const D: usize>(set: &PointSet<D>, center: usize, quarter: usize, r: f64, walks: u64, stream: RngStream) -> (u64, u64) {
    let inner2 = set.iter().map(|p| p.norm_sq()).max().unwrap_or(0);
    let exit2 = (r * r).floor() as i64;
    let parts = map_blocks(walks, BLOCK / 8, stream, |_, _, len, st| {
        let mut rng = st.rng();
        let mut src = DirectionSource::new(&mut rng);
        let (mut full, mut near) = (0u64, 0u64);
        for _ in 0..len {
            let mut x = LatticePoint::<D>::ORIGIN;
            let mut n2 = 0i64;
            let mut touched = false;
            let escaped = loop {
                let dir = src.next(2 * D as u64);
                let s = if dir & 1 == 0 { 1 } else { -1 };
                n2 += 2 * s * x.0[dir >> 1] + 1;
                x.0[dir >> 1] += s;
                if n2 <= inner2 {
                    if let Some(i) = set.position(&x) {
                        if i.abs_diff(center) <= quarter {
                            break false;
                        }
                        touched = true;
                    }
                } else if n2 > exit2 {
                    break true;
                }
            };
            full += (escaped && !touched) as u64;
            near += escaped as u64;
        }
        (full, near)
    });
    parts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

fn highdim_rhs<const D: usize>(cfg: &ExperimentConfig, z: f64) -> Result<HighDimRhs> {
    let l = cfg.usize_param("rhs_side")?;
    let samples = cfg.usize_param("rhs_samples")?;
    let walks = cfg.usize_param("rhs_walks")? as u64;
    let rf = cfg.f64_param("rhs_r_factor")?;
    if l < 4 || samples < 2 || walks < 1 || !(rf >= 2.0) {
        return Err(Error::InvalidParameter("need rhs_side >= 4, rhs_samples >= 2, rhs_walks >= 1, rhs_r_factor >= 2".into()));
    }
    let sc = SamplerConfig::new(l, l)?;
    let (paths, batch) = two_sided_batch::<D>(&sc, samples, cfg.stream(tag("rhs"), 0))?;
    let per: Vec<(f64, f64, f64)> = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| -> Result<(f64, f64, f64)> {
            let pts = p.points();
            let set = PointSet::from_ordered(&pts)?;
            let radius = set.iter().map(|q| q.euclidean_norm()).fold(0.0, f64::max);
            let r = rf * radius + 2.0;
            let (full, near) = avoid_two_windows(&set, l, l / 4, r, walks, cfg.stream(tag("rhs_walks"), i as u64));
            let w = walks as f64;
            Ok((full as f64 / w, near as f64 / w, return_bound(D, pts.len() as f64, r)))
        })
        .collect::<Result<_>>()?;
    let full: Vec<f64> = per.iter().map(|x| x.0).collect();
    let tail: Vec<f64> = per.iter().map(|x| x.1 - x.0).collect();
    let lower: Vec<f64> = per.iter().map(|x| x.0 * (1.0 - x.2) - 2.0 * (x.1 - x.0)).collect();
    let rb = per.iter().map(|x| x.2).fold(0.0, f64::max);
    let (avoid, avoid_se) = mean_stderr(&full);
    let (t, t_se) = mean_stderr(&tail);
    let (lo, lo_se) = mean_stderr(&lower);
    Ok(HighDimRhs {
        side_len: l,
        samples,
        walks_per_sample: walks,
        batch,
        avoid,
        avoid_stderr: avoid_se,
        avoid_quarter: avoid + t,
        tail: t,
        tail_stderr: t_se,
        return_bound: rb,
        lower: lo,
        lower_stderr: lo_se,
        upper: avoid,
        upper_stderr: avoid_se,
        interval: (lo - z * lo_se, avoid + z * avoid_se),
    })
}

/// Escape-sum capacity density against the two-sided avoidance
/// probability (d >= 5).
///
/// The bracket for the avoidance of the infinite two-sided path takes the
/// window `[-L, L]` as upper bound and subtracts twice the mass lost between
/// the windows `[-L/4, L/4]` and `[-L, L]` for the far tail, plus a bound on
/// returns after the exit radius. `rhs_samples = 0` skips it.
pub fn slln_highdim(cfg: &ExperimentConfig) -> Result<Run<HighDimSummary>> {
    cfg.validate()?;
    crate::with_dim!(cfg.dimension, D => slln_highdim_d::<D>(cfg), _ => Err(Error::UnsupportedDimension(cfg.dimension)))
}

fn slln_highdim_d<const D: usize>(cfg: &ExperimentConfig) -> Result<Run<HighDimSummary>> {
    if D < 5 {
        return Err(Error::UnsupportedDimension(D));
    }
    let z = cfg.f64_param("z_level")?;
    let (rungs, table) = capacity_ladder::<D>(cfg, cfg.f64_param("r_factor")?, 2.0)?;
    let last = rungs.last().expect("nonempty ladder");
    let final_interval = (last.estimate - z * last.stderr, last.estimate + z * last.stderr);
    let rhs = if cfg.usize_param("rhs_samples")? > 0 { Some(highdim_rhs::<D>(cfg, z)?) } else { None };

    let mut checks = Vec::new();
    let bounded = rungs.iter().all(|r| r.estimate <= (r.n + 1) as f64 / r.n as f64);
    checks.push(Check::new("bounded_by_one", bounded, "C/n <= (n+1)/n at every rung"));
    let trend = rungs
        .windows(2)
        .all(|w| w[1].estimate <= w[0].estimate + 3.0 * joint_se(w[0].stderr, w[1].stderr));
    checks.push(Check::new("nonincreasing", trend, "each rung at most 3 joint stderr above the previous"));
    if rungs.len() >= 2 {
        let a = &rungs[rungs.len() - 2];
        let ok = within((a.estimate, a.stderr), (last.estimate, last.stderr), 3.0);
        checks.push(Check::new(
            "top_rungs_agree",
            ok,
            format!("{} vs {} (joint stderr {:.3e})", a.estimate, last.estimate, joint_se(a.stderr, last.stderr)),
        ));
    }
    let mut gap = None;
    if let Some(h) = &rhs {
        let ok = final_interval.0 <= h.interval.1 && h.interval.0 <= final_interval.1;
        checks.push(Check::new(
            "final_overlaps_bracket",
            ok,
            format!("final [{:.5}, {:.5}] vs bracket [{:.5}, {:.5}]", final_interval.0, final_interval.1, h.interval.0, h.interval.1),
        ));
        gap = Some(last.estimate - 0.5 * (h.lower + h.upper));
    }
    let plot = Plot::new("cap_over_n", "n", "cap_over_n", rungs.iter().map(|r| (r.n as f64, r.estimate)).collect());
    Ok(Run {
        summary: HighDimSummary { dimension: D, rungs, final_interval, rhs, gap },
        checks,
        tables: vec![table],
        plots: vec![plot],
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct D4Rhs {
    pub side_len: usize,
    pub samples: usize,
    pub n_weight: usize,
    pub weighted: WeightedSummary,
    pub unweighted_mean: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct D4Summary {
    pub rungs: Vec<RungRecord>,
    /// `(log n)^{2/3} C / n` per rung.
    pub scaled: Vec<f64>,
    pub scaled_stderr: Vec<f64>,
    pub spread_unscaled: f64,
    pub spread_scaled: f64,
    pub rhs: Option<D4Rhs>,
    pub gap: Option<f64>,
    pub caveat: &'static str,
}

/// `(max - min) / mean`.
fn relative_spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / (v.iter().sum::<f64>() / v.len() as f64)
}

/// Capacity density in d = 4 with and without the `(log n)^{2/3}` scaling,
/// and the weighted average of `X^_n X^+_n` over forward sides.
pub fn slln_d4(cfg: &ExperimentConfig) -> Result<Run<D4Summary>> {
    cfg.validate()?;
    if cfg.ladder[0] < 2 {
        return Err(Error::InvalidParameter("ladder must start at n >= 2 for the log scaling".into()));
    }
    let (rungs, table) = capacity_ladder::<4>(cfg, cfg.f64_param("r_factor")?, 4.0)?;
    let scale = |n: usize| log_scale(n).map(|s| s * s);
    let scaled: Vec<f64> = rungs.iter().map(|r| Ok(scale(r.n)? * r.estimate)).collect::<Result<_>>()?;
    let scaled_stderr: Vec<f64> = rungs.iter().map(|r| Ok(scale(r.n)? * r.stderr)).collect::<Result<_>>()?;
    let k = rungs.len().saturating_sub(3);
    let unscaled: Vec<f64> = rungs.iter().map(|r| r.estimate).collect();
    let spread_unscaled = relative_spread(&unscaled[k..]);
    let spread_scaled = relative_spread(&scaled[k..]);

    let side = cfg.usize_param("rhs_side")?;
    let samples = cfg.usize_param("rhs_samples")?;
    let rhs = if side > 0 && samples > 0 {
        let n_weight = cfg.usize_param("n_weight")?;
        let ww = cfg.usize_param("weight_walks")? as u64;
        let xw = cfg.usize_param("rhs_walks")? as u64;
        let pairs: Vec<(f64, f64)> = (0..samples)
            .into_par_iter()
            .map(|i| -> Result<(f64, f64)> {
                let s = cfg.stream(tag("rhs"), i as u64);
                let ws = d4_weighted_two_sided(side, n_weight, side, ww, s.child(0))?;
                let xh = x_hat_estimators(&ws.path, side, xw, None, s.child(1))?;
                Ok((xh.product, ws.weight))
            })
            .collect::<Result<_>>()?;
        let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        Some(D4Rhs {
            side_len: side,
            samples,
            n_weight,
            weighted: weighted_summary(&values, &weights)?,
            unweighted_mean: values.iter().sum::<f64>() / values.len() as f64,
        })
    } else {
        None
    };
    let gap = rhs.as_ref().map(|h| scaled.last().copied().unwrap_or(f64::NAN) - h.weighted.mean);

    let step = cfg.f64_param("step_sigmas")?;
    let mut checks = Vec::new();
    let positive = rungs.iter().all(|r| r.estimate.is_finite() && r.estimate > 0.0) && scaled.iter().all(|v| v.is_finite() && *v > 0.0);
    checks.push(Check::new("positive_finite", positive, "all rung values positive and finite"));
    let decreasing = rungs
        .windows(2)
        .all(|w| w[0].estimate - w[1].estimate > step * joint_se(w[0].stderr, w[1].stderr));
    checks.push(Check::new("strictly_decreasing", decreasing, format!("each step down by more than {step} joint stderr")));
    if rungs.len() >= 3 {
        checks.push(Check::new(
            "scaling_reduces_spread",
            spread_scaled < spread_unscaled,
            format!("relative spread over top three: scaled {spread_scaled:.4}, unscaled {spread_unscaled:.4}"),
        ));
    }
    let plots = vec![
        Plot::new("cap_over_n", "n", "cap_over_n", rungs.iter().map(|r| (r.n as f64, r.estimate)).collect()),
        Plot::new("scaled", "n", "log_scaled_cap_over_n", rungs.iter().zip(&scaled).map(|(r, s)| (r.n as f64, *s)).collect()),
    ];
    Ok(Run {
        summary: D4Summary {
            rungs,
            scaled,
            scaled_stderr,
            spread_unscaled,
            spread_scaled,
            rhs,
            gap,
            caveat: "convergence is logarithmic; the rung sequence is a trend witness, not an estimate of the limit",
        },
        checks,
        tables: vec![table],
        plots,
    })
}
