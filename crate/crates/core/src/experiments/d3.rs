//! Three-dimensional experiments: growth exponent, sausage avoidance and
//! the rescaled capacity law.

use std::f64::consts::PI;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use super::{num, Check, ExperimentConfig, Plot, Run, Table};
use crate::capacity::{avoidance_probability_wos, capacity_wos, green_estimate, GreenMethod, SausageTarget, SetTarget, Target, WosConfig};
use crate::error::{invalid, Error, Result};
use crate::lattice::LatticePoint;
use crate::rng::{tag, RngStream};
use crate::stats::{bootstrap_ci, joint_se, ks_two_sample, linear_fit, DistributionSample, LinearFit, Moments};
use crate::walk::{lerw_sample, random_step};

#[derive(Clone, Debug, Serialize)]
pub struct BetaSummary {
    pub ladder: Vec<usize>,
    pub mean_norm: Vec<f64>,
    pub srw_mean_norm: Vec<f64>,
    pub fit: LinearFit,
    pub beta: f64,
    pub ci: (f64, f64),
    pub srw_slope: f64,
    pub srw_ci: (f64, f64),
    pub replicates: usize,
    pub wall_time_s: f64,
}

/// Slope of `log n` on `log mean` over the ladder.
fn growth_slope(ladder: &[usize], means: &[f64]) -> Result<LinearFit> {
    let x: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let y: Vec<f64> = ladder.iter().map(|&n| (n as f64).ln()).collect();
    linear_fit(&x, &y)
}

fn column_means(rows: &[Vec<f64>], idx: &[usize], k: usize) -> Vec<f64> {
    (0..k).map(|i| idx.iter().map(|&j| rows[j][i]).sum::<f64>() / idx.len() as f64).collect()
}

/// Growth exponent from `E |eta(n)|` over the ladder, with a simple random
/// walk control run on the same ladder. Each replicate is one path of the
/// largest length read at every rung; the bootstrap resamples replicates.
pub fn beta_estimate(cfg: &ExperimentConfig) -> Result<Run<BetaSummary>> {
    cfg.validate()?;
    if cfg.ladder.len() < 4 {
        return Err(invalid("beta_estimate needs a ladder of at least 4 rungs"));
    }
    if cfg.replicates < 2 {
        return Err(invalid("beta_estimate needs at least 2 replicates"));
    }
    let t0 = Instant::now();
    let ladder = &cfg.ladder;
    let n_max = *ladder.last().expect("nonempty");
    let reps: Vec<(Vec<f64>, Vec<f64>, bool)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|j| -> Result<_> {
            let s = cfg.stream(0, j as u64);
            let eta = lerw_sample::<_, 3>(n_max, &mut s.child(0).rng())?;
            let lerw: Vec<f64> = ladder.iter().map(|&n| eta.points()[n].euclidean_norm()).collect();
            let mut rng = s.child(1).rng();
            let mut p = LatticePoint::<3>::ORIGIN;
            let mut srw = Vec::with_capacity(ladder.len());
            let mut t = 0;
            for &n in ladder {
                while t < n {
                    random_step(&mut p, &mut rng);
                    t += 1;
                }
                srw.push(p.euclidean_norm());
            }
            Ok((lerw, srw, eta.points()[1].norm_sq() == 1))
        })
        .collect::<Result<_>>()?;
    let k = ladder.len();
    let lerw_rows: Vec<Vec<f64>> = reps.iter().map(|r| r.0.clone()).collect();
    let srw_rows: Vec<Vec<f64>> = reps.iter().map(|r| r.1.clone()).collect();
    let all: Vec<usize> = (0..cfg.replicates).collect();
    let mean_norm = column_means(&lerw_rows, &all, k);
    let srw_mean_norm = column_means(&srw_rows, &all, k);
    let fit = growth_slope(ladder, &mean_norm)?;
    let srw_fit = growth_slope(ladder, &srw_mean_norm)?;
    let resamples = cfg.usize_param("bootstrap")?;
    let level = cfg.f64_param("level")?;
    let mut rng = cfg.stream(tag("bootstrap"), 0).rng();
    let ci = bootstrap_ci(cfg.replicates, resamples, level, &mut rng, |idx| {
        growth_slope(ladder, &column_means(&lerw_rows, idx, k)).ok().map(|f| f.slope)
    })?;
    let mut rng = cfg.stream(tag("bootstrap"), 1).rng();
    let srw_ci = bootstrap_ci(cfg.replicates, resamples, level, &mut rng, |idx| {
        growth_slope(ladder, &column_means(&srw_rows, idx, k)).ok().map(|f| f.slope)
    })?;

    let mut table = Table::new("replicates", &["replicate", "n", "master_seed", "stream_id", "lerw_norm", "srw_norm"]);
    for (j, r) in reps.iter().enumerate() {
        let s = cfg.stream(0, j as u64);
        for (i, &n) in ladder.iter().enumerate() {
            table.push(vec![
                j.to_string(),
                n.to_string(),
                s.master_seed.to_string(),
                s.stream_id.to_string(),
                num(r.0[i]),
                num(r.1[i]),
            ]);
        }
    }
    let width_max = cfg.f64_param("ci_width_max")?;
    let srw_tol = cfg.f64_param("srw_tolerance")?;
    let beta = fit.slope;
    let checks = vec![
        Check::new("first_step_unit", reps.iter().all(|r| r.2), "|eta(1)| = 1 in every replicate"),
        Check::new("beta_in_range", beta > 1.0 && beta <= 5.0 / 3.0, format!("beta = {beta:.4}")),
        Check::new("ci_width", ci.1 - ci.0 <= width_max, format!("CI [{:.4}, {:.4}], width limit {width_max}", ci.0, ci.1)),
        Check::new(
            "srw_control",
            (srw_fit.slope - 2.0).abs() <= srw_tol,
            format!("SRW slope {:.4}, CI [{:.4}, {:.4}]", srw_fit.slope, srw_ci.0, srw_ci.1),
        ),
    ];
    let plots = vec![
        Plot::new("lerw_norm", "n", "mean_norm", ladder.iter().zip(&mean_norm).map(|(&n, &m)| (n as f64, m)).collect()),
        Plot::new("srw_norm", "n", "mean_norm", ladder.iter().zip(&srw_mean_norm).map(|(&n, &m)| (n as f64, m)).collect()),
    ];
    Ok(Run {
        summary: BetaSummary {
            ladder: ladder.clone(),
            mean_norm,
            srw_mean_norm,
            fit,
            beta,
            ci,
            srw_slope: srw_fit.slope,
            srw_ci,
            replicates: cfg.replicates,
            wall_time_s: t0.elapsed().as_secs_f64(),
        },
        checks,
        tables: vec![table],
        plots,
    })
}

/// Frequency of `{max avoidance > eps}` for one `(n, delta, eps)`.
#[derive(Clone, Debug, Serialize)]
pub struct HittingCell {
    pub n: usize,
    pub delta: f64,
    pub sausage_radius: f64,
    pub epsilon: f64,
    pub frequency: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct HittingSummary {
    pub beta: f64,
    pub deltas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub cells: Vec<HittingCell>,
    pub wall_time_s: f64,
}

/// Uniform lattice site of the `rho`-sausage of `pts`, by rejection from
/// the bounding box.
fn sample_sausage_point<R: RngCore + ?Sized>(pts: &[LatticePoint<3>], sausage: &SausageTarget<3>, rho: f64, rng: &mut R) -> Result<LatticePoint<3>> {
    let pad = rho.ceil() as i64;
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for p in pts {
        for a in 0..3 {
            lo[a] = lo[a].min(p.0[a] - pad);
            hi[a] = hi[a].max(p.0[a] + pad);
        }
    }
    for _ in 0..50_000_000u64 {
        let mut z = [0i64; 3];
        for a in 0..3 {
            let w = (hi[a] - lo[a] + 1) as u128;
            z[a] = lo[a] + ((rng.next_u64() as u128 * w) >> 64) as i64;
        }
        let z = LatticePoint(z);
        if sausage.hits(&z) {
            return Ok(z);
        }
    }
    Err(Error::InsufficientData("sausage rejection sampling did not terminate".into()))
}

/// Largest avoidance probability over sampled sausage points, per delta,
/// for `eta[0, n]`; also returns the mean over points and the count on the path.
fn sausage_avoidance(
    n: usize,
    deltas: &[f64],
    beta: f64,
    z_points: usize,
    walks: u64,
    stream: RngStream,
) -> Result<Vec<(f64, f64, f64, usize)>> {
    let eta = lerw_sample::<_, 3>(n, &mut stream.child(0).rng())?;
    let pts = eta.points();
    let target = SetTarget::new(pts);
    let scale = (n as f64).powf(1.0 / beta);
    let mut out = Vec::with_capacity(deltas.len());
    for (di, &delta) in deltas.iter().enumerate() {
        let rho = delta * scale;
        let sausage = SausageTarget::new(pts, rho);
        let mut rng = stream.derive(&[tag("z"), di as u64]).rng();
        let (mut max, mut sum, mut on) = (0.0f64, 0.0, 0usize);
        for zi in 0..z_points {
            let z = sample_sausage_point(pts, &sausage, rho, &mut rng)?;
            let p = if target.hits(&z) {
                on += 1;
                0.0
            } else {
                avoidance_probability_wos(&target, &z, WosConfig::default(), walks, stream.derive(&[tag("walks"), di as u64, zi as u64]))?.0
            };
            max = max.max(p);
            sum += p;
        }
        out.push((rho, max, sum / z_points as f64, on));
    }
    Ok(out)
}

/// For each `n` and sausage radius `delta n^{1/beta}`, the frequency over
/// paths of `{max_z P_z(W avoids eta) > eps}` with `z` uniform in the sausage.
pub fn hitting_estimate_check(cfg: &ExperimentConfig) -> Result<Run<HittingSummary>> {
    cfg.validate()?;
    let deltas = cfg.list_param("deltas")?;
    let mut epsilons = cfg.list_param("epsilons")?;
    epsilons.sort_by(f64::total_cmp);
    let beta = cfg.f64_param("beta")?;
    let z_points = cfg.usize_param("z_points")?;
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0)) || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("deltas must be positive and strictly decreasing"));
    }
    if epsilons.is_empty() || !(beta > 0.0) || z_points == 0 || cfg.walks == 0 {
        return Err(invalid("need epsilons, beta > 0, z_points >= 1 and walks >= 1"));
    }
    let t0 = Instant::now();
    let mut table = Table::new(
        "replicates",
        &["n", "replicate", "master_seed", "stream_id", "delta", "sausage_radius", "max_avoidance", "mean_avoidance", "points_on_path"],
    );
    let mut cells = Vec::new();
    let mut checks = Vec::new();
    for (k, &n) in cfg.ladder.iter().enumerate() {
        let reps: Vec<Vec<(f64, f64, f64, usize)>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|j| sausage_avoidance(n, &deltas, beta, z_points, cfg.walks, cfg.stream(k as u64, j as u64)))
            .collect::<Result<_>>()?;
        for (j, r) in reps.iter().enumerate() {
            let s = cfg.stream(k as u64, j as u64);
            for (di, v) in r.iter().enumerate() {
                table.push(vec![
                    n.to_string(),
                    j.to_string(),
                    s.master_seed.to_string(),
                    s.stream_id.to_string(),
                    num(deltas[di]),
                    num(v.0),
                    num(v.1),
                    num(v.2),
                    v.3.to_string(),
                ]);
            }
        }
        let s = cfg.replicates as f64;
        let mut grid = vec![vec![(0.0, 0.0); epsilons.len()]; deltas.len()];
        for (di, &delta) in deltas.iter().enumerate() {
            for (ei, &eps) in epsilons.iter().enumerate() {
                let f = reps.iter().filter(|r| r[di].1 > eps).count() as f64 / s;
                let se = (f * (1.0 - f) / s).sqrt();
                grid[di][ei] = (f, se);
                cells.push(HittingCell {
                    n,
                    delta,
                    sausage_radius: reps[0][di].0,
                    epsilon: eps,
                    frequency: f,
                    stderr: se,
                    samples: cfg.replicates,
                });
            }
        }
        let eps_monotone = grid.iter().all(|row| row.windows(2).all(|w| w[1].0 <= w[0].0));
        checks.push(Check::new(&format!("eps_monotone_n{n}"), eps_monotone, "frequency nonincreasing in eps"));
        for (ei, &eps) in epsilons.iter().enumerate() {
            let ok = grid.windows(2).all(|w| {
                let (a, b) = (w[0][ei], w[1][ei]);
                b.0 <= a.0 + 3.0 * joint_se(a.1, b.1)
            });
            let freqs: Vec<String> = grid.iter().map(|row| format!("{:.4}", row[ei].0)).collect();
            checks.push(Check::new(
                &format!("delta_trend_n{n}_eps{eps}"),
                ok,
                format!("frequencies {} along the delta ladder", freqs.join(" -> ")),
            ));
        }
    }
    let plots = epsilons
        .iter()
        .map(|&eps| {
            let pts = cells.iter().filter(|c| c.epsilon == eps && c.n == *cfg.ladder.last().unwrap()).map(|c| (c.delta, c.frequency)).collect();
            Plot::new(&format!("frequency_eps{eps}"), "delta", "frequency", pts)
        })
        .collect();
    Ok(Run {
        summary: HittingSummary { beta, deltas, epsilons, cells, wall_time_s: t0.elapsed().as_secs_f64() },
        checks,
        tables: vec![table],
        plots,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitLawRung {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub std_dev: f64,
    pub cv: f64,
    /// Mean squared per-path estimator error.
    pub noise_variance: f64,
    /// CV after removing the per-path estimator noise from the variance.
    pub cv_corrected: f64,
    pub min: f64,
    pub ks_to_previous: Option<f64>,
    pub ks_p_value: Option<f64>,
    pub samples: usize,
    pub master_seed: u64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GreenRatioProbe {
    /// `(m, C(ball of radius m), stderr, C / m)`.
    pub balls: Vec<(f64, f64, f64, f64)>,
    /// Fit of `C / m` on `1 / m`; the intercept is the large-ball limit.
    pub fit: LinearFit,
    /// Newtonian capacity of the unit ball (Brownian Green's function
    /// `1 / (2 pi |x|)`) over the lattice limit.
    pub capacity_ratio: f64,
    /// `(|y|, G(0, y), stderr, 2 pi |y| G(0, y))`.
    pub green: Vec<(f64, f64, f64, f64)>,
    /// `(convention, predicted ratio, |measured - predicted|)`.
    pub candidates: Vec<(String, f64, f64)>,
}

/// Measures the lattice/continuum capacity ratio from discrete balls of
/// growing radius and the lattice Green's function along an axis.
pub fn green_ratio_probe(radii: &[f64], walks: u64, stream: RngStream) -> Result<GreenRatioProbe> {
    if radii.len() < 2 || radii.iter().any(|r| !(*r >= 1.0)) {
        return Err(invalid("probe needs at least two radii >= 1"));
    }
    let mut balls = Vec::with_capacity(radii.len());
    let mut green = Vec::new();
    for (i, &m) in radii.iter().enumerate() {
        let ball = SausageTarget::new(&[LatticePoint::<3>::ORIGIN], m);
        let rec = capacity_wos(&ball, 2.0 * m + 2.0, WosConfig::default(), walks, stream.derive(&[tag("ball"), i as u64]))?;
        balls.push((m, rec.value, rec.stderr, rec.value / m));
        if m <= 16.0 {
            let y = LatticePoint([m.round() as i64, 0, 0]);
            let g = green_estimate(&y, GreenMethod::MonteCarlo, walks, stream.derive(&[tag("green"), i as u64]))?;
            let norm = y.euclidean_norm();
            green.push((norm, g.value, g.stderr, 2.0 * PI * norm * g.value));
        }
    }
    let x: Vec<f64> = balls.iter().map(|b| 1.0 / b.0).collect();
    let y: Vec<f64> = balls.iter().map(|b| b.3).collect();
    let fit = linear_fit(&x, &y)?;
    let capacity_ratio = 2.0 * PI / fit.intercept;
    let candidates = [("lattice Green ~ 3 x Brownian Green", 3.0), ("Brownian Green ~ 3 x lattice Green", 1.0 / 3.0)]
        .into_iter()
        .map(|(c, v)| (c.to_string(), v, (capacity_ratio - v).abs()))
        .collect();
    Ok(GreenRatioProbe { balls, fit, capacity_ratio, green, candidates })
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitLawSummary {
    pub beta: f64,
    pub rungs: Vec<LimitLawRung>,
    /// Fit of KS distance on rung index.
    pub ks_trend: Option<LinearFit>,
    pub probe: Option<GreenRatioProbe>,
}

/// Law of `C(eta[0, n]) / (3 n^{1/beta})` along the ladder, with the
/// capacity of each path estimated by walk-on-spheres hitting.
pub fn d3_limit_law(cfg: &ExperimentConfig) -> Result<Run<LimitLawSummary>> {
    cfg.validate()?;
    let beta = cfg.f64_param("beta")?;
    let half = cfg.f64_param("beta_halfwidth")?;
    if !(beta > 0.0) || !(half >= 0.0) || half >= beta || cfg.walks < 2 || cfg.replicates < 2 {
        return Err(invalid("need beta > halfwidth >= 0, walks >= 2 and replicates >= 2"));
    }
    let mut table = Table::new("replicates", &["n", "replicate", "master_seed", "stream_id", "rescaled_capacity", "stderr", "walks"]);
    let mut rungs: Vec<LimitLawRung> = Vec::new();
    let mut samples: Vec<DistributionSample> = Vec::new();
    for (k, &n) in cfg.ladder.iter().enumerate() {
        let t0 = Instant::now();
        let norm = 3.0 * (n as f64).powf(1.0 / beta);
        let reps: Vec<(f64, f64)> = (0..cfg.replicates)
            .into_par_iter()
            .map(|j| -> Result<(f64, f64)> {
                let s = cfg.stream(k as u64, j as u64);
                let eta = lerw_sample::<_, 3>(n, &mut s.child(0).rng())?;
                let target = SetTarget::new(eta.points());
                let r = target.ball().1;
                let rec = capacity_wos(&target, 2.0 * r + 2.0, WosConfig::default(), cfg.walks, s.child(1))?;
                Ok((rec.value / norm, rec.stderr / norm))
            })
            .collect::<Result<_>>()?;
        for (j, r) in reps.iter().enumerate() {
            let s = cfg.stream(k as u64, j as u64);
            table.push(vec![
                n.to_string(),
                j.to_string(),
                s.master_seed.to_string(),
                s.stream_id.to_string(),
                num(r.0),
                num(r.1),
                cfg.walks.to_string(),
            ]);
        }
        let values: Vec<f64> = reps.iter().map(|r| r.0).collect();
        let m: Moments = values.iter().copied().collect();
        let noise = reps.iter().map(|r| r.1 * r.1).sum::<f64>() / reps.len() as f64;
        let sample = DistributionSample::new(values)?;
        let ks = samples.last().map(|prev| ks_two_sample(prev, &sample));
        rungs.push(LimitLawRung {
            n,
            mean: m.mean,
            stderr: m.stderr(),
            std_dev: m.std_dev(),
            cv: m.std_dev() / m.mean,
            noise_variance: noise,
            cv_corrected: (m.variance() - noise).max(0.0).sqrt() / m.mean,
            min: sample.values()[0],
            ks_to_previous: ks.map(|t| t.statistic),
            ks_p_value: ks.map(|t| t.p_value),
            samples: cfg.replicates,
            master_seed: cfg.seed,
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
        samples.push(sample);
    }

    let ks: Vec<f64> = rungs.iter().filter_map(|r| r.ks_to_previous).collect();
    let ks_trend = if ks.len() >= 2 {
        let x: Vec<f64> = (0..ks.len()).map(|i| i as f64).collect();
        Some(linear_fit(&x, &ks)?)
    } else {
        None
    };

    let mut sens = Table::new("sensitivity", &["beta", "n", "mean", "ks_to_previous"]);
    for b in [beta - half, beta, beta + half] {
        let mut prev: Option<DistributionSample> = None;
        for (k, r) in rungs.iter().enumerate() {
            let f = (r.n as f64).powf(1.0 / beta - 1.0 / b);
            let d = DistributionSample::new(samples[k].values().iter().map(|v| v * f).collect())?;
            let ks = prev.as_ref().map(|p| ks_two_sample(p, &d).statistic);
            sens.push(vec![num(b), r.n.to_string(), num(d.mean()), ks.map_or(String::new(), num)]);
            prev = Some(d);
        }
    }

    let probe_radii = cfg.list_param("probe_radii")?;
    let probe = if probe_radii.is_empty() {
        None
    } else {
        Some(green_ratio_probe(&probe_radii, cfg.usize_param("probe_walks")? as u64, cfg.stream(tag("probe"), 0))?)
    };

    let ks_max = cfg.f64_param("ks_threshold")?;
    let cv_min = cfg.f64_param("cv_threshold")?;
    let last = rungs.last().expect("nonempty ladder");
    let mut checks = vec![
        Check::new("positive", rungs.iter().all(|r| r.min > 0.0), "all rescaled capacities positive"),
        Check::new(
            "nondegenerate",
            last.cv_corrected >= cv_min,
            format!("noise-corrected CV {:.4} (raw {:.4}) at n = {}", last.cv_corrected, last.cv, last.n),
        ),
    ];
    if let (Some(fit), Some(&fin)) = (&ks_trend, ks.last()) {
        let list: Vec<String> = ks.iter().map(|k| format!("{k:.4}")).collect();
        checks.push(Check::new(
            "ks_decreasing",
            fit.slope < 0.0 && fin < ks[0],
            format!("KS {} (slope {:.4})", list.join(" -> "), fit.slope),
        ));
        checks.push(Check::new("ks_final", fin <= ks_max, format!("final KS {fin:.4}, limit {ks_max}")));
    }
    let plots = vec![
        Plot::new("mean", "n", "mean_rescaled_capacity", rungs.iter().map(|r| (r.n as f64, r.mean)).collect()),
        Plot::new("cv", "n", "cv_corrected", rungs.iter().map(|r| (r.n as f64, r.cv_corrected)).collect()),
        Plot::new("ks", "n", "ks_to_previous", rungs.iter().filter_map(|r| r.ks_to_previous.map(|k| (r.n as f64, k))).collect()),
    ];
    Ok(Run { summary: LimitLawSummary { beta, rungs, ks_trend, probe }, checks, tables: vec![table, sens], plots })
}
