//! Birkhoff averages of cylinder indicators along single LERW paths.

use rayon::prelude::*;
use serde::Serialize;

use super::{num, Check, ExperimentConfig, Plot, Run, Table};
use crate::error::{invalid, Error, Result};
use crate::lattice::LatticePoint;
use crate::stats::{linear_fit, LinearFit, Moments};
use crate::walk::{cylinder_frequency, lerw_sample};

#[derive(Clone, Debug, Serialize)]
pub struct XiSummary {
    /// Step directions of the cylinder.
    pub directions: Vec<usize>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Least squares of `log variance` on `log n`.
    pub fit: LinearFit,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErgodicSummary {
    pub dimension: usize,
    pub ladder: Vec<usize>,
    pub xi: Vec<XiSummary>,
    /// Largest `|sum over one-step cylinders - 1|` seen.
    pub one_step_sum_error: f64,
}

/// Parses `"0;0,0;0,2"` into direction lists.
fn parse_xi(s: &str, d: usize) -> Result<Vec<Vec<usize>>> {
    s.split(';')
        .map(|part| {
            let dirs: Vec<usize> = part
                .split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad direction '{t}'"))))
                .collect::<Result<_>>()?;
            if dirs.is_empty() || dirs.iter().any(|&x| x >= 2 * d) {
                return Err(invalid(format!("directions must lie in 0..{}", 2 * d)));
            }
            Ok(dirs)
        })
        .collect()
}

fn cylinder<const D: usize>(dirs: &[usize]) -> Vec<LatticePoint<D>> {
    let mut p = LatticePoint::<D>::ORIGIN;
    let mut v = vec![p];
    for &d in dirs {
        p = p.step(d);
        v.push(p);
    }
    v
}

/// `H^n(xi)` for every cylinder and rung, one long path per replicate,
/// with the cross-sample variance decay fitted on log-log axes.
pub fn ergodic_average(cfg: &ExperimentConfig) -> Result<Run<ErgodicSummary>> {
    cfg.validate()?;
    crate::with_dim!(cfg.dimension, D => ergodic_d::<D>(cfg), _ => Err(Error::UnsupportedDimension(cfg.dimension)))
}

fn ergodic_d<const D: usize>(cfg: &ExperimentConfig) -> Result<Run<ErgodicSummary>> {
    let xis = parse_xi(cfg.str_param("xi")?, D)?;
    if cfg.replicates < 2 || cfg.ladder.len() < 2 {
        return Err(invalid("need at least 2 replicates and 2 rungs"));
    }
    let cyl: Vec<Vec<LatticePoint<D>>> = xis.iter().map(|x| cylinder::<D>(x)).collect();
    let one_step: Vec<Vec<LatticePoint<D>>> = (0..2 * D).map(|d| cylinder::<D>(&[d])).collect();
    let m_max = xis.iter().map(|x| x.len()).max().unwrap_or(1);
    let n_max = *cfg.ladder.last().expect("nonempty");
    // values[j][xi][rung], plus the one-step sum error of replicate j
    let per: Vec<(Vec<Vec<f64>>, f64)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|j| -> Result<_> {
            let eta = lerw_sample::<_, D>(n_max + m_max, &mut cfg.stream(0, j as u64).rng())?;
            let pts = eta.points();
            let vals = cyl
                .iter()
                .map(|c| cfg.ladder.iter().map(|&n| cylinder_frequency(pts, c, n)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let mut err = 0.0f64;
            for &n in &cfg.ladder {
                let s: f64 = one_step.iter().map(|c| cylinder_frequency(pts, c, n)).sum::<Result<f64>>()?;
                err = err.max((s - 1.0).abs());
            }
            Ok((vals, err))
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new("replicates", &["replicate", "master_seed", "stream_id", "xi", "n", "h"]);
    for (j, (vals, _)) in per.iter().enumerate() {
        let s = cfg.stream(0, j as u64);
        for (i, x) in xis.iter().enumerate() {
            let name = x.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
            for (r, &n) in cfg.ladder.iter().enumerate() {
                table.push(vec![
                    j.to_string(),
                    s.master_seed.to_string(),
                    s.stream_id.to_string(),
                    name.clone(),
                    n.to_string(),
                    num(vals[i][r]),
                ]);
            }
        }
    }

    let lx: Vec<f64> = cfg.ladder.iter().map(|&n| (n as f64).ln()).collect();
    let mut summaries = Vec::with_capacity(xis.len());
    let mut plots = Vec::new();
    for (i, x) in xis.iter().enumerate() {
        let mut mean = Vec::new();
        let mut variance = Vec::new();
        for r in 0..cfg.ladder.len() {
            let m: Moments = per.iter().map(|p| p.0[i][r]).collect();
            mean.push(m.mean);
            variance.push(m.variance());
        }
        if variance.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InsufficientData(format!("zero variance for cylinder {x:?}; use more replicates")));
        }
        let ly: Vec<f64> = variance.iter().map(|v| v.ln()).collect();
        let fit = linear_fit(&lx, &ly)?;
        let name = x.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("_");
        plots.push(Plot::new(
            &format!("variance_xi{name}"),
            "n",
            "variance",
            cfg.ladder.iter().zip(&variance).map(|(&n, &v)| (n as f64, v)).collect(),
        ));
        summaries.push(XiSummary { directions: x.clone(), mean, variance, fit });
    }

    let lo = cfg.f64_param("slope_low")?;
    let hi = cfg.f64_param("slope_high")?;
    let err = per.iter().map(|p| p.1).fold(0.0, f64::max);
    let in_unit = per.iter().all(|p| p.0.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    let mut checks = vec![
        Check::new("values_in_unit_interval", in_unit, "H^n in [0, 1]"),
        Check::new("one_step_sum", err <= 1e-12, format!("max |sum - 1| = {err:e}")),
    ];
    for s in &summaries {
        checks.push(Check::new(
            &format!("slope_xi{}", s.directions.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("_")),
            (lo..=hi).contains(&s.fit.slope),
            format!("slope {:.4} +- {:.4}, band [{lo}, {hi}]", s.fit.slope, s.fit.slope_se),
        ));
    }
    Ok(Run {
        summary: ErgodicSummary { dimension: D, ladder: cfg.ladder.clone(), xi: summaries, one_step_sum_error: err },
        checks,
        tables: vec![table],
        plots,
    })
}
