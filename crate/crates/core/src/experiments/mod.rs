//! Experiment drivers: configuration, per-replicate tables, JSON summaries
//! and plot data.
//!
//! Every experiment takes an [`ExperimentConfig`] and returns a typed
//! [`Run`]; [`run_experiment`] wraps any of them into a [`Report`] with
//! provenance and wall time. Replicate `j` of rung `k` always draws from
//! `config.stream(k, j)`, so results do not depend on the thread count.

mod config;
mod d3;
mod highdim;
mod ergodic;

pub use config::{parse_f64_list, parse_ladder, ExperimentConfig, ExperimentKind};
pub use d3::{
    beta_estimate, d3_limit_law, green_ratio_probe, hitting_estimate_check, BetaSummary, GreenRatioProbe, HittingCell,
    HittingSummary, LimitLawRung, LimitLawSummary,
};
pub use ergodic::{ergodic_average, ErgodicSummary, XiSummary};
pub use highdim::{slln_d4, slln_highdim, D4Rhs, D4Summary, HighDimRhs, HighDimSummary};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::stats::joint_se;

/// A CSV table with a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Formats a float so that it parses back to the same value.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Two-column plot data.
#[derive(Clone, Debug, Serialize)]
pub struct Plot {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

impl Plot {
    pub fn new(name: &str, x_label: &str, y_label: &str, points: Vec<(f64, f64)>) -> Self {
        Plot { name: name.into(), x_label: x_label.into(), y_label: y_label.into(), points }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}\t{}\n", self.x_label, self.y_label);
        for (x, y) in &self.points {
            s.push_str(&format!("{}\t{}\n", num(*x), num(*y)));
        }
        s
    }
}

/// A pass/fail rule evaluated by an experiment.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

/// Per-rung record shared by the capacity experiments.
#[derive(Clone, Debug, Serialize)]
pub struct RungRecord {
    pub n: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub replicates: usize,
    /// Walks summed over replicates.
    pub trials: u64,
    pub master_seed: u64,
    pub wall_time_s: f64,
}

/// Typed result of one experiment. `tables[0]` holds one row per replicate.
#[derive(Clone, Debug)]
pub struct Run<S> {
    pub summary: S,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
}

impl<S> Run<S> {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub crate_version: &'static str,
    pub threads: usize,
}

/// Untyped result with provenance, as written to disk.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub summary: Value,
    pub checks: Vec<Check>,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub plots: Vec<Plot>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn into_report<S: Serialize>(cfg: &ExperimentConfig, run: Run<S>, start: Instant) -> Result<Report> {
    Ok(Report {
        experiment: cfg.experiment,
        config: cfg.clone(),
        provenance: Provenance {
            master_seed: cfg.seed,
            crate_version: env!("CARGO_PKG_VERSION"),
            threads: rayon::current_num_threads(),
        },
        summary: serde_json::to_value(&run.summary)?,
        checks: run.checks,
        wall_time_s: start.elapsed().as_secs_f64(),
        tables: run.tables,
        plots: run.plots,
    })
}

/// Runs the experiment named in the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let start = Instant::now();
    match cfg.experiment {
        ExperimentKind::SllnHighdim => into_report(cfg, slln_highdim(cfg)?, start),
        ExperimentKind::SllnD4 => into_report(cfg, slln_d4(cfg)?, start),
        ExperimentKind::BetaEstimate => into_report(cfg, beta_estimate(cfg)?, start),
        ExperimentKind::HittingEstimateCheck => into_report(cfg, hitting_estimate_check(cfg)?, start),
        ExperimentKind::D3LimitLaw => into_report(cfg, d3_limit_law(cfg)?, start),
        ExperimentKind::ErgodicAverage => into_report(cfg, ergodic_average(cfg)?, start),
    }
}

/// Writes `<name>_<table>.csv`, `<name>_summary.json` and
/// `<name>_<plot>.dat` into `dir`; returns the paths written.
pub fn write_outputs(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let base = report.experiment.name();
    let mut out = Vec::new();
    for t in &report.tables {
        let p = dir.join(format!("{base}_{}.csv", t.name));
        fs::write(&p, t.to_csv())?;
        out.push(p);
    }
    for pl in &report.plots {
        let p = dir.join(format!("{base}_{}.dat", pl.name));
        fs::write(&p, pl.to_text())?;
        out.push(p);
    }
    let p = dir.join(format!("{base}_summary.json"));
    fs::write(&p, serde_json::to_string_pretty(report)? + "\n")?;
    out.push(p);
    Ok(out)
}

/// Mean and stderr over replicate values.
pub(crate) fn rung_stats(values: &[f64]) -> (f64, f64) {
    crate::stats::mean_stderr(values)
}

/// `|a - b| < k * joint stderr`.
pub(crate) fn within(a: (f64, f64), b: (f64, f64), k: f64) -> bool {
    (a.0 - b.0).abs() < k * joint_se(a.1, b.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5e17] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn tables_render_as_csv() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec!["1".into(), num(0.5)]);
        assert_eq!(t.to_csv(), "a,b\n1,0.5\n");
        let p = Plot::new("p", "n", "y", vec![(1.0, 2.0)]);
        assert_eq!(p.to_text(), "n\ty\n1.0\t2.0\n");
    }
}
