use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng::{tag, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SllnHighdim,
    SllnD4,
    BetaEstimate,
    HittingEstimateCheck,
    D3LimitLaw,
    ErgodicAverage,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::SllnHighdim,
        ExperimentKind::SllnD4,
        ExperimentKind::BetaEstimate,
        ExperimentKind::HittingEstimateCheck,
        ExperimentKind::D3LimitLaw,
        ExperimentKind::ErgodicAverage,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::SllnHighdim => "slln_highdim",
            ExperimentKind::SllnD4 => "slln_d4",
            ExperimentKind::BetaEstimate => "beta_estimate",
            ExperimentKind::HittingEstimateCheck => "hitting_estimate_check",
            ExperimentKind::D3LimitLaw => "d3_limit_law",
            ExperimentKind::ErgodicAverage => "ergodic_average",
        }
    }

    /// Method parameters accepted in the config, with defaults and meaning.
    pub fn params(&self) -> &'static [(&'static str, &'static str, &'static str)] {
        match self {
            ExperimentKind::SllnHighdim => &[
                ("r_factor", "3", "escape walks stop at r_factor * path radius + 2"),
                ("rhs_side", "4096", "side length of the two-sided samples"),
                ("rhs_samples", "400", "number of accepted two-sided samples"),
                ("rhs_walks", "500", "walks from the origin per two-sided sample"),
                ("rhs_r_factor", "4", "exit radius factor for the avoidance walks"),
                ("z_level", "1.96", "normal quantile for the reported intervals"),
            ],
            ExperimentKind::SllnD4 => &[
                ("r_factor", "4", "escape walks stop at r_factor * path radius + 4"),
                ("rhs_side", "256", "forward side length for the weighted samples (0 skips)"),
                ("rhs_samples", "100", "number of weighted samples"),
                ("rhs_walks", "400", "walks per X-hat estimate"),
                ("n_weight", "4096", "order of the X_n importance weight"),
                ("weight_walks", "400", "walks per importance weight"),
                ("step_sigmas", "2", "required decrease between rungs in joint stderr"),
            ],
            ExperimentKind::BetaEstimate => &[
                ("bootstrap", "1000", "bootstrap resamples over paths"),
                ("level", "0.95", "bootstrap confidence level"),
                ("ci_width_max", "0.15", "largest accepted bootstrap CI width"),
                ("srw_tolerance", "0.1", "accepted distance of the SRW control slope from 2"),
            ],
            ExperimentKind::HittingEstimateCheck => &[
                ("deltas", "0.025,0.0125,0.00625", "sausage radius factors, decreasing"),
                ("epsilons", "0.1", "avoidance thresholds"),
                ("beta", "1.62", "growth exponent used for n^(1/beta)"),
                ("z_points", "16", "sausage points per path"),
            ],
            ExperimentKind::D3LimitLaw => &[
                ("beta", "1.62", "frozen growth exponent"),
                ("beta_halfwidth", "0.02", "half-width for the sensitivity table"),
                ("ks_threshold", "0.08", "largest allowed final KS distance"),
                ("cv_threshold", "0.05", "smallest allowed noise-corrected CV"),
                ("probe_radii", "4,8,16,32", "ball radii for the Green-ratio probe (empty skips)"),
                ("probe_walks", "20000", "walks per probe estimate"),
            ],
            ExperimentKind::ErgodicAverage => &[
                ("xi", "0;0,0;0,2", "cylinders as step-direction lists separated by ';'"),
                ("slope_low", "-1.3", "lower edge of the accepted variance-decay slope"),
                ("slope_high", "-0.7", "upper edge of the accepted variance-decay slope"),
            ],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| invalid(format!("unknown experiment '{s}'")))
    }
}

/// Parsed experiment configuration.
///
/// The file format is one `key = value` pair per line; `#` starts a
/// comment. Ladders are comma lists or dyadic ranges such as `2^8..2^12`.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub dimension: usize,
    pub ladder: Vec<usize>,
    /// Independent replicates (paths) per rung.
    pub replicates: usize,
    /// Walks per replicate.
    pub walks: u64,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub params: BTreeMap<String, String>,
}

pub fn parse_ladder(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let exp = |t: &str| -> Result<u32> {
            t.trim()
                .strip_prefix("2^")
                .and_then(|e| e.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad dyadic bound '{t}'")))
        };
        let (lo, hi) = (exp(a)?, exp(b)?);
        if lo > hi || hi > 40 {
            return Err(Error::Parse(format!("bad dyadic range '{s}'")));
        }
        return Ok((lo..=hi).map(|e| 1usize << e).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad ladder entry '{t}'"))))
        .collect()
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{t}'"))))
        .collect()
}

impl ExperimentConfig {
    /// Desk-scale defaults.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let (dimension, ladder, replicates, walks) = match kind {
            ExperimentKind::SllnHighdim => (5, parse_ladder("2^8..2^14").unwrap(), 400, 500),
            ExperimentKind::SllnD4 => (4, parse_ladder("2^6..2^12").unwrap(), 300, 200),
            ExperimentKind::BetaEstimate => (3, parse_ladder("2^8..2^16").unwrap(), 300, 0),
            ExperimentKind::HittingEstimateCheck => (3, vec![1 << 12], 200, 200),
            ExperimentKind::D3LimitLaw => (3, parse_ladder("2^4..2^11").unwrap(), 1000, 1000),
            ExperimentKind::ErgodicAverage => (4, parse_ladder("2^8..2^16").unwrap(), 200, 0),
        };
        let params = kind.params().iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect();
        ExperimentConfig { experiment: kind, dimension, ladder, replicates, walks, seed: 1, output_dir: None, params }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let kind: ExperimentKind = pairs
            .iter()
            .find(|(k, _)| k == "experiment")
            .ok_or_else(|| Error::Parse("missing 'experiment' key".into()))?
            .1
            .parse()?;
        let mut cfg = ExperimentConfig::default_for(kind);
        for (k, v) in pairs {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key; method parameters must be known to the experiment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<u64> { v.parse().map_err(|_| Error::Parse(format!("{key}: bad integer '{v}'"))) };
        match key {
            "experiment" => {
                if value.parse::<ExperimentKind>()? != self.experiment {
                    return Err(Error::Parse("experiment given twice".into()));
                }
            }
            "dimension" => self.dimension = num(value)? as usize,
            "ladder" => self.ladder = parse_ladder(value)?,
            "replicates" => self.replicates = num(value)? as usize,
            "walks" => self.walks = num(value)?,
            "seed" => self.seed = num(value)?,
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            _ => {
                if !self.experiment.params().iter().any(|(k, _, _)| *k == key) {
                    return Err(Error::Parse(format!("unknown key '{key}' for {}", self.experiment)));
                }
                self.params.insert(key.to_string(), value.to_string());
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() || self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("ladder must be nonempty and strictly increasing"));
        }
        if self.ladder[0] < 1 {
            return Err(invalid("ladder entries must be >= 1"));
        }
        if self.replicates < 1 {
            return Err(invalid("replicates must be >= 1"));
        }
        let dims_ok = match self.experiment {
            ExperimentKind::SllnHighdim => (5..=6).contains(&self.dimension),
            ExperimentKind::SllnD4 => self.dimension == 4,
            ExperimentKind::BetaEstimate | ExperimentKind::HittingEstimateCheck | ExperimentKind::D3LimitLaw => self.dimension == 3,
            ExperimentKind::ErgodicAverage => (4..=5).contains(&self.dimension),
        };
        if !dims_ok {
            return Err(Error::UnsupportedDimension(self.dimension));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "experiment = {}\ndimension = {}\nladder = {}\nreplicates = {}\nwalks = {}\nseed = {}\n",
            self.experiment,
            self.dimension,
            self.ladder.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
            self.replicates,
            self.walks,
            self.seed
        );
        if let Some(d) = &self.output_dir {
            s.push_str(&format!("output_dir = {}\n", d.display()));
        }
        for (k, v) in &self.params {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    fn raw(&self, key: &str) -> Result<&str> {
        self.params
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| invalid(format!("missing parameter '{key}'")))
    }

    pub fn f64_param(&self, key: &str) -> Result<f64> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| Error::Parse(format!("{key}: bad number '{v}'")))
    }

    pub fn usize_param(&self, key: &str) -> Result<usize> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| Error::Parse(format!("{key}: bad integer '{v}'")))
    }

    pub fn list_param(&self, key: &str) -> Result<Vec<f64>> {
        parse_f64_list(self.raw(key)?)
    }

    pub fn str_param(&self, key: &str) -> Result<&str> {
        self.raw(key)
    }

    /// Stream for replicate `rep` of rung `rung` (or any other tag pair).
    pub fn stream(&self, rung: u64, rep: u64) -> RngStream {
        RngStream::new(self.seed, 0).derive(&[tag(self.experiment.name()), rung, rep])
    }
}
