//! Monte Carlo capacity of finite subsets of Z^d (d >= 3).
//!
//! Three estimators are provided: the escape sum `sum_a P_a(no return)`,
//! the ordered decomposition into prefix escape probabilities, and the
//! far-field hitting probability divided by the Green's function. Walks
//! are truncated on exiting a ball; every estimate reports the bracket that
//! truncation leaves open.

mod hitting;
mod target;
mod wos;

pub use hitting::{
    capacity_via_hitting, capacity_via_hitting_with, harmonic_measure_sample, hit_probability_from, sausage_capacity_mc,
    HittingConfig,
};
pub use target::{SausageTarget, SetTarget, Target};
pub use wos::{avoidance_probability_wos, capacity_wos, WosConfig};

use rand::RngCore;
use serde::Serialize;
use serde_json::{Map, Value};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::lattice::{LatticePoint, PointSet};
use crate::parallel::{map_blocks, BLOCK};
use crate::rng::{uniform01, unit_vector, DirectionSource, RngStream};

/// Constant `a_d = d Gamma(d/2 - 1) / (2 pi^{d/2})` in the Green's function
/// asymptotics `G(0, y) ~ a_d |y|^{2-d}`.
pub fn green_constant(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    d as f64 * gamma(h - 1.0) / (2.0 * std::f64::consts::PI.powf(h))
}

/// `a_d |y|^{2-d}`.
pub fn green_asymptotic(d: usize, norm: f64) -> f64 {
    green_constant(d) * norm.powi(2 - d as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EscapeSum,
    Decomposition,
    HittingGreen,
    WalkOnSpheres,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::EscapeSum => "escape_sum",
            Method::Decomposition => "decomposition",
            Method::HittingGreen => "hitting_green",
            Method::WalkOnSpheres => "walk_on_spheres",
        }
    }
}

/// A capacity estimate with its provenance.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateRecord {
    pub method: Method,
    pub value: f64,
    pub stderr: f64,
    pub trials: u64,
    /// Truncation bracket, when the estimator has one.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub master_seed: u64,
    pub stream_id: u64,
    pub params: Map<String, Value>,
}

impl EstimateRecord {
    fn new(method: Method, value: f64, stderr: f64, trials: u64, stream: RngStream) -> Self {
        EstimateRecord {
            method,
            value,
            stderr,
            trials,
            lower: None,
            upper: None,
            master_seed: stream.master_seed,
            stream_id: stream.stream_id,
            params: Map::new(),
        }
    }

    pub fn with_param(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), v.into());
        self
    }
}

/// Escape probability bracket from truncated walks.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EscapeEstimate {
    pub lower: f64,
    pub upper: f64,
    pub trials: u64,
    pub truncation_radius: f64,
}

impl EscapeEstimate {
    /// Binomial standard error of `upper`.
    pub fn stderr(&self) -> f64 {
        (self.upper * (1.0 - self.upper) / self.trials as f64).sqrt()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Crude upper bound on the probability of ever returning to a set of
/// capacity at most `cap` from outside the ball of radius `r`, when the set
/// lies within `r / 2` of the origin.
pub fn return_bound(d: usize, cap: f64, r: f64) -> f64 {
    (green_constant(d) * cap * (2.0 / r).powi(d as i32 - 2)).min(1.0)
}

/// First-order return probability from radius `r` to a set of capacity `cap`.
pub fn return_estimate(d: usize, cap: f64, r: f64) -> f64 {
    (green_constant(d) * cap * r.powi(2 - d as i32)).min(1.0)
}

fn check_dim<const D: usize>() -> Result<()> {
    if D < 3 {
        Err(Error::UnsupportedDimension(D))
    } else {
        Ok(())
    }
}

fn check_radius<const D: usize>(set: &PointSet<D>, r: f64) -> Result<()> {
    if !(r > 2.0 * set.radius()) {
        return Err(invalid(format!(
            "truncation radius {r} must exceed twice the set radius {}",
            set.radius()
        )));
    }
    Ok(())
}

/// Runs a walk from `start` until it steps onto a blocked site (returns
/// false) or leaves the ball `|x|^2 > exit2` (returns true). Blocked sites
/// must lie within `|x|^2 <= inner2`.
#[inline]
pub(crate) fn escape_walk<R, F, const D: usize>(
    start: LatticePoint<D>,
    inner2: i64,
    exit2: i64,
    blocked: &F,
    src: &mut DirectionSource<'_, R>,
) -> bool
where
    R: RngCore + ?Sized,
    F: Fn(&LatticePoint<D>) -> bool,
{
    let mut x = start;
    let mut n2 = x.norm_sq();
    loop {
        let dir = src.next(2 * D as u64);
        let ax = dir >> 1;
        let s = if dir & 1 == 0 { 1 } else { -1 };
        n2 += 2 * s * x.0[ax] + 1;
        x.0[ax] += s;
        if n2 <= inner2 {
            if blocked(&x) {
                return false;
            }
        } else if n2 > exit2 {
            return true;
        }
    }
}

/// Number of escapes among `trials` walks, computed in deterministic blocks.
fn count_escapes<F, const D: usize>(
    start: LatticePoint<D>,
    inner2: i64,
    exit2: i64,
    blocked: &F,
    trials: u64,
    stream: RngStream,
) -> u64
where
    F: Fn(&LatticePoint<D>) -> bool + Sync,
{
    map_blocks(trials, BLOCK, stream, |_, _, len, st| {
        let mut rng = st.rng();
        let mut src = DirectionSource::new(&mut rng);
        (0..len).filter(|_| escape_walk(start, inner2, exit2, blocked, &mut src)).count() as u64
    })
    .into_iter()
    .sum()
}

fn set_bounds<const D: usize>(set: &PointSet<D>, r: f64) -> (i64, i64) {
    let inner2 = set.iter().map(|p| p.norm_sq()).max().unwrap_or(0);
    (inner2, (r * r).floor() as i64)
}

/// Escape probability of `a` from `set` by walks truncated at radius `r`.
///
/// `upper` is the fraction of walks that leave `B(0, r)` before returning;
/// `lower` subtracts the crude bound on later returns, using `|set|` as the
/// capacity bound.
pub fn escape_probability_mc<const D: usize>(
    set: &PointSet<D>,
    a: &LatticePoint<D>,
    r: f64,
    trials: u64,
    stream: RngStream,
) -> Result<EscapeEstimate> {
    check_dim::<D>()?;
    if trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    if !set.contains(a) {
        return Err(invalid(format!("start {a} is not in the set")));
    }
    check_radius(set, r)?;
    let (inner2, exit2) = set_bounds(set, r);
    let hits = count_escapes(*a, inner2, exit2, &|x: &LatticePoint<D>| set.contains(x), trials, stream);
    let upper = hits as f64 / trials as f64;
    let lower = (upper * (1.0 - return_bound(D, set.len() as f64, r))).clamp(0.0, upper);
    Ok(EscapeEstimate { lower, upper, trials, truncation_radius: r })
}

/// Escape-sum capacity `sum_a P_a(W[1,inf) avoids A)`.
///
/// The reported value corrects the summed truncated escape fractions `U`
/// for returns after exiting radius `r` to first order, `U / (1 + a_d U r^{2-d})`;
/// the bracket `[lower, upper]` is the sum of per-point brackets with `U`
/// as the capacity bound.
pub fn capacity_mc<const D: usize>(set: &PointSet<D>, r: f64, trials_per_point: u64, stream: RngStream) -> Result<EstimateRecord> {
    check_dim::<D>()?;
    if set.is_empty() {
        return Err(Error::Empty("capacity set"));
    }
    if trials_per_point == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    check_radius(set, r)?;
    let (inner2, exit2) = set_bounds(set, r);
    let blocked = |x: &LatticePoint<D>| set.contains(x);
    let mut u = 0.0;
    let mut var = 0.0;
    for (i, a) in set.iter().enumerate() {
        let hits = count_escapes(*a, inner2, exit2, &blocked, trials_per_point, stream.child(i as u64));
        let p = hits as f64 / trials_per_point as f64;
        u += p;
        var += p * (1.0 - p) / trials_per_point as f64;
    }
    let k = return_estimate(D, 1.0, r);
    let value = u / (1.0 + k * u);
    let stderr = var.sqrt() / (1.0 + k * u).powi(2);
    let lower = u * (1.0 - return_bound(D, u, r));
    let mut rec = EstimateRecord::new(Method::EscapeSum, value, stderr, trials_per_point * set.len() as u64, stream)
        .with_param("R", r)
        .with_param("trials_per_point", trials_per_point)
        .with_param("points", set.len() as u64);
    rec.lower = Some(lower.max(0.0));
    rec.upper = Some(u);
    Ok(rec)
}

/// Escape-sum capacity estimated from `walks` walks started at uniformly
/// chosen members (with replacement); `|A|` times the mean escape fraction.
/// Suited to large sets where per-point estimates would be wasteful.
pub fn capacity_mc_sampled<const D: usize>(set: &PointSet<D>, r: f64, walks: u64, stream: RngStream) -> Result<EstimateRecord> {
    check_dim::<D>()?;
    if set.is_empty() {
        return Err(Error::Empty("capacity set"));
    }
    if walks == 0 {
        return Err(invalid("walks must be >= 1"));
    }
    check_radius(set, r)?;
    let (inner2, exit2) = set_bounds(set, r);
    let blocked = |x: &LatticePoint<D>| set.contains(x);
    let pts = set.points();
    let n = pts.len();
    let esc: u64 = map_blocks(walks, BLOCK / 8, stream, |_, _, len, st| {
        let mut rng = st.rng();
        let mut c = 0u64;
        for _ in 0..len {
            let i = ((rng.next_u64() as u128 * n as u128) >> 64) as usize;
            let mut src = DirectionSource::new(&mut rng);
            if escape_walk(pts[i], inner2, exit2, &blocked, &mut src) {
                c += 1;
            }
        }
        c
    })
    .into_iter()
    .sum();
    let p = esc as f64 / walks as f64;
    let u = n as f64 * p;
    let se_u = n as f64 * (p * (1.0 - p) / walks as f64).sqrt();
    let k = return_estimate(D, 1.0, r);
    let value = u / (1.0 + k * u);
    let stderr = se_u / (1.0 + k * u).powi(2);
    let mut rec = EstimateRecord::new(Method::EscapeSum, value, stderr, walks, stream)
        .with_param("R", r)
        .with_param("walks", walks)
        .with_param("points", n as u64);
    rec.lower = Some((u * (1.0 - return_bound(D, u, r))).max(0.0));
    rec.upper = Some(u);
    Ok(rec)
}

/// Per-term output of the decomposition estimator.
#[derive(Clone, Debug, Serialize)]
pub struct DecompositionTerm {
    /// Escape of `x_k` from `{x_1..x_k}` (corrected).
    pub with_self: f64,
    /// Avoidance of `{x_1..x_{k-1}}` from `x_k` (corrected; 1 for k = 1).
    pub without_self: f64,
    pub stderr: f64,
}

/// Ordered decomposition `sum_k P_{x_k}(escape {x_1..x_k}) P_{x_k}(avoid {x_1..x_{k-1}})`
/// with each factor estimated by independent truncated walks.
///
/// Each factor is corrected for returns after radius `r` using the partial
/// sums of the decomposition itself as capacity estimates of the prefixes.
pub fn capacity_decomposition_mc<const D: usize>(
    order: &[LatticePoint<D>],
    r: f64,
    trials_per_point: u64,
    stream: RngStream,
) -> Result<(EstimateRecord, Vec<DecompositionTerm>)> {
    check_dim::<D>()?;
    if order.is_empty() {
        return Err(Error::Empty("ordering"));
    }
    if trials_per_point == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    let set = PointSet::from_ordered(order)?;
    check_radius(&set, r)?;
    let (inner2, exit2) = set_bounds(&set, r);
    let t = trials_per_point as f64;
    let k_ret = return_estimate(D, 1.0, r);
    let mut terms = Vec::with_capacity(order.len());
    let mut partial = 0.0;
    let mut upper_sum = 0.0;
    let mut var = 0.0;
    for (k, x) in order.iter().enumerate() {
        let with = |p: &LatticePoint<D>| set.position(p).is_some_and(|i| i <= k);
        let without = |p: &LatticePoint<D>| set.position(p).is_some_and(|i| i < k);
        let st = stream.child(k as u64);
        let u1 = count_escapes(*x, inner2, exit2, &with, trials_per_point, st.child(1)) as f64 / t;
        let (u2, v2) = if k == 0 {
            (1.0, 0.0)
        } else {
            let u2 = count_escapes(*x, inner2, exit2, &without, trials_per_point, st.child(2)) as f64 / t;
            (u2, u2 * (1.0 - u2) / t)
        };
        let v1 = u1 * (1.0 - u1) / t;
        let c1 = 1.0 + k_ret * (partial + u1 * u2);
        let c2 = 1.0 + k_ret * partial;
        let (e1, e2) = (u1 / c1, if k == 0 { 1.0 } else { u2 / c2 });
        let (s1, s2) = (v1 / (c1 * c1), v2 / (c2 * c2));
        let tv = e1 * e1 * s2 + e2 * e2 * s1 + s1 * s2;
        partial += e1 * e2;
        upper_sum += u1 * u2;
        var += tv;
        terms.push(DecompositionTerm { with_self: e1, without_self: e2, stderr: tv.sqrt() });
    }
    let mut rec = EstimateRecord::new(Method::Decomposition, partial, var.sqrt(), 2 * trials_per_point * order.len() as u64, stream)
        .with_param("R", r)
        .with_param("trials_per_point", trials_per_point)
        .with_param("points", order.len() as u64);
    rec.lower = Some((upper_sum * (1.0 - return_bound(D, upper_sum, r)).powi(2)).max(0.0));
    rec.upper = Some(upper_sum);
    Ok((rec, terms))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenMethod {
    MonteCarlo,
    Asymptotic,
}

#[derive(Clone, Debug, Serialize)]
pub struct GreenEstimate {
    pub y: String,
    pub value: f64,
    pub stderr: f64,
    pub trials: u64,
    pub method: GreenMethod,
}

/// Exit radius used by the Monte Carlo Green's function estimate.
pub fn green_exit_radius(norm_y: f64) -> f64 {
    (8.0 * norm_y).max(30.0)
}

/// Green's function `G(0, y)` (expected visits to `y`, time 0 included).
///
/// The Monte Carlo method counts visits before the walk leaves
/// `B(0, R_g)` with `R_g = max(30, 8|y|)` and adds the expected later
/// visits `a_d R_g^{2-d}` (the sphere average of the asymptotic Green's
/// function). The asymptotic method returns `a_d |y|^{2-d}`.
pub fn green_estimate<const D: usize>(y: &LatticePoint<D>, method: GreenMethod, trials: u64, stream: RngStream) -> Result<GreenEstimate> {
    check_dim::<D>()?;
    match method {
        GreenMethod::Asymptotic => {
            if y.is_origin() {
                return Err(invalid("asymptotic Green's function needs y != 0"));
            }
            Ok(GreenEstimate {
                y: y.to_string(),
                value: green_asymptotic(D, y.euclidean_norm()),
                stderr: 0.0,
                trials: 0,
                method,
            })
        }
        GreenMethod::MonteCarlo => {
            if trials == 0 {
                return Err(invalid("trials must be >= 1"));
            }
            let rg = green_exit_radius(y.euclidean_norm());
            let exit2 = (rg * rg).floor() as i64;
            let y = *y;
            let parts = map_blocks(trials, BLOCK, stream, |_, _, len, st| {
                let mut rng = st.rng();
                let mut src = DirectionSource::new(&mut rng);
                let (mut s, mut s2) = (0.0f64, 0.0f64);
                for _ in 0..len {
                    let mut x = LatticePoint::<D>::ORIGIN;
                    let mut n2 = 0i64;
                    let mut v = if y.is_origin() { 1u64 } else { 0 };
                    loop {
                        let dir = src.next(2 * D as u64);
                        let ax = dir >> 1;
                        let sg = if dir & 1 == 0 { 1 } else { -1 };
                        n2 += 2 * sg * x.0[ax] + 1;
                        x.0[ax] += sg;
                        if n2 > exit2 {
                            break;
                        }
                        if x == y {
                            v += 1;
                        }
                    }
                    s += v as f64;
                    s2 += (v * v) as f64;
                }
                (s, s2)
            });
            let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            let n = trials as f64;
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
            Ok(GreenEstimate {
                y: y.to_string(),
                value: mean + green_asymptotic(D, rg),
                stderr: (var / n).sqrt(),
                trials,
                method,
            })
        }
    }
}

/// Uniform lattice site among those within distance 1 of the sphere of
/// radius `rho` about `center`.
pub fn sample_shell<R: RngCore + ?Sized, const D: usize>(rho: f64, center: &[f64; D], rng: &mut R) -> LatticePoint<D> {
    // Draw uniformly from a slightly thicker continuous shell that contains
    // the unit cells of all target sites, round, and keep sites in range.
    let pad = (D as f64).sqrt() / 2.0;
    let r0 = (rho - 1.0 - pad).max(0.0);
    let r1 = rho + 1.0 + pad;
    let (v0, v1) = (r0.powi(D as i32), r1.powi(D as i32));
    loop {
        let u: [f64; D] = unit_vector(rng);
        let rad = (v0 + uniform01(rng) * (v1 - v0)).powf(1.0 / D as f64);
        let mut x = [0.0; D];
        for i in 0..D {
            x[i] = center[i] + rad * u[i];
        }
        let z = LatticePoint::round_from(&x);
        let dist = (0..D).map(|i| (z.0[i] as f64 - center[i]).powi(2)).sum::<f64>().sqrt();
        if (dist - rho).abs() <= 1.0 {
            return z;
        }
    }
}

/// Result of calibrating the truncation constant.
#[derive(Clone, Debug, Serialize)]
pub struct Calibration {
    pub dimension: usize,
    pub analytic: f64,
    pub fitted: f64,
    pub stderr: f64,
    /// `(R, corrected return probability, stderr)` per radius.
    pub points: Vec<(f64, f64, f64)>,
}

/// Fits the return-probability constant: for each radius `R`, walks start
/// on the shell of radius `R` and are killed at `8R`; the kill-corrected
/// probability of hitting the origin is regressed on `R^{2-d}` and the
/// slope divided by `cap({0})` (itself estimated with `R = 200`).
pub fn calibrate_truncation_constant<const D: usize>(radii: &[f64], trials: u64, stream: RngStream) -> Result<Calibration> {
    check_dim::<D>()?;
    if radii.len() < 2 {
        return Err(Error::InsufficientData("calibration needs two radii".into()));
    }
    let origin = PointSet::from_points([LatticePoint::<D>::ORIGIN]);
    let target = SetTarget::new(origin.points());
    let cfg = HittingConfig { kill_factor: 8.0 };
    let mut pts = Vec::new();
    for (i, &r) in radii.iter().enumerate() {
        let (p, se) = hit_probability_from(&target, r, cfg, trials, stream.child(i as u64))?;
        pts.push((r, p, se));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.powi(2 - D as i32)).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let fit = crate::stats::linear_fit(&xs, &ys)?;
    let cap0 = capacity_mc(&origin, 200.0, trials, stream.child(0xca9))?;
    let fitted = fit.slope / cap0.value;
    let stderr = fitted * ((fit.slope_se / fit.slope).powi(2) + (cap0.stderr / cap0.value).powi(2)).sqrt();
    Ok(Calibration { dimension: D, analytic: green_constant(D), fitted, stderr, points: pts })
}

#[cfg(test)]
mod tests {
    use super::*;

    type P3 = LatticePoint<3>;

    #[test]
    fn green_constants() {
        assert!((green_constant(3) - 3.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-14);
        // a_4 = 2 / pi^2 and a_5 = 5 / (4 pi^2).
        assert!((green_constant(4) - 2.0 / std::f64::consts::PI.powi(2)).abs() < 1e-14);
        assert!((green_constant(5) - 5.0 / (4.0 * std::f64::consts::PI.powi(2))).abs() < 1e-14);
    }

    #[test]
    fn closed_unit_ball_never_escapes_from_center() {
        let o = P3::ORIGIN;
        let mut pts = vec![o];
        pts.extend(o.neighbors());
        let set = PointSet::from_points(pts);
        let e = escape_probability_mc(&set, &o, 10.0, 2000, RngStream::new(1, 0)).unwrap();
        assert_eq!(e.upper, 0.0);
        assert_eq!(e.lower, 0.0);
    }

    #[test]
    fn escape_upper_is_monotone_under_shared_streams() {
        let o = P3::ORIGIN;
        let small = PointSet::from_points([o, P3::new([2, 0, 0])]);
        let big = PointSet::from_points([o, P3::new([2, 0, 0]), P3::new([0, 1, 1]), P3::new([-1, 0, 0])]);
        let s = RngStream::new(3, 3);
        let a = escape_probability_mc(&small, &o, 20.0, 20_000, s).unwrap();
        let b = escape_probability_mc(&big, &o, 20.0, 20_000, s).unwrap();
        assert!(b.upper <= a.upper);
        assert!(a.lower <= a.upper && 0.0 <= a.lower);
    }

    #[test]
    fn parameter_errors() {
        let set = PointSet::from_points([P3::ORIGIN, P3::new([3, 0, 0])]);
        let s = RngStream::new(0, 0);
        assert!(escape_probability_mc(&set, &P3::ORIGIN, 10.0, 0, s).is_err());
        assert!(escape_probability_mc(&set, &P3::ORIGIN, 6.0, 10, s).is_err());
        assert!(escape_probability_mc(&set, &P3::new([1, 0, 0]), 10.0, 10, s).is_err());
        assert!(capacity_decomposition_mc(&[P3::ORIGIN, P3::ORIGIN], 10.0, 10, s).is_err());
        assert!(green_estimate(&P3::ORIGIN, GreenMethod::Asymptotic, 0, s).is_err());
        let two = PointSet::from_points([LatticePoint::<2>::ORIGIN]);
        assert!(capacity_mc(&two, 10.0, 10, s).is_err());
    }

    #[test]
    fn singleton_decomposition_is_a_single_escape() {
        let s = RngStream::new(8, 1);
        let (rec, terms) = capacity_decomposition_mc(&[P3::ORIGIN], 40.0, 20_000, s).unwrap();
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].without_self, 1.0);
        let cap = capacity_mc(&PointSet::from_points([P3::ORIGIN]), 40.0, 20_000, s.child(9)).unwrap();
        assert!((rec.value - cap.value).abs() < 4.0 * rec.stderr.hypot(cap.stderr));
    }

    #[test]
    fn shell_samples_lie_in_the_shell() {
        let mut rng = RngStream::new(4, 0).rng();
        for _ in 0..500 {
            let z: P3 = sample_shell(7.3, &[0.5, 0.0, 0.0], &mut rng);
            let d = ((z.0[0] as f64 - 0.5).powi(2) + (z.0[1] as f64).powi(2) + (z.0[2] as f64).powi(2)).sqrt();
            assert!((d - 7.3).abs() <= 1.0);
        }
    }
}
