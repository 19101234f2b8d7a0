use rand::RngCore;

use super::{green_asymptotic, sample_shell, target::Target, EstimateRecord, Method, SausageTarget, SetTarget};
use crate::error::{invalid, Error, Result};
use crate::lattice::{LatticePoint, PointSet};
use crate::parallel::{map_blocks, BLOCK};
use crate::rng::{DirectionSource, RngStream};
use crate::walk::LoopErasedPath;

#[derive(Clone, Copy, Debug)]
pub struct HittingConfig {
    /// Walks are killed at `kill_factor * y_radius` from the target center.
    pub kill_factor: f64,
}

impl Default for HittingConfig {
    fn default() -> Self {
        HittingConfig { kill_factor: 10.0 }
    }
}

/// Integer frame around a target: walks are measured from `c0`, membership
/// is only tested inside `inner2`, and walks die beyond `kill2`.
pub(super) struct Frame<const D: usize> {
    pub c0: LatticePoint<D>,
    pub inner2: i64,
    pub kill2: i64,
}

impl<const D: usize> Frame<D> {
    pub fn new<T: Target<D> + ?Sized>(target: &T, kill: f64) -> Self {
        let (c, r) = target.ball();
        let c0 = LatticePoint::round_from(&c);
        let reach = r + (D as f64).sqrt() / 2.0;
        Frame { c0, inner2: (reach * reach).ceil() as i64, kill2: (kill * kill).floor() as i64 }
    }

    pub fn center(&self) -> [f64; D] {
        self.c0.as_f64()
    }
}

/// Walk from `y` until it hits the target (returns the site) or leaves the
/// kill ball.
#[inline]
pub(super) fn hit_walk<R, T, const D: usize>(
    target: &T,
    fr: &Frame<D>,
    y: LatticePoint<D>,
    src: &mut DirectionSource<'_, R>,
) -> Option<LatticePoint<D>>
where
    R: RngCore + ?Sized,
    T: Target<D> + ?Sized,
{
    let mut rel = y - fr.c0;
    let mut n2 = rel.norm_sq();
    if n2 <= fr.inner2 && target.hits(&y) {
        return Some(y);
    }
    loop {
        let dir = src.next(2 * D as u64);
        let ax = dir >> 1;
        let s = if dir & 1 == 0 { 1 } else { -1 };
        n2 += 2 * s * rel.0[ax] + 1;
        rel.0[ax] += s;
        if n2 <= fr.inner2 {
            let x = rel + fr.c0;
            if target.hits(&x) {
                return Some(x);
            }
        } else if n2 > fr.kill2 {
            return None;
        }
    }
}

struct HitTally {
    hits: u64,
    sum: f64,
    sum_sq: f64,
}

fn tally<T: Target<D>, const D: usize>(target: &T, y_radius: f64, cfg: HittingConfig, trials: u64, stream: RngStream) -> HitTally {
    let fr = Frame::new(target, cfg.kill_factor * y_radius);
    let c = fr.center();
    let parts = map_blocks(trials, BLOCK / 4, stream, |_, _, len, st| {
        let mut rng = st.rng();
        let mut t = HitTally { hits: 0, sum: 0.0, sum_sq: 0.0 };
        for _ in 0..len {
            let y = sample_shell(y_radius, &c, &mut rng);
            let mut src = DirectionSource::new(&mut rng);
            if hit_walk(target, &fr, y, &mut src).is_some() {
                let w = 1.0 / green_asymptotic(D, (y - fr.c0).euclidean_norm());
                t.hits += 1;
                t.sum += w;
                t.sum_sq += w * w;
            }
        }
        t
    });
    parts.into_iter().fold(HitTally { hits: 0, sum: 0.0, sum_sq: 0.0 }, |a, b| HitTally {
        hits: a.hits + b.hits,
        sum: a.sum + b.sum,
        sum_sq: a.sum_sq + b.sum_sq,
    })
}

/// Factor dividing a kill-radius hit probability `p` to account for walks
/// that would return after reaching the kill sphere.
fn kill_correction(d: usize, p: f64, kill_factor: f64) -> f64 {
    1.0 - (1.0 - p) * kill_factor.powi(2 - d as i32)
}

fn check_hitting<T: Target<D>, const D: usize>(target: &T, y_radius: f64, cfg: HittingConfig, trials: u64) -> Result<()> {
    if D < 3 {
        return Err(Error::UnsupportedDimension(D));
    }
    if trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    if !(cfg.kill_factor > 1.0) {
        return Err(invalid("kill factor must exceed 1"));
    }
    let r = target.ball().1;
    if !(y_radius > 2.0 * r) {
        return Err(invalid(format!("y radius {y_radius} must exceed twice the target radius {r}")));
    }
    Ok(())
}

/// Probability that a walk from a uniform start on the sphere of radius
/// `y_radius` ever hits the target, corrected for returns after the kill
/// sphere; returns `(p, stderr)`.
pub fn hit_probability_from<T: Target<D>, const D: usize>(
    target: &T,
    y_radius: f64,
    cfg: HittingConfig,
    trials: u64,
    stream: RngStream,
) -> Result<(f64, f64)> {
    check_hitting(target, y_radius, cfg, trials)?;
    let t = tally(target, y_radius, cfg, trials, stream);
    let p = t.hits as f64 / trials as f64;
    let k = kill_correction(D, p, cfg.kill_factor);
    Ok((p / k, (p * (1.0 - p) / trials as f64).sqrt() / k))
}

/// Far-field capacity `P_y(hit) / G(0, y)` averaged over uniform starts on
/// the sphere of radius `y_radius` about the target.
pub fn capacity_via_hitting_with<T: Target<D>, const D: usize>(
    target: &T,
    y_radius: f64,
    cfg: HittingConfig,
    trials: u64,
    stream: RngStream,
) -> Result<EstimateRecord> {
    check_hitting(target, y_radius, cfg, trials)?;
    let t = tally(target, y_radius, cfg, trials, stream);
    let n = trials as f64;
    let p = t.hits as f64 / n;
    let k = kill_correction(D, p, cfg.kill_factor);
    let mean = t.sum / n;
    let var = ((t.sum_sq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
    Ok(EstimateRecord::new(Method::HittingGreen, mean / k, (var / n).sqrt() / k, trials, stream)
        .with_param("y_radius", y_radius)
        .with_param("kill_factor", cfg.kill_factor)
        .with_param("hits", t.hits))
}

/// [`capacity_via_hitting_with`] on a point set with the default kill factor.
pub fn capacity_via_hitting<const D: usize>(set: &PointSet<D>, y_radius: f64, trials: u64, stream: RngStream) -> Result<EstimateRecord> {
    if set.is_empty() {
        return Err(Error::Empty("capacity set"));
    }
    let target = SetTarget::new(set.points());
    capacity_via_hitting_with(&target, y_radius, HittingConfig::default(), trials, stream)
}

/// Capacity of the `eps`-sausage of a path, by far-field hitting; the
/// sausage is tested by proximity queries and never listed.
pub fn sausage_capacity_mc<const D: usize>(
    eta: &LoopErasedPath<D>,
    eps: f64,
    y_radius: f64,
    trials: u64,
    stream: RngStream,
) -> Result<EstimateRecord> {
    if !(eps >= 0.0) {
        return Err(invalid("eps must be >= 0"));
    }
    let target = SausageTarget::new(eta.points(), eps);
    Ok(capacity_via_hitting_with(&target, y_radius, HittingConfig::default(), trials, stream)?.with_param("eps", eps))
}

/// First site of the target hit by a walk from a uniform start on the
/// sphere of radius `y_radius`, or `None` if the walk reached
/// `10 * y_radius` first. Accepted samples follow the harmonic measure as
/// `y_radius` grows.
pub fn harmonic_measure_sample<R: RngCore + ?Sized, T: Target<D>, const D: usize>(
    target: &T,
    y_radius: f64,
    rng: &mut R,
) -> Result<Option<LatticePoint<D>>> {
    check_hitting(target, y_radius, HittingConfig::default(), 1)?;
    let fr = Frame::new(target, HittingConfig::default().kill_factor * y_radius);
    let y = sample_shell(y_radius, &fr.center(), rng);
    let mut src = DirectionSource::new(rng);
    Ok(hit_walk(target, &fr, y, &mut src))
}
