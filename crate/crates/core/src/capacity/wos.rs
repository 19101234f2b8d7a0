//! Accelerated hitting walks.
//!
//! Far from the target a walk jumps to a uniform point on the largest
//! sphere that certainly misses the target (rounded to the lattice); close
//! to it, ordinary lattice steps are taken. Beyond `far_factor` times the
//! landing sphere, the walk returns with the ball hitting probability
//! `(s / r)^{d-2}` and re-enters through the exterior Poisson kernel.
//! This trades exact lattice dynamics at large scales for Brownian ones and
//! is validated against the plain lattice estimators in the tests.

use rand::RngCore;

use super::{green_asymptotic, sample_shell, target::Target, EstimateRecord, Method};
use crate::error::{invalid, Error, Result};
use crate::lattice::LatticePoint;
use crate::parallel::{map_blocks, BLOCK};
use crate::rng::{uniform01, unit_vector, DirectionSource, RngStream};

#[derive(Clone, Copy, Debug)]
pub struct WosConfig {
    /// Jump only when the distance lower bound is at least this.
    pub jump_threshold: f64,
    /// Minimum radius of the re-entry sphere.
    pub min_sphere: f64,
    /// Escape test radius as a multiple of the re-entry sphere.
    pub far_factor: f64,
}

impl Default for WosConfig {
    fn default() -> Self {
        WosConfig { jump_threshold: 8.0, min_sphere: 16.0, far_factor: 2.0 }
    }
}

struct Geometry<const D: usize> {
    c: [f64; D],
    s: f64,
    far: f64,
}

impl<const D: usize> Geometry<D> {
    fn new<T: Target<D> + ?Sized>(target: &T, cfg: &WosConfig) -> Self {
        let (c, r) = target.ball();
        let c = LatticePoint::<D>::round_from(&c).as_f64();
        let s = (r + (D as f64).sqrt() + 1.0).max(cfg.min_sphere);
        Geometry { c, s, far: cfg.far_factor * s }
    }

    fn dist(&self, x: &LatticePoint<D>) -> f64 {
        (0..D).map(|i| (x.0[i] as f64 - self.c[i]).powi(2)).sum::<f64>().sqrt()
    }
}

fn check_cfg(cfg: &WosConfig) -> Result<()> {
    if !(cfg.jump_threshold >= 4.0) || !(cfg.far_factor > 1.0) || !(cfg.min_sphere > 0.0) {
        return Err(invalid("walk-on-spheres parameters out of range"));
    }
    Ok(())
}

/// Re-entry point on the sphere of radius `g.s` for a walk at distance
/// `dx` from the center.
fn land<R: RngCore + ?Sized, const D: usize>(g: &Geometry<D>, x: &LatticePoint<D>, dx: f64, rng: &mut R) -> LatticePoint<D> {
    let xf = x.as_f64();
    loop {
        let u: [f64; D] = unit_vector(rng);
        let mut y = [0.0; D];
        for i in 0..D {
            y[i] = g.c[i] + g.s * u[i];
        }
        let dxy = (0..D).map(|i| (xf[i] - y[i]).powi(2)).sum::<f64>().sqrt();
        if uniform01(rng) < ((dx - g.s) / dxy).powi(D as i32) {
            return LatticePoint::round_from(&y);
        }
    }
}

/// Whether the walk from `start` ever hits the target.
fn wos_walk<R, T, const D: usize>(target: &T, g: &Geometry<D>, cfg: &WosConfig, start: LatticePoint<D>, rng: &mut R) -> bool
where
    R: RngCore + ?Sized,
    T: Target<D> + ?Sized,
{
    let mut x = start;
    let mut src = DirectionSource::new(rng);
    loop {
        if target.hits(&x) {
            return true;
        }
        let dx = g.dist(&x);
        if dx >= g.far {
            let r = src.rng();
            if uniform01(r) >= (g.s / dx).powi(D as i32 - 2) {
                return false;
            }
            x = land(g, &x, dx, r);
            continue;
        }
        let lb = target.lower_bound(&x);
        if lb >= cfg.jump_threshold {
            let u: [f64; D] = unit_vector(src.rng());
            let rad = lb - 2.0;
            let mut y = x.as_f64();
            for i in 0..D {
                y[i] += rad * u[i];
            }
            x = LatticePoint::round_from(&y);
            continue;
        }
        // No site of the target is reachable in fewer than `lb` steps.
        let m = if lb >= 2.0 { lb as usize - 1 } else { 1 };
        for _ in 0..m {
            let dir = src.next(2 * D as u64);
            x.0[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
        }
    }
}

/// Capacity from hitting probabilities of accelerated walks started
/// uniformly on the sphere of radius `y_radius`, divided by `G(0, y)`.
pub fn capacity_wos<T: Target<D>, const D: usize>(
    target: &T,
    y_radius: f64,
    cfg: WosConfig,
    trials: u64,
    stream: RngStream,
) -> Result<EstimateRecord> {
    if D < 3 {
        return Err(Error::UnsupportedDimension(D));
    }
    check_cfg(&cfg)?;
    if trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    let r = target.ball().1;
    if !(y_radius > 2.0 * r) {
        return Err(invalid(format!("y radius {y_radius} must exceed twice the target radius {r}")));
    }
    let g = Geometry::new(target, &cfg);
    let c0 = LatticePoint::<D>::round_from(&g.c);
    let parts = map_blocks(trials, BLOCK / 8, stream, |_, _, len, st| {
        let mut rng = st.rng();
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..len {
            let y = sample_shell(y_radius, &g.c, &mut rng);
            if wos_walk(target, &g, &cfg, y, &mut rng) {
                let w = 1.0 / green_asymptotic(D, (y - c0).euclidean_norm());
                s += w;
                s2 += w * w;
            }
        }
        (s, s2)
    });
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = trials as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
    Ok(EstimateRecord::new(Method::WalkOnSpheres, mean, (var / n).sqrt(), trials, stream)
        .with_param("y_radius", y_radius)
        .with_param("jump_threshold", cfg.jump_threshold)
        .with_param("min_sphere", cfg.min_sphere))
}

/// Probability that a walk from `z` never hits the target; `(p, stderr)`.
pub fn avoidance_probability_wos<T: Target<D>, const D: usize>(
    target: &T,
    z: &LatticePoint<D>,
    cfg: WosConfig,
    trials: u64,
    stream: RngStream,
) -> Result<(f64, f64)> {
    if D < 3 {
        return Err(Error::UnsupportedDimension(D));
    }
    check_cfg(&cfg)?;
    if trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    let g = Geometry::new(target, &cfg);
    let z = *z;
    let hits: u64 = map_blocks(trials, BLOCK / 8, stream, |_, _, len, st| {
        let mut rng = st.rng();
        (0..len).filter(|_| wos_walk(target, &g, &cfg, z, &mut rng)).count() as u64
    })
    .into_iter()
    .sum();
    let p = 1.0 - hits as f64 / trials as f64;
    Ok((p, (p * (1.0 - p) / trials as f64).sqrt()))
}
