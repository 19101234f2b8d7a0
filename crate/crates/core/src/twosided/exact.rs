//! Acceptance probability of the pure-horizon rejection rule: both walks
//! take exactly `h` steps and the pair is accepted when
//! `LE(S_1)[1, .]` and `S_2[1, h]` are disjoint.

use rand::RngCore;
use rustc_hash::FxHashMap;

use crate::error::{invalid, Result};
use crate::lattice::{LatticePoint, SiteSet};
use crate::parallel::{map_blocks, BLOCK};
use crate::rng::{uniform_below, RngStream};
use crate::walk::loop_erase_points;

/// The acceptance predicate on two walks from the origin.
pub fn accepts_pure<const D: usize>(s1: &[LatticePoint<D>], s2: &[LatticePoint<D>]) -> bool {
    let Ok(le) = loop_erase_points(s1) else {
        return true;
    };
    let avoid: SiteSet<D> = le.points().iter().skip(1).copied().collect();
    !s2.iter().skip(1).any(|p| avoid.contains(p))
}

fn walk_from_code<const D: usize>(mut code: u64, h: usize) -> Vec<LatticePoint<D>> {
    let mut p = LatticePoint::<D>::ORIGIN;
    let mut v = Vec::with_capacity(h + 1);
    v.push(p);
    for _ in 0..h {
        p = p.step((code % (2 * D as u64)) as usize);
        code /= 2 * D as u64;
        v.push(p);
    }
    v
}

fn walk_count<const D: usize>(h: usize, limit: u64) -> Result<u64> {
    (2 * D as u64)
        .checked_pow(h as u32)
        .filter(|&n| n <= limit)
        .ok_or_else(|| invalid(format!("horizon {h} too large for exhaustive enumeration")))
}

/// Exact acceptance probability by enumerating every pair of walks.
pub fn acceptance_exact_bruteforce<const D: usize>(h: usize) -> Result<f64> {
    let n = walk_count::<D>(h, 1 << 14)?;
    let walks: Vec<_> = (0..n).map(|c| walk_from_code::<D>(c, h)).collect();
    let mut acc = 0u64;
    for s1 in &walks {
        let le = loop_erase_points(s1)?;
        let avoid: SiteSet<D> = le.points().iter().skip(1).copied().collect();
        acc += walks.iter().filter(|s2| !s2.iter().skip(1).any(|p| avoid.contains(p))).count() as u64;
    }
    Ok(acc as f64 / (n as f64 * n as f64))
}

/// Relabels axes in order of first use and flips each so that its first
/// use is positive. Two nearest-neighbor paths from the origin related by
/// a lattice symmetry get the same image.
pub fn canonicalize<const D: usize>(pts: &[LatticePoint<D>]) -> Vec<LatticePoint<D>> {
    let mut map: [Option<(usize, i64)>; D] = [None; D];
    let mut next = 0;
    for p in pts {
        for ax in 0..D {
            if p.0[ax] != 0 && map[ax].is_none() {
                map[ax] = Some((next, p.0[ax].signum()));
                next += 1;
            }
        }
    }
    pts.iter()
        .map(|p| {
            let mut q = [0i64; D];
            for ax in 0..D {
                if let Some((na, s)) = map[ax] {
                    q[na] = s * p.0[ax];
                }
            }
            LatticePoint(q)
        })
        .collect()
}

/// Number of `h`-step walks from the origin avoiding `avoid` at times `1..=h`.
fn avoiding_walks<const D: usize>(avoid: &SiteSet<D>, h: usize) -> u64 {
    let mut layer: FxHashMap<LatticePoint<D>, u64> = FxHashMap::default();
    layer.insert(LatticePoint::ORIGIN, 1);
    for _ in 0..h {
        let mut next: FxHashMap<LatticePoint<D>, u64> = FxHashMap::default();
        for (p, &c) in &layer {
            for dir in 0..2 * D {
                let q = p.step(dir);
                if !avoid.contains(&q) {
                    *next.entry(q).or_insert(0) += c;
                }
            }
        }
        layer = next;
    }
    layer.values().sum()
}

/// Exact acceptance probability: first walks are grouped by the symmetry
/// class of their loop erasure and the avoiding second walks are counted
/// once per class.
pub fn acceptance_exact<const D: usize>(h: usize) -> Result<f64> {
    let n = walk_count::<D>(h, 1 << 27)?;
    let mut classes: FxHashMap<Vec<LatticePoint<D>>, u64> = FxHashMap::default();
    for c in 0..n {
        let le = loop_erase_points(&walk_from_code::<D>(c, h))?;
        *classes.entry(canonicalize(&le.points()[1..])).or_insert(0) += 1;
    }
    let mut acc: u128 = 0;
    for (set, mult) in &classes {
        let avoid: SiteSet<D> = set.iter().copied().collect();
        acc += *mult as u128 * avoiding_walks(&avoid, h) as u128;
    }
    Ok(acc as f64 / (n as f64 * n as f64))
}

/// One pure-horizon trial.
pub fn acceptance_trial<R: RngCore + ?Sized, const D: usize>(h: usize, rng: &mut R) -> bool {
    let walk = |rng: &mut R| {
        let mut p = LatticePoint::<D>::ORIGIN;
        let mut v = Vec::with_capacity(h + 1);
        v.push(p);
        for _ in 0..h {
            p = p.step(uniform_below(rng, 2 * D as u32));
            v.push(p);
        }
        v
    };
    let s1 = walk(rng);
    let s2 = walk(rng);
    accepts_pure(&s1, &s2)
}

/// Monte Carlo acceptance rate of the pure-horizon rule; `(p, stderr)`.
pub fn acceptance_mc<const D: usize>(h: usize, trials: u64, stream: RngStream) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    let acc: u64 = map_blocks(trials, BLOCK, stream, |_, _, len, st| {
        let mut rng = st.rng();
        (0..len).filter(|_| acceptance_trial::<_, D>(h, &mut rng)).count() as u64
    })
    .into_iter()
    .sum();
    let p = acc as f64 / trials as f64;
    Ok((p, (p * (1.0 - p) / trials as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_step_acceptance_is_exact() {
        // S_2 must avoid the single point LE(S_1)(1): probability 1 - 1/(2d).
        assert!((acceptance_exact_bruteforce::<5>(1).unwrap() - 0.9).abs() < 1e-15);
        assert!((acceptance_exact::<5>(1).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn canonical_form_is_symmetry_invariant() {
        let p = vec![LatticePoint([0, 1, 0]), LatticePoint([0, 1, -1]), LatticePoint([1, 1, -1])];
        let q: Vec<_> = p.iter().map(|x| LatticePoint([-x.0[2], x.0[0], -x.0[1]])).collect();
        assert_eq!(canonicalize(&p), canonicalize(&q));
        assert_eq!(canonicalize(&p)[0], LatticePoint([1, 0, 0]));
    }

    #[test]
    fn too_long_horizons_are_rejected() {
        assert!(acceptance_exact_bruteforce::<5>(5).is_err());
        assert!(acceptance_exact::<5>(9).is_err());
    }
}
