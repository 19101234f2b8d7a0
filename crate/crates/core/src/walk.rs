//! Simple random walk, chronological loop erasure, cut times, the shift
//! operator and cylinder frequencies.

use rand::RngCore;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::{LatticePoint, SiteMap};
use crate::rng::{uniform_below, DirectionSource};

/// Default multiple of the prefix radius the walk must reach before a
/// sampled LERW prefix is frozen.
pub const DEFAULT_SAFETY_FACTOR: f64 = 3.0;

/// Moves `p` one step in direction `dir` (numbered as in [`LatticePoint::step`]).
#[inline(always)]
pub fn apply_step<const D: usize>(p: &mut LatticePoint<D>, dir: usize) {
    p.0[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
}

/// Moves `p` one uniformly chosen unit step drawn from `src`.
#[inline(always)]
pub fn fast_step<R: RngCore + ?Sized, const D: usize>(p: &mut LatticePoint<D>, src: &mut DirectionSource<'_, R>) {
    apply_step(p, src.next(2 * D as u64));
}

/// Moves `p` one uniformly chosen unit step (one 32-bit draw).
#[inline]
pub fn random_step<R: RngCore + ?Sized, const D: usize>(p: &mut LatticePoint<D>, rng: &mut R) -> usize {
    let dir = uniform_below(rng, 2 * D as u32);
    p.0[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
    dir
}

/// A finite path whose consecutive points are lattice neighbors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NearestNeighborPath<const D: usize> {
    points: Vec<LatticePoint<D>>,
}

impl<const D: usize> NearestNeighborPath<D> {
    pub fn new(points: Vec<LatticePoint<D>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("path"));
        }
        for (i, w) in points.windows(2).enumerate() {
            if (w[1] - w[0]).l1_norm() != 1 {
                return Err(invalid(format!("step {i} of path is not a unit step: {:?} -> {:?}", w[0], w[1])));
            }
        }
        Ok(NearestNeighborPath { points })
    }

    pub fn points(&self) -> &[LatticePoint<D>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<LatticePoint<D>> {
        self.points
    }

    /// Number of steps (one less than the number of points).
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn end(&self) -> LatticePoint<D> {
        *self.points.last().unwrap()
    }

    /// The sub-path `points[a..=b]`.
    pub fn segment(&self, a: usize, b: usize) -> Result<Self> {
        if a > b || b >= self.points.len() {
            return Err(Error::OutOfRange { index: b, limit: self.points.len() });
        }
        Ok(NearestNeighborPath { points: self.points[a..=b].to_vec() })
    }
}

/// A self-avoiding path obtained by loop erasure, with its erasure times.
///
/// `points[i] == source[erasure_times[i]]`, `erasure_times[0] == 0`, and the
/// times are strictly increasing. `source_length` counts the steps of the
/// generating walk that were consumed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoopErasedPath<const D: usize> {
    #[serde(skip)]
    pub points: Vec<LatticePoint<D>>,
    pub erasure_times: Vec<u64>,
    pub source_length: u64,
}

impl<const D: usize> LoopErasedPath<D> {
    pub fn points(&self) -> &[LatticePoint<D>] {
        &self.points
    }

    /// Number of steps of the erased path.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    /// The first `n + 1` points with their erasure times.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n >= self.points.len() {
            return Err(Error::OutOfRange { index: n, limit: self.points.len() });
        }
        Ok(LoopErasedPath {
            points: self.points[..=n].to_vec(),
            erasure_times: self.erasure_times[..=n].to_vec(),
            source_length: self.source_length,
        })
    }

    pub fn as_path(&self) -> NearestNeighborPath<D> {
        NearestNeighborPath { points: self.points.clone() }
    }
}

/// Online chronological loop erasure.
///
/// Keeps the current erased path on a stack together with a site-to-index
/// table; a revisit of a site on the stack truncates the stack to that site.
#[derive(Clone, Debug)]
pub struct LoopEraser<const D: usize> {
    stack: Vec<LatticePoint<D>>,
    times: Vec<u64>,
    index: SiteMap<D, u32>,
    t: u64,
}

impl<const D: usize> LoopEraser<D> {
    pub fn new(start: LatticePoint<D>) -> Self {
        let mut index = SiteMap::new();
        index.insert(start, 0);
        LoopEraser { stack: vec![start], times: vec![0], index, t: 0 }
    }

    /// Appends the next walk position, which must neighbor the current tip.
    #[inline]
    pub fn push(&mut self, p: LatticePoint<D>) {
        self.t += 1;
        match self.index.get(&p) {
            Some(&i) => self.truncate(i as usize + 1),
            None => {
                self.index.insert(p, self.stack.len() as u32);
                self.stack.push(p);
                self.times.push(self.t);
            }
        }
    }

    /// Drops everything above position `len - 1`.
    pub fn truncate(&mut self, len: usize) {
        while self.stack.len() > len {
            let q = self.stack.pop().unwrap();
            self.times.pop();
            self.index.remove(&q);
        }
    }

    /// Records `k` walk steps that were not pushed (they provably did not
    /// touch the stored path).
    pub fn advance_time(&mut self, k: u64) {
        self.t += k;
    }

    /// Walk time of the last pushed position.
    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.stack.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stack.is_empty()
    }

    pub fn tip(&self) -> LatticePoint<D> {
        *self.stack.last().unwrap()
    }

    pub fn points(&self) -> &[LatticePoint<D>] {
        &self.stack
    }

    pub fn position(&self, p: &LatticePoint<D>) -> Option<usize> {
        self.index.get(p).map(|&i| i as usize)
    }

    pub fn finish(self) -> LoopErasedPath<D> {
        LoopErasedPath { points: self.stack, erasure_times: self.times, source_length: self.t }
    }

    /// Copy of the first `n + 1` points as a path.
    pub fn prefix_path(&self, n: usize) -> LoopErasedPath<D> {
        let k = (n + 1).min(self.stack.len());
        LoopErasedPath {
            points: self.stack[..k].to_vec(),
            erasure_times: self.times[..k].to_vec(),
            source_length: self.t,
        }
    }

    fn finish_prefix(mut self, n: usize) -> LoopErasedPath<D> {
        self.stack.truncate(n + 1);
        self.times.truncate(n + 1);
        self.finish()
    }
}

/// Simple random walk of `n_steps` steps from the origin, one draw per step.
pub fn srw_sample<R: RngCore + ?Sized, const D: usize>(n_steps: usize, rng: &mut R) -> NearestNeighborPath<D> {
    let mut points = Vec::with_capacity(n_steps + 1);
    let mut p = LatticePoint::<D>::ORIGIN;
    points.push(p);
    for _ in 0..n_steps {
        random_step(&mut p, rng);
        points.push(p);
    }
    NearestNeighborPath { points }
}

/// Chronological loop erasure of a finite path.
pub fn loop_erase<const D: usize>(omega: &NearestNeighborPath<D>) -> LoopErasedPath<D> {
    let pts = omega.points();
    let mut le = LoopEraser::new(pts[0]);
    for &p in &pts[1..] {
        le.push(p);
    }
    le.finish()
}

/// Loop erasure of a raw point sequence (unit steps are not checked).
pub fn loop_erase_points<const D: usize>(pts: &[LatticePoint<D>]) -> Result<LoopErasedPath<D>> {
    let (&first, rest) = pts.split_first().ok_or(Error::Empty("path"))?;
    let mut le = LoopEraser::new(first);
    for &p in rest {
        le.push(p);
    }
    Ok(le.finish())
}

/// Samples the first `target_len` steps of the loop erasure of an infinite
/// simple random walk (d >= 3) with [`DEFAULT_SAFETY_FACTOR`].
pub fn lerw_sample<R: RngCore + ?Sized, const D: usize>(target_len: usize, rng: &mut R) -> Result<LoopErasedPath<D>> {
    lerw_sample_with(target_len, DEFAULT_SAFETY_FACTOR, rng)
}

/// As [`lerw_sample`], with an explicit safety factor.
///
/// The walk is run until its loop erasure has `target_len + 1` points. The
/// prefix is frozen only after the walk has gone beyond `safety_factor`
/// times the prefix radius without touching it; if it does touch it, the
/// erasure shrinks and growth resumes. Later returns from that distance
/// could still erase the prefix; that residual truncation bias is of order
/// `safety_factor^(2-d)`.
pub fn lerw_sample_with<R: RngCore + ?Sized, const D: usize>(
    target_len: usize,
    safety_factor: f64,
    rng: &mut R,
) -> Result<LoopErasedPath<D>> {
    if D < 3 {
        return Err(Error::UnsupportedDimension(D));
    }
    if target_len < 1 {
        return Err(invalid("target_len must be >= 1"));
    }
    if !(safety_factor >= 1.0) {
        return Err(invalid(format!("safety_factor must be >= 1, got {safety_factor}")));
    }
    let mut src = DirectionSource::new(rng);
    let mut le = LoopEraser::new(LatticePoint::<D>::ORIGIN);
    let mut pos = LatticePoint::<D>::ORIGIN;
    loop {
        while le.len() < target_len + 1 {
            fast_step(&mut pos, &mut src);
            le.push(pos);
        }
        le.truncate(target_len + 1);
        let r2 = le.points().iter().map(|p| p.norm_sq()).max().unwrap_or(0);
        let exit2 = safety_factor * safety_factor * r2 as f64;
        let mut hit = None;
        let mut steps = 0u64;
        while (pos.norm_sq() as f64) <= exit2 {
            fast_step(&mut pos, &mut src);
            steps += 1;
            if pos.norm_sq() <= r2 {
                if let Some(i) = le.position(&pos) {
                    hit = Some(i);
                    break;
                }
            }
        }
        le.advance_time(steps);
        match hit {
            None => return Ok(le.finish_prefix(target_len)),
            Some(i) => le.truncate(i + 1),
        }
    }
}

/// `rho_j = max { i : l_i <= j }`, the number of points kept up to walk time `j`.
pub fn erasure_counts<const D: usize>(lep: &LoopErasedPath<D>, j: u64) -> Result<usize> {
    if j > lep.source_length {
        return Err(Error::OutOfRange { index: j as usize, limit: lep.source_length as usize });
    }
    Ok(lep.erasure_times.partition_point(|&l| l <= j) - 1)
}

/// All `n` with `points[0..=n]` disjoint from `points[n+1..]`.
pub fn cut_times<const D: usize>(omega: &NearestNeighborPath<D>) -> Vec<usize> {
    cut_times_points(omega.points())
}

pub fn cut_times_points<const D: usize>(pts: &[LatticePoint<D>]) -> Vec<usize> {
    let mut last: SiteMap<D, usize> = SiteMap::with_capacity(pts.len());
    for (i, p) in pts.iter().enumerate() {
        last.insert(*p, i);
    }
    let mut out = Vec::new();
    let mut reach = 0usize;
    for (n, p) in pts.iter().enumerate() {
        reach = reach.max(last.get(p).copied().unwrap_or(n));
        if reach <= n {
            out.push(n);
        }
    }
    out
}

/// The shifted path `i -> omega(i + k) - omega(k)`.
pub fn shift<const D: usize>(omega: &NearestNeighborPath<D>, k: usize) -> Result<NearestNeighborPath<D>> {
    let pts = omega.points();
    if k >= pts.len() {
        return Err(Error::OutOfRange { index: k, limit: pts.len() });
    }
    let base = pts[k];
    Ok(NearestNeighborPath { points: pts[k..].iter().map(|&p| p - base).collect() })
}

/// Step directions of a path, numbered as in [`LatticePoint::step`].
pub fn directions<const D: usize>(pts: &[LatticePoint<D>]) -> Result<Vec<u8>> {
    pts.windows(2)
        .map(|w| {
            w[0].direction_to(&w[1])
                .map(|d| d as u8)
                .ok_or_else(|| invalid("path has a non-unit step"))
        })
        .collect()
}

/// Fraction of `k` in `0..=n` for which the shifted window `eta[k..=k+m]`,
/// re-rooted at the origin, equals `xi` (with `m` the number of steps of `xi`).
pub fn cylinder_frequency<const D: usize>(eta: &[LatticePoint<D>], xi: &[LatticePoint<D>], n: usize) -> Result<f64> {
    if xi.is_empty() || !xi[0].is_origin() {
        return Err(invalid("cylinder path must start at the origin"));
    }
    let m = xi.len() - 1;
    if eta.len() < n + m + 1 {
        return Err(Error::InsufficientData(format!(
            "path has {} points, need {} for n={n}, m={m}",
            eta.len(),
            n + m + 1
        )));
    }
    let want = directions(xi)?;
    let have = directions(&eta[..n + m + 1])?;
    let hits = (0..=n).filter(|&k| have[k..k + m] == want[..]).count();
    Ok(hits as f64 / (n + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    type P3 = LatticePoint<3>;

    fn e(i: usize) -> P3 {
        P3::unit(i, true)
    }

    fn path(pts: Vec<P3>) -> NearestNeighborPath<3> {
        NearestNeighborPath::new(pts).unwrap()
    }

    /// Literal evaluation of the inductive definition: l_0 = 0 and
    /// l_{i+1} = 1 + max { k : omega_k = omega_{l_i} }, stopping when that
    /// max is the final index.
    fn reference_loop_erase<const D: usize>(w: &[LatticePoint<D>]) -> (Vec<LatticePoint<D>>, Vec<u64>) {
        let mut pts = vec![w[0]];
        let mut ls = vec![0u64];
        let mut l = 0usize;
        loop {
            let m = (0..w.len()).rev().find(|&k| w[k] == w[l]).unwrap();
            if m + 1 >= w.len() {
                break;
            }
            l = m + 1;
            pts.push(w[l]);
            ls.push(l as u64);
        }
        (pts, ls)
    }

    fn reference_cut_times(w: &[P3]) -> Vec<usize> {
        (0..w.len())
            .filter(|&n| w[..=n].iter().all(|p| !w[n + 1..].contains(p)))
            .collect()
    }

    #[test]
    fn loop_erase_examples() {
        let o = P3::ORIGIN;
        let lep = loop_erase(&path(vec![o, e(0), e(0) + e(1)]));
        assert_eq!(lep.points, vec![o, e(0), e(0) + e(1)]);
        assert_eq!(lep.erasure_times, vec![0, 1, 2]);

        let lep = loop_erase(&path(vec![o, e(0), o, e(1)]));
        assert_eq!(lep.points, vec![o, e(1)]);
        assert_eq!(lep.erasure_times, vec![0, 3]);
        assert_eq!(lep.source_length, 3);
        assert_eq!(erasure_counts(&lep, 0).unwrap(), 0);
        assert_eq!(erasure_counts(&lep, 2).unwrap(), 0);
        assert_eq!(erasure_counts(&lep, 3).unwrap(), 1);
        assert!(erasure_counts(&lep, 4).is_err());
    }

    #[test]
    fn empty_and_broken_paths_are_rejected() {
        assert!(NearestNeighborPath::<3>::new(vec![]).is_err());
        assert!(NearestNeighborPath::new(vec![P3::ORIGIN, P3::new([1, 1, 0])]).is_err());
        assert!(loop_erase_points::<3>(&[]).is_err());
    }

    #[test]
    fn cut_time_examples() {
        let o = P3::ORIGIN;
        assert_eq!(cut_times(&path(vec![o, e(0), o, e(1)])), vec![2, 3]);
        let straight: Vec<P3> = (0..6).map(|i| P3::new([i, 0, 0])).collect();
        assert_eq!(cut_times(&path(straight)), (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn shift_examples() {
        let o = P3::ORIGIN;
        let w = path(vec![o, e(0), e(0) + e(1)]);
        assert_eq!(shift(&w, 1).unwrap().points(), &[o, e(1)]);
        assert_eq!(shift(&w, 0).unwrap(), w);
        assert_eq!(shift(&w, 2).unwrap().points(), &[o]);
        assert!(shift(&w, 3).is_err());
    }

    #[test]
    fn srw_basics() {
        let s = RngStream::new(3, 1);
        let p0: NearestNeighborPath<3> = srw_sample(0, &mut s.rng());
        assert_eq!(p0.points(), &[P3::ORIGIN]);
        let a: NearestNeighborPath<4> = srw_sample(500, &mut s.rng());
        let b: NearestNeighborPath<4> = srw_sample(500, &mut s.rng());
        assert_eq!(a, b);
        assert_eq!(a.steps(), 500);
        assert!(NearestNeighborPath::new(a.points().to_vec()).is_ok());
    }

    #[test]
    fn step_directions_are_uniform() {
        // Pearson chi-square against the uniform law on 6 directions; the
        // 4-sigma cut for chi2(5) is about 5 + 4*sqrt(10).
        let mut rng = RngStream::new(12, 0).rng();
        let mut counts = [0u64; 6];
        let mut p = P3::ORIGIN;
        let n = 1_000_000u64;
        for _ in 0..n {
            counts[random_step(&mut p, &mut rng)] += 1;
        }
        let expect = n as f64 / 6.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        assert!(chi2 < 5.0 + 4.0 * 10f64.sqrt(), "chi2 = {chi2}");
    }

    #[test]
    fn lerw_first_step_and_self_avoidance() {
        let s = RngStream::new(5, 0);
        let mut counts = [0u32; 6];
        let trials = 6000;
        for t in 0..trials {
            let lep: LoopErasedPath<3> = lerw_sample(1, &mut s.child(t).rng()).unwrap();
            assert_eq!(lep.points.len(), 2);
            let dir = P3::ORIGIN.direction_to(&lep.points[1]).unwrap();
            counts[dir] += 1;
        }
        let expect = trials as f64 / 6.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        assert!(chi2 < 5.0 + 4.0 * 10f64.sqrt(), "chi2 = {chi2}");

        let lep: LoopErasedPath<3> = lerw_sample(400, &mut s.rng()).unwrap();
        assert_eq!(lep.points.len(), 401);
        let set: std::collections::HashSet<_> = lep.points.iter().collect();
        assert_eq!(set.len(), 401);
        assert!(NearestNeighborPath::new(lep.points.clone()).is_ok());
        assert_eq!(lep.erasure_times[0], 0);
        assert!(lep.erasure_times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(erasure_counts(&lep, lep.source_length).unwrap(), 400);
    }

    #[test]
    fn lerw_rejects_bad_parameters() {
        let mut r = RngStream::new(0, 0).rng();
        assert!(lerw_sample::<_, 3>(0, &mut r).is_err());
        assert!(lerw_sample::<_, 2>(5, &mut r).is_err());
        assert!(lerw_sample_with::<_, 3>(5, 0.5, &mut r).is_err());
    }

    #[test]
    fn cylinder_frequency_partition() {
        let mut rng = RngStream::new(8, 2).rng();
        let lep: LoopErasedPath<3> = lerw_sample(300, &mut rng).unwrap();
        let n = 250;
        let o = P3::ORIGIN;
        assert_eq!(cylinder_frequency(&lep.points, &[o], n).unwrap(), 1.0);
        let total: f64 = o
            .neighbors()
            .into_iter()
            .map(|q| cylinder_frequency(&lep.points, &[o, q], n).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(cylinder_frequency(&lep.points, &[o, e(0)], 300).is_err());
        assert!(cylinder_frequency(&lep.points, &[e(0)], 10).is_err());
    }

    fn arb_walk(max_len: usize) -> impl Strategy<Value = Vec<P3>> {
        prop::collection::vec(0usize..6, 0..max_len).prop_map(|dirs| {
            let mut p = P3::ORIGIN;
            let mut v = vec![p];
            for d in dirs {
                p = p.step(d);
                v.push(p);
            }
            v
        })
    }

    proptest! {
        #[test]
        fn online_erasure_matches_reference(w in arb_walk(300)) {
            let lep = loop_erase(&path(w.clone()));
            let (pts, ls) = reference_loop_erase(&w);
            prop_assert_eq!(&lep.points, &pts);
            prop_assert_eq!(&lep.erasure_times, &ls);
            for (i, &l) in lep.erasure_times.iter().enumerate() {
                prop_assert_eq!(w[l as usize], lep.points[i]);
            }
        }

        #[test]
        fn erasure_is_idempotent(w in arb_walk(300)) {
            let once = loop_erase(&path(w));
            let twice = loop_erase(&once.as_path());
            prop_assert_eq!(twice.points, once.points);
        }

        #[test]
        fn erasure_counts_are_monotone(w in arb_walk(200)) {
            let lep = loop_erase(&path(w));
            let rho: Vec<usize> = (0..=lep.source_length).map(|j| erasure_counts(&lep, j).unwrap()).collect();
            prop_assert!(rho.windows(2).all(|r| r[0] <= r[1]));
            prop_assert_eq!(*rho.last().unwrap(), lep.points.len() - 1);
        }

        #[test]
        fn cut_times_match_reference(w in arb_walk(120)) {
            let got = cut_times(&path(w.clone()));
            prop_assert_eq!(got.last().copied(), Some(w.len() - 1));
            prop_assert_eq!(got, reference_cut_times(&w));
        }

        #[test]
        fn erasure_splits_at_cut_times(w in arb_walk(300)) {
            let full = loop_erase(&path(w.clone())).points;
            for c in cut_times(&path(w.clone())) {
                let mut joined = loop_erase_points(&w[..=c]).unwrap().points;
                let tail = loop_erase_points(&w[c..]).unwrap().points;
                joined.extend_from_slice(&tail[1..]);
                prop_assert_eq!(&joined, &full);
            }
        }

        #[test]
        fn shift_is_a_semigroup(w in arb_walk(50), a in 0usize..10, b in 0usize..10) {
            let p = path(w);
            prop_assume!(a + b < p.points().len());
            let lhs = shift(&shift(&p, a).unwrap(), b).unwrap();
            prop_assert_eq!(lhs, shift(&p, a + b).unwrap());
        }
    }
}
