use rustc_hash::FxHashMap;

use super::{LatticePoint, SiteSet};

/// Sets up to this size answer distance queries by direct scan.
const SMALL: usize = 24;

/// Multi-resolution occupancy index over a finite point set.
///
/// Level `k` records which cells of side `2^k` contain a member. If the
/// `3^D` block of level-`k` cells around `x` is empty, every member is at
/// distance greater than `2^k` from `x`; this gives cheap distance lower
/// bounds for walk-on-spheres style jumps. Optionally, member indices are
/// bucketed at one level so that "is some member within `eps`" queries
/// touch only nearby points.
#[derive(Clone, Debug)]
pub struct SpatialIndex<const D: usize> {
    points: Vec<LatticePoint<D>>,
    levels: Vec<SiteSet<D>>,
    buckets: Option<(u32, FxHashMap<LatticePoint<D>, Vec<u32>>)>,
    center: [f64; D],
    radius: f64,
}

#[inline]
fn cell<const D: usize>(p: &LatticePoint<D>, k: u32) -> LatticePoint<D> {
    LatticePoint(p.0.map(|c| c >> k))
}

/// Calls `f` on every cell in the `3^D` block around `c`; stops early when
/// `f` returns true and reports whether it did.
#[inline]
fn any_in_block<const D: usize>(c: &LatticePoint<D>, mut f: impl FnMut(&LatticePoint<D>) -> bool) -> bool {
    let mut off = [-1i64; D];
    loop {
        let mut q = *c;
        for i in 0..D {
            q.0[i] += off[i];
        }
        if f(&q) {
            return true;
        }
        let mut i = 0;
        loop {
            if i == D {
                return false;
            }
            off[i] += 1;
            if off[i] <= 1 {
                break;
            }
            off[i] = -1;
            i += 1;
        }
    }
}

impl<const D: usize> SpatialIndex<D> {
    /// Builds the occupancy levels. Repeated points are harmless.
    pub fn new(points: &[LatticePoint<D>]) -> Self {
        let mut lo = [i64::MAX; D];
        let mut hi = [i64::MIN; D];
        for p in points {
            for i in 0..D {
                lo[i] = lo[i].min(p.0[i]);
                hi[i] = hi[i].max(p.0[i]);
            }
        }
        let extent = (0..D).map(|i| hi[i].saturating_sub(lo[i])).max().unwrap_or(0).max(1);
        let top = 64 - (extent as u64).leading_zeros() + 1;
        let mut levels = Vec::with_capacity(top as usize + 1);
        for k in 0..=top {
            let mut s = SiteSet::with_capacity(points.len() >> k.min(8));
            for p in points {
                s.insert(cell(p, k));
            }
            levels.push(s);
        }
        let mut center = [0.0; D];
        if !points.is_empty() {
            for i in 0..D {
                center[i] = 0.5 * (lo[i] as f64 + hi[i] as f64);
            }
        }
        let radius = points
            .iter()
            .map(|p| (0..D).map(|i| (p.0[i] as f64 - center[i]).powi(2)).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt();
        SpatialIndex {
            points: points.to_vec(),
            levels,
            buckets: None,
            center,
            radius,
        }
    }

    /// Adds point buckets sized for proximity queries at radius `eps`.
    pub fn with_buckets(mut self, eps: f64) -> Self {
        let mut k = 0u32;
        while ((1u64 << k) as f64) < eps && k < 62 {
            k += 1;
        }
        let mut map: FxHashMap<LatticePoint<D>, Vec<u32>> = FxHashMap::default();
        for (i, p) in self.points.iter().enumerate() {
            map.entry(cell(p, k)).or_default().push(i as u32);
        }
        self.buckets = Some((k, map));
        self
    }

    pub fn points(&self) -> &[LatticePoint<D>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Center of the bounding box.
    pub fn center(&self) -> &[f64; D] {
        &self.center
    }

    /// Radius of the smallest ball about [`Self::center`] holding every member.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    #[inline]
    pub fn contains(&self, p: &LatticePoint<D>) -> bool {
        self.levels[0].contains(p)
    }

    #[inline]
    fn block_empty(&self, x: &LatticePoint<D>, k: u32) -> bool {
        let lvl = &self.levels[k as usize];
        !any_in_block(&cell(x, k), |q| lvl.contains(q))
    }

    pub fn distance_to_center(&self, x: &LatticePoint<D>) -> f64 {
        (0..D)
            .map(|i| (x.0[i] as f64 - self.center[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// A lower bound on the Euclidean distance from `x` to the set.
    /// Exact zero on members; at least 1 elsewhere.
    pub fn distance_lower_bound(&self, x: &LatticePoint<D>) -> f64 {
        if self.points.is_empty() {
            return f64::INFINITY;
        }
        if self.points.len() <= SMALL {
            return self.distance(x);
        }
        if self.contains(x) {
            return 0.0;
        }
        let far = self.distance_to_center(x) - self.radius;
        if !self.block_empty(x, 0) {
            return far.max(1.0);
        }
        let mut lo = 0u32;
        let mut hi = self.levels.len() as u32;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.block_empty(x, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k = lo;
        let mut box_dist = i64::MAX;
        for i in 0..D {
            let c = x.0[i] >> k;
            let below = x.0[i] - (((c - 1) << k) - 1);
            let above = ((c + 2) << k) - x.0[i];
            box_dist = box_dist.min(below).min(above);
        }
        (box_dist as f64).max(far)
    }

    /// Whether some member lies within Euclidean distance `eps` of `x`.
    pub fn any_within(&self, x: &LatticePoint<D>, eps: f64) -> bool {
        if self.points.is_empty() || eps < 0.0 {
            return false;
        }
        if self.contains(x) {
            return true;
        }
        if eps < 1.0 {
            return false;
        }
        let eps2 = eps * eps;
        if let Some((k, map)) = &self.buckets {
            if ((1u64 << k) as f64) >= eps {
                return any_in_block(&cell(x, *k), |q| {
                    map.get(q).is_some_and(|ids| {
                        ids.iter()
                            .any(|&i| (self.points[i as usize].distance_sq(x) as f64) <= eps2)
                    })
                });
            }
        }
        if self.distance_lower_bound(x) > eps {
            return false;
        }
        self.points.iter().any(|a| (a.distance_sq(x) as f64) <= eps2)
    }

    /// Exact Euclidean distance from `x` to the nearest member (linear scan).
    pub fn distance(&self, x: &LatticePoint<D>) -> f64 {
        self.points
            .iter()
            .map(|a| a.distance_sq(x))
            .min()
            .map_or(f64::INFINITY, |d2| (d2 as f64).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_set() -> impl Strategy<Value = Vec<LatticePoint<3>>> {
        prop::collection::vec(prop::array::uniform3(-40i64..40).prop_map(LatticePoint), 1..40)
    }

    proptest! {
        #[test]
        fn lower_bound_never_exceeds_true_distance(
            set in arb_set(),
            x in prop::array::uniform3(-120i64..120).prop_map(LatticePoint),
        ) {
            let idx = SpatialIndex::new(&set);
            let lb = idx.distance_lower_bound(&x);
            let d = idx.distance(&x);
            prop_assert!(lb <= d + 1e-9, "lb {} > dist {}", lb, d);
            prop_assert_eq!(lb == 0.0, d == 0.0);
        }

        #[test]
        fn bucket_queries_match_linear_scan(
            set in arb_set(),
            x in prop::array::uniform3(-60i64..60).prop_map(LatticePoint),
            eps in 0.0f64..25.0,
        ) {
            let plain = SpatialIndex::new(&set);
            let bucketed = SpatialIndex::new(&set).with_buckets(eps);
            let want = plain.distance(&x) <= eps;
            prop_assert_eq!(plain.any_within(&x, eps), want);
            prop_assert_eq!(bucketed.any_within(&x, eps), want);
        }
    }

    #[test]
    fn far_points_get_large_bounds() {
        let set: Vec<_> = (0..100).map(|i| LatticePoint([i, 0, 0])).collect();
        let idx = SpatialIndex::new(&set);
        let x = LatticePoint([50, 1000, 0]);
        let lb = idx.distance_lower_bound(&x);
        assert!(lb > 500.0 && lb <= 1000.0, "{lb}");
    }
}
