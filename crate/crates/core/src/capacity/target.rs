use crate::lattice::{LatticePoint, SpatialIndex};

/// A finite region walks may hit.
pub trait Target<const D: usize>: Sync {
    fn hits(&self, x: &LatticePoint<D>) -> bool;

    /// Lower bound on the distance from `x` to any site of the region.
    fn lower_bound(&self, x: &LatticePoint<D>) -> f64;

    /// Center and radius of a ball containing the region.
    fn ball(&self) -> ([f64; D], f64);
}

/// A finite point set.
pub struct SetTarget<const D: usize> {
    index: SpatialIndex<D>,
}

impl<const D: usize> SetTarget<D> {
    pub fn new(points: &[LatticePoint<D>]) -> Self {
        SetTarget { index: SpatialIndex::new(points) }
    }

    pub fn index(&self) -> &SpatialIndex<D> {
        &self.index
    }
}

impl<const D: usize> Target<D> for SetTarget<D> {
    #[inline]
    fn hits(&self, x: &LatticePoint<D>) -> bool {
        self.index.contains(x)
    }

    fn lower_bound(&self, x: &LatticePoint<D>) -> f64 {
        self.index.distance_lower_bound(x)
    }

    fn ball(&self) -> ([f64; D], f64) {
        (*self.index.center(), self.index.radius())
    }
}

/// Lattice sites within Euclidean distance `eps` of a point set.
pub struct SausageTarget<const D: usize> {
    index: SpatialIndex<D>,
    eps: f64,
}

impl<const D: usize> SausageTarget<D> {
    pub fn new(points: &[LatticePoint<D>], eps: f64) -> Self {
        SausageTarget { index: SpatialIndex::new(points).with_buckets(eps), eps }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

impl<const D: usize> Target<D> for SausageTarget<D> {
    #[inline]
    fn hits(&self, x: &LatticePoint<D>) -> bool {
        self.index.any_within(x, self.eps)
    }

    fn lower_bound(&self, x: &LatticePoint<D>) -> f64 {
        (self.index.distance_lower_bound(x) - self.eps).max(0.0)
    }

    fn ball(&self) -> ([f64; D], f64) {
        (*self.index.center(), self.index.radius() + self.eps)
    }
}
