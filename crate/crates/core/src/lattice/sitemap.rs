use rustc_hash::FxHashMap;

use super::LatticePoint;

/// Hash map keyed by lattice sites.
///
/// Points whose coordinates fit in `64 / D` bits are packed into a single
/// `u64` key; anything else goes to a fallback map keyed by the full point.
/// Walks at desk scale essentially never leave the packed range, so lookups
/// cost one integer hash.
#[derive(Clone, Debug)]
pub struct SiteMap<const D: usize, V> {
    packed: FxHashMap<u64, V>,
    overflow: FxHashMap<LatticePoint<D>, V>,
}

const fn bits(d: usize) -> u32 {
    (64 / d) as u32
}

#[inline]
fn pack<const D: usize>(p: &LatticePoint<D>) -> Option<u64> {
    let b = bits(D);
    if b >= 64 {
        return Some(p.0[0] as u64);
    }
    let half = 1i64 << (b - 1);
    let mask = (1u64 << b) - 1;
    let mut key = 0u64;
    for &c in &p.0 {
        if c < -half || c >= half {
            return None;
        }
        key = (key << b) | (c as u64 & mask);
    }
    Some(key)
}

impl<const D: usize, V> Default for SiteMap<D, V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const D: usize, V> SiteMap<D, V> {
    pub fn new() -> Self {
        SiteMap {
            packed: FxHashMap::default(),
            overflow: FxHashMap::default(),
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        SiteMap {
            packed: FxHashMap::with_capacity_and_hasher(n, Default::default()),
            overflow: FxHashMap::default(),
        }
    }

    #[inline]
    pub fn get(&self, p: &LatticePoint<D>) -> Option<&V> {
        match pack(p) {
            Some(k) => self.packed.get(&k),
            None => self.overflow.get(p),
        }
    }

    #[inline]
    pub fn contains_key(&self, p: &LatticePoint<D>) -> bool {
        self.get(p).is_some()
    }

    #[inline]
    pub fn insert(&mut self, p: LatticePoint<D>, v: V) -> Option<V> {
        match pack(&p) {
            Some(k) => self.packed.insert(k, v),
            None => self.overflow.insert(p, v),
        }
    }

    #[inline]
    pub fn remove(&mut self, p: &LatticePoint<D>) -> Option<V> {
        match pack(p) {
            Some(k) => self.packed.remove(&k),
            None => self.overflow.remove(p),
        }
    }

    pub fn len(&self) -> usize {
        self.packed.len() + self.overflow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.packed.clear();
        self.overflow.clear();
    }
}

/// Set of lattice sites backed by [`SiteMap`].
#[derive(Clone, Debug, Default)]
pub struct SiteSet<const D: usize>(SiteMap<D, ()>);

impl<const D: usize> SiteSet<D> {
    pub fn new() -> Self {
        SiteSet(SiteMap::new())
    }

    pub fn with_capacity(n: usize) -> Self {
        SiteSet(SiteMap::with_capacity(n))
    }

    /// Returns true if the point was not already present.
    #[inline]
    pub fn insert(&mut self, p: LatticePoint<D>) -> bool {
        self.0.insert(p, ()).is_none()
    }

    #[inline]
    pub fn contains(&self, p: &LatticePoint<D>) -> bool {
        self.0.contains_key(p)
    }

    pub fn remove(&mut self, p: &LatticePoint<D>) -> bool {
        self.0.remove(p).is_some()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn clear(&mut self) {
        self.0.clear()
    }
}

impl<const D: usize> FromIterator<LatticePoint<D>> for SiteSet<D> {
    fn from_iter<I: IntoIterator<Item = LatticePoint<D>>>(iter: I) -> Self {
        let mut s = SiteSet::new();
        for p in iter {
            s.insert(p);
        }
        s
    }
}
