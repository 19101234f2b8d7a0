//! Geometry of the cubic lattice Z^d.
//!
//! Points carry their dimension as a const parameter, so every structure
//! built from them shares one `D`. Coordinates are `i64` and all lattice
//! arithmetic is exact; floating point only enters through Euclidean norms.

mod index;
mod sitemap;

pub use index::SpatialIndex;
pub use sitemap::{SiteMap, SiteSet};

use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use crate::error::{Error, Result};

/// A site of Z^D.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct LatticePoint<const D: usize>(pub [i64; D]);

impl<const D: usize> LatticePoint<D> {
    pub const ORIGIN: Self = LatticePoint([0; D]);

    pub fn new(coords: [i64; D]) -> Self {
        LatticePoint(coords)
    }

    /// The unit vector `sign * e_axis`.
    pub fn unit(axis: usize, positive: bool) -> Self {
        let mut c = [0; D];
        c[axis] = if positive { 1 } else { -1 };
        LatticePoint(c)
    }

    pub fn coords(&self) -> &[i64; D] {
        &self.0
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Neighbor in direction `dir`, where directions are numbered
    /// `+e1, -e1, +e2, -e2, ...` (so `dir / 2` is the axis).
    #[inline]
    pub fn step(&self, dir: usize) -> Self {
        let mut c = self.0;
        c[dir >> 1] += if dir & 1 == 0 { 1 } else { -1 };
        LatticePoint(c)
    }

    /// All 2D nearest neighbors in the fixed order `+e1, -e1, +e2, -e2, ...`.
    pub fn neighbors(&self) -> Vec<Self> {
        (0..2 * D).map(|dir| self.step(dir)).collect()
    }

    /// Direction index `dir` with `self.step(dir) == other`, if the two
    /// points are nearest neighbors.
    pub fn direction_to(&self, other: &Self) -> Option<usize> {
        let mut found = None;
        for axis in 0..D {
            match other.0[axis] - self.0[axis] {
                0 => {}
                1 if found.is_none() => found = Some(2 * axis),
                -1 if found.is_none() => found = Some(2 * axis + 1),
                _ => return None,
            }
        }
        found
    }

    #[inline]
    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|&c| c * c).sum()
    }

    pub fn euclidean_norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn l1_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).sum()
    }

    pub fn distance_sq(&self, other: &Self) -> i64 {
        (*self - *other).norm_sq()
    }

    pub fn as_f64(&self) -> [f64; D] {
        self.0.map(|c| c as f64)
    }

    /// Nearest lattice point to a real vector (ties round away from zero).
    pub fn round_from(x: &[f64; D]) -> Self {
        LatticePoint(x.map(|v| v.round() as i64))
    }
}

impl<const D: usize> Default for LatticePoint<D> {
    fn default() -> Self {
        Self::ORIGIN
    }
}

impl<const D: usize> Hash for LatticePoint<D> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for &c in &self.0 {
            state.write_i64(c);
        }
    }
}

impl<const D: usize> Add for LatticePoint<D> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(rhs.0) {
            *a += b;
        }
        LatticePoint(c)
    }
}

impl<const D: usize> Sub for LatticePoint<D> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(rhs.0) {
            *a -= b;
        }
        LatticePoint(c)
    }
}

impl<const D: usize> Neg for LatticePoint<D> {
    type Output = Self;
    fn neg(self) -> Self {
        LatticePoint(self.0.map(|c| -c))
    }
}

impl<const D: usize> fmt::Display for LatticePoint<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl<const D: usize> fmt::Debug for LatticePoint<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({self})")
    }
}

impl<const D: usize> FromStr for LatticePoint<D> {
    type Err = Error;

    /// Parses comma-separated integers, e.g. `1,-2,0`.
    fn from_str(s: &str) -> Result<Self> {
        let mut c = [0; D];
        let mut n = 0;
        for part in s.trim().split(',') {
            if n == D {
                return Err(Error::Parse(format!("too many coordinates in {s:?} (d={D})")));
            }
            c[n] = part
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad coordinate {part:?}: {e}")))?;
            n += 1;
        }
        if n != D {
            return Err(Error::Parse(format!("expected {D} coordinates in {s:?}")));
        }
        Ok(LatticePoint(c))
    }
}

/// Writes one point per line.
pub fn format_points<const D: usize>(points: &[LatticePoint<D>]) -> String {
    let mut out = String::with_capacity(points.len() * (4 * D + 1));
    for p in points {
        out.push_str(&p.to_string());
        out.push('\n');
    }
    out
}

/// Reads the one-point-per-line format; blank lines and `#` comments are skipped.
pub fn parse_points<const D: usize>(text: &str) -> Result<Vec<LatticePoint<D>>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

pub fn euclidean_norm<const D: usize>(p: &LatticePoint<D>) -> f64 {
    p.euclidean_norm()
}

pub fn neighbors<const D: usize>(p: &LatticePoint<D>) -> Vec<LatticePoint<D>> {
    p.neighbors()
}

/// Finite set of lattice points with O(1) membership and insertion order
/// retained.
#[derive(Clone, Debug)]
pub struct PointSet<const D: usize> {
    points: Vec<LatticePoint<D>>,
    index: SiteMap<D, u32>,
    lo: [i64; D],
    hi: [i64; D],
    max_norm_sq: i64,
}

impl<const D: usize> Default for PointSet<D> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const D: usize> PointSet<D> {
    pub fn new() -> Self {
        PointSet {
            points: Vec::new(),
            index: SiteMap::new(),
            lo: [i64::MAX; D],
            hi: [i64::MIN; D],
            max_norm_sq: 0,
        }
    }

    /// Builds a set, silently dropping repeated points.
    pub fn from_points<I: IntoIterator<Item = LatticePoint<D>>>(points: I) -> Self {
        let mut s = Self::new();
        for p in points {
            s.insert(p);
        }
        s
    }

    /// Builds a set from an ordering that must not repeat a point.
    pub fn from_ordered(points: &[LatticePoint<D>]) -> Result<Self> {
        let mut s = Self::new();
        for &p in points {
            if !s.insert(p) {
                return Err(Error::DuplicatePoint(p.to_string()));
            }
        }
        Ok(s)
    }

    /// Returns false if the point was already present.
    pub fn insert(&mut self, p: LatticePoint<D>) -> bool {
        if self.index.contains_key(&p) {
            return false;
        }
        self.index.insert(p, self.points.len() as u32);
        self.points.push(p);
        for i in 0..D {
            self.lo[i] = self.lo[i].min(p.0[i]);
            self.hi[i] = self.hi[i].max(p.0[i]);
        }
        self.max_norm_sq = self.max_norm_sq.max(p.norm_sq());
        true
    }

    #[inline]
    pub fn contains(&self, p: &LatticePoint<D>) -> bool {
        for i in 0..D {
            if p.0[i] < self.lo[i] || p.0[i] > self.hi[i] {
                return false;
            }
        }
        self.index.contains_key(p)
    }

    /// Position of `p` in insertion order.
    pub fn position(&self, p: &LatticePoint<D>) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        self.index.get(p).map(|&i| i as usize)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LatticePoint<D>] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &LatticePoint<D>> {
        self.points.iter()
    }

    /// Largest Euclidean norm of a member (distance of the set from the
    /// origin's far side); 0 for the empty set.
    pub fn radius(&self) -> f64 {
        (self.max_norm_sq as f64).sqrt()
    }

    /// Center of the bounding box and the radius of the smallest ball about
    /// that center containing every member.
    pub fn bounding_ball(&self) -> ([f64; D], f64) {
        if self.is_empty() {
            return ([0.0; D], 0.0);
        }
        let mut c = [0.0; D];
        for i in 0..D {
            c[i] = 0.5 * (self.lo[i] as f64 + self.hi[i] as f64);
        }
        let r2 = self
            .points
            .iter()
            .map(|p| (0..D).map(|i| (p.0[i] as f64 - c[i]).powi(2)).sum::<f64>())
            .fold(0.0, f64::max);
        (c, r2.sqrt())
    }
}

impl<const D: usize> FromIterator<LatticePoint<D>> for PointSet<D> {
    fn from_iter<I: IntoIterator<Item = LatticePoint<D>>>(iter: I) -> Self {
        Self::from_points(iter)
    }
}

/// Whether `z` lies in the closed Euclidean `eps`-neighborhood of `set`.
pub fn sausage_contains<const D: usize>(
    set: &[LatticePoint<D>],
    eps: f64,
    z: &LatticePoint<D>,
) -> Result<bool> {
    if set.is_empty() {
        return Err(Error::Empty("sausage of the empty set"));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be >= 0, got {eps}")));
    }
    let eps2 = eps * eps;
    Ok(set.iter().any(|a| (a.distance_sq(z) as f64) <= eps2))
}
