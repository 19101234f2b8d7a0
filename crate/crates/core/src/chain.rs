//! Exact escape probabilities and capacities on finite transient chains.
//!
//! A [`FiniteChain`] is a substochastic matrix; the missing mass of each row
//! is the probability of being absorbed ("escaping to infinity") at that step.
//! Everything here is dense linear algebra and meant for chains with at most
//! a few thousand states.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticePoint;
use crate::rng::{uniform01, uniform_below, RngStream};

const RESIDUAL_TOL: f64 = 1e-12;
const TRANSIENCE_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct FiniteChain {
    p: DMatrix<f64>,
}

/// Solves `m x = b` by LU with partial pivoting, refining the solution
/// while the relative residual exceeds `1e-12`.
pub fn solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if m.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let lu = m.clone().lu();
    let mut x = lu.solve(b).ok_or(Error::SingularSystem)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let scale = b.amax().max(f64::MIN_POSITIVE);
    for _ in 0..4 {
        let r = b - m * &x;
        if r.amax() <= RESIDUAL_TOL * scale {
            return Ok(x);
        }
        let dx = lu.solve(&r).ok_or(Error::SingularSystem)?;
        x += dx;
    }
    let r = b - m * &x;
    if r.amax() <= 1e3 * RESIDUAL_TOL * scale {
        Ok(x)
    } else {
        Err(Error::SingularSystem)
    }
}

impl FiniteChain {
    /// Validates a substochastic matrix and checks transience: the absorption
    /// probability `(I - P)^{-1} a` must be 1 from every state.
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        if n == 0 || p.ncols() != n {
            return Err(invalid(format!("transition matrix must be square and nonempty, got {}x{}", n, p.ncols())));
        }
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                let v = p[(i, j)];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(invalid(format!("entry ({i},{j}) = {v} is not a probability")));
                }
                s += v;
            }
            if s > 1.0 + 1e-12 {
                return Err(invalid(format!("row {i} sums to {s} > 1")));
            }
        }
        let chain = FiniteChain { p };
        chain.check_transient()?;
        Ok(chain)
    }

    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut p = DMatrix::zeros(n, n);
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::OutOfRange { index: i.max(j), limit: n });
            }
            p[(i, j)] += v;
        }
        Self::new(p)
    }

    /// Parses the chain file format: the first line holds the number of
    /// states, each further line a triplet `i j p`. Blank lines and `#`
    /// comments are ignored; commas count as whitespace.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap().trim())
            .filter(|l| !l.is_empty());
        let n: usize = lines
            .next()
            .ok_or(Error::Empty("chain file"))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad state count: {e}")))?;
        let mut trip = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("expected `i j p`, got {line:?}")));
            }
            let i = f[0].parse().map_err(|e| Error::Parse(format!("{line:?}: {e}")))?;
            let j = f[1].parse().map_err(|e| Error::Parse(format!("{line:?}: {e}")))?;
            let v = f[2].parse().map_err(|e| Error::Parse(format!("{line:?}: {e}")))?;
            trip.push((i, j, v));
        }
        Self::from_triplets(n, &trip)
    }

    pub fn to_text(&self) -> String {
        let n = self.n_states();
        let mut s = format!("{n}\n");
        for i in 0..n {
            for j in 0..n {
                let v = self.p[(i, j)];
                if v != 0.0 {
                    s.push_str(&format!("{i} {j} {v:e}\n"));
                }
            }
        }
        s
    }

    pub fn n_states(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Per-step absorption probability of each state.
    pub fn absorption(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_states(),
            (0..self.n_states()).map(|i| (1.0 - self.p.row(i).sum()).max(0.0)),
        )
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n_states();
        (0..n).all(|i| (0..i).all(|j| (self.p[(i, j)] - self.p[(j, i)]).abs() <= tol))
    }

    fn check_transient(&self) -> Result<()> {
        let n = self.n_states();
        let m = DMatrix::identity(n, n) - &self.p;
        let a = self.absorption();
        let absorbed = solve(&m, &a).map_err(|_| Error::NotTransient("I - P is singular".into()))?;
        for (i, &v) in absorbed.iter().enumerate() {
            if !v.is_finite() || (v - 1.0).abs() > TRANSIENCE_TOL {
                return Err(Error::NotTransient(format!("absorption probability from state {i} is {v}")));
            }
        }
        Ok(())
    }

    /// Green's function `(I - P)^{-1}`: expected visits to `j` from `i`,
    /// counting time 0.
    pub fn green(&self) -> Result<DMatrix<f64>> {
        let n = self.n_states();
        let m = DMatrix::identity(n, n) - &self.p;
        m.lu().try_inverse().ok_or(Error::SingularSystem)
    }

    fn check_states(&self, set: &[usize]) -> Result<Vec<bool>> {
        let n = self.n_states();
        let mut mask = vec![false; n];
        for &s in set {
            if s >= n {
                return Err(Error::OutOfRange { index: s, limit: n });
            }
            mask[s] = true;
        }
        Ok(mask)
    }

    /// `h(y) = P_y(chain visits set at some time >= 0)` for every state.
    pub fn hitting_probabilities(&self, set: &[usize]) -> Result<DVector<f64>> {
        let n = self.n_states();
        let mask = self.check_states(set)?;
        let free: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
        let k = free.len();
        let mut m = DMatrix::zeros(k, k);
        let mut b = DVector::zeros(k);
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                m[(r, c)] = if r == c { 1.0 } else { 0.0 } - self.p[(i, j)];
            }
            b[r] = (0..n).filter(|&j| mask[j]).map(|j| self.p[(i, j)]).sum();
        }
        let hu = solve(&m, &b)?;
        let mut h = DVector::from_element(n, 1.0);
        for (r, &i) in free.iter().enumerate() {
            h[i] = hu[r].clamp(0.0, 1.0);
        }
        Ok(h)
    }

    /// `P_x(chain[1..] avoids set)`; `x` need not belong to `set`, and the
    /// empty set is avoided with probability 1.
    pub fn avoid_probability(&self, set: &[usize], x: usize) -> Result<f64> {
        let n = self.n_states();
        if x >= n {
            return Err(Error::OutOfRange { index: x, limit: n });
        }
        if set.is_empty() {
            return Ok(1.0);
        }
        let h = self.hitting_probabilities(set)?;
        let hit: f64 = (0..n).map(|y| self.p[(x, y)] * h[y]).sum();
        Ok((1.0 - hit).clamp(0.0, 1.0))
    }
}

/// Probability that the chain started at `x in a` never returns to `a`.
pub fn exact_escape(chain: &FiniteChain, a: &[usize], x: usize) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Empty("escape set"));
    }
    if !a.contains(&x) {
        return Err(invalid(format!("state {x} is not in the set")));
    }
    chain.avoid_probability(a, x)
}

/// Sum of escape probabilities over `a`.
pub fn exact_capacity(chain: &FiniteChain, a: &[usize]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Empty("capacity set"));
    }
    let mut a = a.to_vec();
    a.sort_unstable();
    a.dedup();
    let n = chain.n_states();
    let h = chain.hitting_probabilities(&a)?;
    let p = chain.matrix();
    Ok(a.iter()
        .map(|&x| (1.0 - (0..n).map(|y| p[(x, y)] * h[y]).sum::<f64>()).clamp(0.0, 1.0))
        .sum())
}

/// `sum_k P_{x_k}(escape {x_1..x_k}) * P_{x_k}(avoid {x_1..x_{k-1}})`.
pub fn exact_decomposition_terms(chain: &FiniteChain, order: &[usize]) -> Result<Vec<f64>> {
    if order.is_empty() {
        return Err(Error::Empty("ordering"));
    }
    for (i, x) in order.iter().enumerate() {
        if order[..i].contains(x) {
            return Err(Error::DuplicatePoint(format!("state {x}")));
        }
    }
    (0..order.len())
        .map(|k| {
            let with = chain.avoid_probability(&order[..=k], order[k])?;
            let without = chain.avoid_probability(&order[..k], order[k])?;
            Ok(with * without)
        })
        .collect()
}

pub fn exact_decomposition(chain: &FiniteChain, order: &[usize]) -> Result<f64> {
    Ok(exact_decomposition_terms(chain, order)?.iter().sum())
}

/// Capacity of `a` as `sum_b e_B(b) P_b(hit a)` for some `b_set` containing
/// `a`. Valid for symmetric chains.
pub fn exact_harmonic_factorization(chain: &FiniteChain, a: &[usize], b_set: &[usize]) -> Result<f64> {
    if a.iter().any(|x| !b_set.contains(x)) {
        return Err(invalid("first set must be contained in the second"));
    }
    let h = chain.hitting_probabilities(a)?;
    let mut b = b_set.to_vec();
    b.sort_unstable();
    b.dedup();
    let mut total = 0.0;
    for &x in &b {
        total += exact_escape(chain, &b, x)? * h[x];
    }
    Ok(total)
}

/// Random symmetric substochastic chain on `n` states. Edges are present
/// independently with probability `density`; the matrix is scaled so the
/// largest row sum is `1 - kappa` with `kappa` drawn from `[0.005, 0.3)`.
pub fn random_symmetric_chain<R: RngCore + ?Sized>(n: usize, density: f64, rng: &mut R) -> Result<FiniteChain> {
    if n == 0 {
        return Err(invalid("chain needs at least one state"));
    }
    let mut w = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            if uniform01(rng) < density || (j + 1 == i) {
                let v = uniform01(rng) + 0.01;
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    let max_row = (0..n).map(|i| w.row(i).sum()).fold(0.0, f64::max);
    let kappa = 0.005 + 0.295 * uniform01(rng);
    w *= (1.0 - kappa) / max_row;
    FiniteChain::new(w)
}

/// Outcome of [`decomposition_suite`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SuiteReport {
    pub chains: usize,
    pub orderings: usize,
    pub max_deviation: f64,
}

/// Compares `exact_capacity` with `exact_decomposition` over `chains`
/// random symmetric chains with `2..=max_states` states, one random subset
/// of `1..=max_set` states per chain and `orderings` random orderings of it.
pub fn decomposition_suite(chains: usize, max_states: usize, max_set: usize, orderings: usize, stream: RngStream) -> Result<SuiteReport> {
    if max_states < 2 || max_set < 1 || orderings < 1 {
        return Err(invalid("need max_states >= 2, max_set >= 1 and orderings >= 1"));
    }
    let mut worst = 0.0f64;
    let mut count = 0;
    for t in 0..chains {
        let mut rng = stream.child(t as u64).rng();
        let n = 2 + uniform_below(&mut rng, (max_states - 1) as u32);
        let density = 0.05 + 0.5 * uniform01(&mut rng);
        let c = random_symmetric_chain(n, density, &mut rng)?;
        let k = 1 + uniform_below(&mut rng, max_set.min(n) as u32);
        let mut states: Vec<usize> = (0..n).collect();
        states.shuffle(&mut rng);
        let mut order = states[..k].to_vec();
        let cap = exact_capacity(&c, &order)?;
        for _ in 0..orderings {
            order.shuffle(&mut rng);
            worst = worst.max((exact_decomposition(&c, &order)? - cap).abs());
            count += 1;
        }
    }
    Ok(SuiteReport { chains, orderings: count, max_deviation: worst })
}

/// Simple random walk on the box `[-r, r]^D`, with steps out of the box
/// absorbed.
#[derive(Clone, Debug)]
pub struct BoxedWalkChain<const D: usize> {
    pub radius: i64,
    pub chain: FiniteChain,
}

impl<const D: usize> BoxedWalkChain<D> {
    pub fn new(radius: i64) -> Result<Self> {
        if radius < 0 {
            return Err(invalid("box radius must be >= 0"));
        }
        let side = (2 * radius + 1) as usize;
        let n = side.checked_pow(D as u32).filter(|&n| n <= 6000).ok_or_else(|| invalid("box too large for dense solves"))?;
        let mut p = DMatrix::zeros(n, n);
        let q = 1.0 / (2 * D) as f64;
        let tmp = BoxedWalkChain::<D> { radius, chain: FiniteChain { p: DMatrix::zeros(0, 0) } };
        for i in 0..n {
            let x = tmp.point_of(i);
            for dir in 0..2 * D {
                if let Some(j) = tmp.index_of(&x.step(dir)) {
                    p[(i, j)] = q;
                }
            }
        }
        Ok(BoxedWalkChain { radius, chain: FiniteChain::new(p)? })
    }

    pub fn index_of(&self, x: &LatticePoint<D>) -> Option<usize> {
        let side = 2 * self.radius + 1;
        let mut idx = 0i64;
        for &c in &x.0 {
            if c.abs() > self.radius {
                return None;
            }
            idx = idx * side + (c + self.radius);
        }
        Some(idx as usize)
    }

    pub fn point_of(&self, mut i: usize) -> LatticePoint<D> {
        let side = (2 * self.radius + 1) as usize;
        let mut c = [0i64; D];
        for k in (0..D).rev() {
            c[k] = (i % side) as i64 - self.radius;
            i /= side;
        }
        LatticePoint(c)
    }

    pub fn states_of(&self, pts: &[LatticePoint<D>]) -> Result<Vec<usize>> {
        pts.iter()
            .map(|p| self.index_of(p).ok_or_else(|| invalid(format!("{p} lies outside the box"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn two_state() -> FiniteChain {
        FiniteChain::from_triplets(2, &[(0, 1, 0.5), (1, 0, 0.5)]).unwrap()
    }

    #[test]
    fn two_state_examples() {
        let c = two_state();
        assert!((exact_escape(&c, &[0, 1], 0).unwrap() - 0.5).abs() < 1e-15);
        assert!((exact_escape(&c, &[0, 1], 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((exact_escape(&c, &[0], 0).unwrap() - 0.75).abs() < 1e-15);
        assert!((exact_capacity(&c, &[0, 1]).unwrap() - 1.0).abs() < 1e-15);
        assert!((exact_capacity(&c, &[1]).unwrap() - 0.75).abs() < 1e-15);
        let terms = exact_decomposition_terms(&c, &[0, 1]).unwrap();
        assert!((terms[0] - 0.75).abs() < 1e-15);
        assert!((terms[1] - 0.25).abs() < 1e-15);
        assert!((exact_decomposition(&c, &[0]).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let c = two_state();
        assert!(exact_escape(&c, &[], 0).is_err());
        assert!(exact_escape(&c, &[1], 0).is_err());
        assert!(exact_escape(&c, &[5], 5).is_err());
        assert!(matches!(exact_decomposition(&c, &[0, 0]), Err(Error::DuplicatePoint(_))));
        let closed = FiniteChain::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]);
        assert!(matches!(closed, Err(Error::NotTransient(_))));
        let partly = FiniteChain::from_triplets(3, &[(0, 1, 1.0), (1, 0, 1.0), (2, 2, 0.5)]);
        assert!(matches!(partly, Err(Error::NotTransient(_))));
        assert!(FiniteChain::from_triplets(1, &[(0, 0, 1.5)]).is_err());
        assert!(FiniteChain::from_triplets(1, &[(0, 0, -0.1)]).is_err());
    }

    #[test]
    fn non_symmetric_chains_break_the_decomposition() {
        // Symmetry of the kernel is essential: here the two sides differ.
        let c = FiniteChain::from_triplets(2, &[(0, 1, 0.2), (1, 0, 0.6)]).unwrap();
        let cap = exact_capacity(&c, &[0, 1]).unwrap();
        let dec = exact_decomposition(&c, &[0, 1]).unwrap();
        assert!((cap - 1.2).abs() < 1e-12);
        assert!((dec - 1.04).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let c = two_state();
        let d = FiniteChain::parse(&c.to_text()).unwrap();
        assert_eq!(c.matrix(), d.matrix());
        let e = FiniteChain::parse("# comment\n2\n0, 1, 0.5\n\n1 0 0.5 # tail\n").unwrap();
        assert_eq!(c.matrix(), e.matrix());
        assert!(FiniteChain::parse("2\n0 1\n").is_err());
        assert!(FiniteChain::parse("").is_err());
    }

    #[test]
    fn decomposition_is_ordering_free_and_matches_capacity() {
        let s = RngStream::new(21, 0);
        let mut worst = 0.0f64;
        for t in 0..60 {
            let mut rng = s.child(t).rng();
            let n = 2 + (t as usize % 20);
            let c = random_symmetric_chain(n, 0.3, &mut rng).unwrap();
            let k = 1 + (t as usize % 6).min(n - 1);
            let set: Vec<usize> = (0..k).map(|i| (i * 7 + t as usize) % n).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            let cap = exact_capacity(&c, &set).unwrap();
            let mut order = set.clone();
            for _ in 0..4 {
                let dec = exact_decomposition(&c, &order).unwrap();
                worst = worst.max((dec - cap).abs());
                order.rotate_left(1);
                order.reverse();
            }
        }
        assert!(worst < 1e-10, "max deviation {worst}");
    }

    #[test]
    fn small_suite_passes() {
        let r = decomposition_suite(40, 12, 5, 3, RngStream::new(1, 0)).unwrap();
        assert_eq!(r.orderings, 120);
        assert!(r.max_deviation < 1e-10);
        assert!(decomposition_suite(1, 1, 1, 1, RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn capacity_is_subadditive_and_matches_green_formula() {
        let s = RngStream::new(4, 4);
        for t in 0..30 {
            let mut rng = s.child(t).rng();
            let c = random_symmetric_chain(12, 0.4, &mut rng).unwrap();
            let a = [0, 3, 5];
            let b = [5, 7, 11];
            let u = [0, 3, 5, 7, 11];
            let (ca, cb, cu) = (
                exact_capacity(&c, &a).unwrap(),
                exact_capacity(&c, &b).unwrap(),
                exact_capacity(&c, &u).unwrap(),
            );
            assert!(cu <= ca + cb + 1e-12);
            // For a symmetric kernel, cap(A) = 1' (G_AA)^{-1} 1.
            let g = c.green().unwrap();
            let gaa = DMatrix::from_fn(u.len(), u.len(), |i, j| g[(u[i], u[j])]);
            let w = solve(&gaa, &DVector::from_element(u.len(), 1.0)).unwrap();
            assert!((w.sum() - cu).abs() < 1e-10);
            let hf = exact_harmonic_factorization(&c, &a, &u).unwrap();
            assert!((hf - ca).abs() < 1e-10);
        }
    }

    #[test]
    fn boxed_walk_capacity_decreases_towards_lattice_value() {
        // Absorbing at the box boundary removes returns, so the escape
        // probability of the origin falls to 1/G(0,0) as the box grows.
        let mut prev = 1.0;
        for r in 0..=5 {
            let b = BoxedWalkChain::<3>::new(r).unwrap();
            let o = b.index_of(&LatticePoint::ORIGIN).unwrap();
            let cap = exact_capacity(&b.chain, &[o]).unwrap();
            assert!(cap <= prev + 1e-15, "not monotone at r={r}: {cap} > {prev}");
            assert!(cap > 1.0 / 1.516_386_059_2, "{cap}");
            prev = cap;
        }
        assert!(prev < 0.7);
    }

    #[test]
    fn boxed_indexing_round_trips() {
        let b = BoxedWalkChain::<3>::new(2).unwrap();
        for i in 0..b.chain.n_states() {
            assert_eq!(b.index_of(&b.point_of(i)), Some(i));
        }
        assert_eq!(b.index_of(&LatticePoint([3, 0, 0])), None);
        assert!(b.chain.is_symmetric(0.0));
    }

    #[test]
    fn escape_probabilities_are_probabilities() {
        let mut rng = RngStream::new(9, 9).rng();
        for _ in 0..20 {
            let c = random_symmetric_chain(15, 0.2, &mut rng).unwrap();
            for x in 0..15 {
                let e = exact_escape(&c, &[x, (x + 4) % 15], x).unwrap();
                assert!((0.0..=1.0).contains(&e));
            }
        }
    }
}
