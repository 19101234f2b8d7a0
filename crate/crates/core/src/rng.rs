//! Reproducible random streams.
//!
//! A stream is identified by `(master_seed, stream_id)`. The generator is
//! ChaCha8 keyed by the master seed with the stream id in the nonce slot, so
//! the draw at position `i` is a pure function of `(master_seed, stream_id, i)`
//! and independent streams can be handed to any thread in any order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use rand_chacha::ChaCha8Rng as StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a tag string to a stream tag.
pub fn tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream { master_seed, stream_id }
    }

    /// Child stream whose id mixes this id with `tags`. Distinct tag paths
    /// give distinct ids with overwhelming probability.
    pub fn derive(&self, tags: &[u64]) -> Self {
        let mut id = mix64(self.stream_id);
        for &t in tags {
            id = mix64(id ^ mix64(t));
        }
        RngStream { master_seed: self.master_seed, stream_id: id }
    }

    pub fn child(&self, t: u64) -> Self {
        self.derive(&[t])
    }

    /// Fresh generator positioned at draw 0 of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.master_seed);
        r.set_stream(self.stream_id);
        r
    }

    /// Generator positioned at 32-bit word `index` of this stream.
    pub fn rng_at(&self, index: u128) -> ChaCha8Rng {
        let mut r = self.rng();
        r.set_word_pos(index);
        r
    }
}

/// Uniform direction in `0..n` from one 32-bit draw (multiply-shift; the
/// bias is below `n / 2^32`, i.e. under 3e-9 for every lattice used here).
#[inline]
pub fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, n: u32) -> usize {
    ((rng.next_u32() as u64 * n as u64) >> 32) as usize
}

/// Direction stream for long walks: each 64-bit draw is split into eight
/// base-`2d` digits by repeated multiply-shift. After eight digits at least
/// 35 fresh bits remain (for `2d <= 12`), so the per-step bias is below
/// `2^-35`.
pub struct DirectionSource<'a, R: RngCore + ?Sized> {
    rng: &'a mut R,
    buf: u64,
    left: u32,
}

impl<'a, R: RngCore + ?Sized> DirectionSource<'a, R> {
    const DIGITS: u32 = 8;

    pub fn new(rng: &'a mut R) -> Self {
        DirectionSource { rng, buf: 0, left: 0 }
    }

    #[inline(always)]
    pub fn next(&mut self, n: u64) -> usize {
        if self.left == 0 {
            self.buf = self.rng.next_u64();
            self.left = Self::DIGITS;
        }
        self.left -= 1;
        let m = self.buf as u128 * n as u128;
        self.buf = m as u64;
        (m >> 64) as usize
    }

    pub fn rng(&mut self) -> &mut R {
        self.rng
    }
}

/// A fresh seed from operating-system entropy.
pub fn entropy_seed() -> u64 {
    rand::random()
}

/// Uniform real in `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal by Box–Muller (the sine branch is discarded).
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u1 = 1.0 - uniform01(rng);
    let u2 = uniform01(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Uniform point on the unit sphere of R^D.
pub fn unit_vector<R: RngCore + ?Sized, const D: usize>(rng: &mut R) -> [f64; D] {
    loop {
        let mut v = [0.0; D];
        for x in v.iter_mut() {
            *x = standard_normal(rng);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.map(|x| x / n);
        }
    }
}
