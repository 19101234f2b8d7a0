//! Deterministic parallel Monte Carlo.
//!
//! Work is cut into fixed blocks, each block draws from its own stream
//! derived from `(stream, block index)`, and block results are reduced in
//! block order. The output is therefore identical for every thread count.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::rng::RngStream;

/// Default number of trials per block.
pub const BLOCK: u64 = 4096;

/// Runs `f(block_index, first_trial, trial_count, block_stream)` over blocks
/// covering `0..n` and returns the results in block order.
pub fn map_blocks<T, F>(n: u64, block: u64, stream: RngStream, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64, u64, RngStream) -> T + Sync + Send,
{
    let block = block.max(1);
    let nblocks = n.div_ceil(block);
    (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let start = b * block;
            let len = block.min(n - start);
            f(b, start, len, stream.derive(&[0xb10c, b]))
        })
        .collect()
}

/// Maps `f(i, stream_i)` over `0..n` in parallel, with one derived stream
/// per item, keeping item order.
pub fn map_items<T, F>(n: usize, stream: RngStream, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, RngStream) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|i| f(i, stream.derive(&[0x17e3, i as u64])))
        .collect()
}

/// Runs `f` inside a dedicated pool of `threads` workers (0 means rayon's
/// default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let s = RngStream::new(77, 5);
        let run = || {
            map_blocks(10_000, 333, s, |_, _, len, st| {
                let mut r = st.rng();
                (0..len).map(|_| r.next_u32() as u64).sum::<u64>()
            })
        };
        let a = with_threads(1, run).unwrap();
        let b = with_threads(3, run).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 31);
    }
}
