//! Loop-erased random walk on Z^d: sampling, loop erasure, lattice
//! capacity estimators, exact finite-chain oracles, two-sided LERW
//! samplers and the experiment drivers built on them.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod capacity;
pub mod chain;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod parallel;
pub mod rng;
pub mod stats;
pub mod twosided;
pub mod walk;

pub use error::{Error, Result};
pub use lattice::{LatticePoint, PointSet};
pub use rng::RngStream;

/// Runs `$body` with the const `$D` bound to the runtime dimension `$d`
/// for `d` in `1..=6`; other values evaluate `$otherwise`.
#[macro_export]
macro_rules! with_dim {
    ($d:expr, $D:ident => $body:expr, _ => $otherwise:expr) => {
        match $d {
            1 => { const $D: usize = 1; $body }
            2 => { const $D: usize = 2; $body }
            3 => { const $D: usize = 3; $body }
            4 => { const $D: usize = 4; $body }
            5 => { const $D: usize = 5; $body }
            6 => { const $D: usize = 6; $body }
            _ => $otherwise,
        }
    };
}

/// As [`with_dim!`] restricted to the transient dimensions `3..=6`.
#[macro_export]
macro_rules! with_transient_dim {
    ($d:expr, $D:ident => $body:expr, _ => $otherwise:expr) => {
        match $d {
            3 => { const $D: usize = 3; $body }
            4 => { const $D: usize = 4; $body }
            5 => { const $D: usize = 5; $body }
            6 => { const $D: usize = 6; $body }
            _ => $otherwise,
        }
    };
}
