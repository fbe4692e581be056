//! Deterministic random streams.
//!
//! Every stream is a SplitMix64 generator (increment `0x9E3779B97F4A7C15`,
//! multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`). Stream `k` of a
//! master seed `s` starts from the first output of a SplitMix64 seeded with
//! `s + k·0xD1B54A32D192ED03 (mod 2⁶⁴)`. A uniform double in `[0,1)` is
//! `(next_u64 >> 11) · 2⁻⁵³`, and `U(lo, hi)` is `lo + (hi − lo)·u`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::linalg::Matrix;

const STREAM_GAMMA: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Clone, Debug)]
pub struct Stream {
    inner: SplitMix64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    /// Independent stream `index` derived from `master`.
    pub fn derive(master: u64, index: u64) -> Self {
        let mut root =
            SplitMix64::seed_from_u64(master.wrapping_add(index.wrapping_mul(STREAM_GAMMA)));
        Self::new(root.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Matrix with i.i.d. `U(lo, hi)` entries, filled in row-major order.
    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.uniform(lo, hi))
    }
}
