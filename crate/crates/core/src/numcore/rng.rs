//! Deterministic random numbers.
//!
//! Every random draw in the crate goes through [`Rng`], a thin wrapper over
//! ChaCha8 (`rand_chacha::ChaCha8Rng`). ChaCha is a counter-based stream
//! cipher with a fixed, platform-independent output, so a seed pins the
//! stream bit-for-bit everywhere. Independent sub-streams are derived with
//! [`Rng::substream`], which selects a ChaCha stream id; distinct purposes
//! (feature sampling, label sampling, init, shuffling) never share a stream.
//!
//! Distribution sampling is implemented here rather than borrowed from
//! `rand`, so the mapping from raw words to values is fixed by this file.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::numcore::Matrix;

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Stream `stream` of the generator keyed by `seed`.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` (multiply-shift; bias below 2^-64·n).
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box–Muller; one draw per pair of uniforms.
    pub fn normal(&mut self) -> f64 {
        // 1 - u keeps the logarithm argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.normal())
    }

    /// Matrix of iid Bernoulli(p) draws in `{0, 1}`.
    pub fn bernoulli(&mut self, p: f64, rows: usize, cols: usize) -> Result<Matrix> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("bernoulli p must be in [0, 1], got {p}")));
        }
        Ok(Matrix::from_fn(
            rows,
            cols,
            |_, _| {
                if self.uniform() < p {
                    1.0
                } else {
                    0.0
                }
            },
        ))
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct values from `0..n`, in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} of {n} without replacement");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }

    /// Index drawn from the (normalized) weights by inverse CDF.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let total: f64 = probs.iter().sum();
        let u = self.uniform() * total;
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // u landed in the rounding slack at the top; take the last positive cell
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// SplitMix64 finalizer; mixes structured seeds (run seed, epoch) into one word.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
