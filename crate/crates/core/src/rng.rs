//! Seeded, splittable random streams.
//!
//! Each agent owns an independent ChaCha12 stream derived from the master
//! seed and its stream id, so the two-process transport mode reproduces the
//! in-process draw sequences exactly. All raw draws are `f64` regardless of
//! the scalar type the caller computes in; `f32` models therefore consume the
//! stream identically to `f64` ones.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::Scalar;

pub const RNG_ALGORITHM: &str = "chacha12";

#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha12Rng,
    seed: u64,
    stream: u64,
}

/// Resumable snapshot of a stream, stored in agent checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Stream `stream` of the generator keyed by `seed`. Distinct stream ids
    /// yield statistically independent sequences.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform<S: Scalar>(&mut self) -> S {
        S::cast_from(self.inner.random::<f64>())
    }

    pub fn standard_normal<S: Scalar>(&mut self) -> S {
        S::cast_from(<StandardNormal as Distribution<f64>>::sample(
            &StandardNormal,
            &mut self.inner,
        ))
    }

    pub fn chi_squared<S: Scalar>(&mut self, dof: f64) -> S {
        let dist = ChiSquared::new(dof).expect("chi-squared dof must be positive");
        S::cast_from(dist.sample(&mut self.inner))
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index(i + 1);
            xs.swap(i, j);
        }
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.stream,
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn restore(state: &RngState) -> Self {
        let mut s = Self::substream(state.seed, state.stream);
        s.inner.set_word_pos(state.word_pos);
        s
    }
}
