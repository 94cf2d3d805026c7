//! Seeded random streams. Every stochastic routine takes an explicit seed so
//! runs are reproducible bit-for-bit.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform on `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut Rng) -> f64 {
    rng.random::<f64>()
}

/// Uniform integer in `0..upper`.
#[inline]
pub fn index(rng: &mut Rng, upper: usize) -> usize {
    rng.random_range(0..upper)
}

pub fn fill_normal(rng: &mut Rng, out: &mut [f64]) {
    for v in out {
        *v = normal(rng);
    }
}

/// Fisher-Yates shuffle of `0..n`.
pub fn permutation(rng: &mut Rng, n: usize) -> alloc::vec::Vec<usize> {
    let mut idx: alloc::vec::Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = index(rng, i + 1);
        idx.swap(i, j);
    }
    idx
}
