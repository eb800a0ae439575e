//! Low-discrepancy point sets.

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Van der Corput radical inverse of `index` in `base`, in `[0, 1)`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut acc = 0.0;
    while index > 0 {
        acc += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    acc
}

/// `D`-dimensional Halton sequence over the first `D` primes.
#[derive(Debug, Clone, Copy, Default)]
pub struct Halton<const D: usize>;

impl<const D: usize> Halton<D> {
    pub fn new() -> Self {
        assert!(D <= PRIMES.len(), "Halton dimension limited to {}", PRIMES.len());
        Self
    }

    pub fn point(&self, index: u64) -> [f64; D] {
        std::array::from_fn(|d| radical_inverse(index, PRIMES[d]))
    }
}
