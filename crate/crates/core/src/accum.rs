//! Compensated summation with a deterministic parallel reduction.
//!
//! All lattice sums in this crate go through these helpers so that results
//! are bitwise identical across runs and across thread counts: terms are
//! consumed in a fixed order, split into fixed-size chunks, and the chunk
//! partials are folded back in chunk-index order.

use rayon::prelude::*;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    /// Fold another accumulator in (order-sensitive, like two `add` calls).
    #[inline]
    pub fn merge(&mut self, other: Neumaier) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of `f(0), f(1), ..., f(n-1)` in index order.
pub fn sum_ordered<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    let mut acc = Neumaier::new();
    for i in 0..n {
        acc.add(f(i));
    }
    acc.total()
}

/// Fixed chunk length for the parallel reduction. Chunk boundaries depend
/// only on this constant, never on the worker count.
const CHUNK: usize = 8192;

/// Same result as [`sum_ordered`], computed in parallel when `n` is large.
pub fn par_sum_ordered<F: Fn(usize) -> f64 + Sync>(n: usize, f: F) -> f64 {
    if n < 4 * CHUNK {
        return sum_ordered(n, f);
    }
    let nchunks = n.div_ceil(CHUNK);
    let partials: Vec<Neumaier> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = usize::min(lo + CHUNK, n);
            let mut acc = Neumaier::new();
            for i in lo..hi {
                acc.add(f(i));
            }
            acc
        })
        .collect();
    let mut acc = Neumaier::new();
    for p in partials {
        acc.merge(p);
    }
    acc.total()
}
