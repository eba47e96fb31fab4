//! Summation helpers whose result does not depend on the thread count.
//!
//! Parallel sums split the index range into fixed-size blocks, reduce each
//! block with compensated summation and then combine the block totals in
//! block order. The split is a function of the input length only, so
//! `RAYON_NUM_THREADS=1` and `=64` give bit-identical answers.

use rayon::prelude::*;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = KahanSum::default();
    for x in it {
        acc.add(x);
    }
    acc.total()
}

/// Sum `f(i)` for `i in 0..n`, in parallel over blocks of `block` indices.
pub(crate) fn par_block_sum<F>(n: usize, block: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let block = block.max(1);
    let n_blocks = n.div_ceil(block);
    let partials: Vec<f64> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * block;
            let hi = (lo + block).min(n);
            compensated_sum((lo..hi).map(&f))
        })
        .collect();
    compensated_sum(partials)
}
