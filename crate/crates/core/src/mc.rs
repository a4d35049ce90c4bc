//! Block fan-out and moment accumulators shared by the Monte Carlo engines.
//!
//! Work is split into fixed blocks of [`BLOCK`] samples, processed in
//! parallel, and merged strictly in block order, so results are bit-identical
//! for any thread count.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::sampling::BLOCK;

/// Runs `f(block, len)` for every block covering `n` samples; results are in block order.
pub(crate) fn map_blocks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, usize) -> T + Sync + Send,
{
    let blocks = n.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| f(b as u64, BLOCK.min(n - b * BLOCK)))
        .collect()
}

/// Running sum and sum of squared magnitudes of a complex statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub n: usize,
    pub sum: Complex64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, v: Complex64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v.norm_sqr();
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> Complex64 {
        self.sum.unscale(self.n as f64)
    }

    /// `E|v − mean|²`, biased.
    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        (self.sum_sq / n - self.mean().norm_sqr()).max(0.0)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Entrywise [`Moments`] over a fixed number of statistics.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct MomentsVec(pub Vec<Moments>);

impl MomentsVec {
    pub fn new(len: usize) -> Self {
        MomentsVec(vec![Moments::default(); len])
    }

    pub fn merge(&mut self, other: &MomentsVec) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.merge(b);
        }
    }

    pub fn merged(parts: Vec<MomentsVec>, len: usize) -> MomentsVec {
        let mut acc = MomentsVec::new(len);
        for p in &parts {
            acc.merge(p);
        }
        acc
    }
}
