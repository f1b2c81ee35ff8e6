//! Execution-mode switch for the data-parallel kernels.
//!
//! Every kernel partitions work the same way in both modes: per-row and
//! per-entry maps are independent, and reductions are summed over fixed-size
//! blocks whose partials are combined in block order. Results are therefore
//! bit-identical between [`Exec::Sequential`] and [`Exec::Parallel`] and do
//! not depend on the rayon thread count.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Rows (or entries) per reduction block.
pub const REDUCE_BLOCK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    /// Falls back to sequential execution when built without the `parallel`
    /// feature.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    pub(crate) fn faer_par(self) -> faer::Par {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return faer::Par::rayon(0);
        }
        faer::Par::Seq
    }

    /// Applies `f(row_index, row)` to each `row_len`-sized chunk of `data`.
    pub fn for_each_row<F>(self, data: &mut [f64], row_len: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        if row_len == 0 {
            return;
        }
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
            return;
        }
        data.chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }

    /// Applies `f(index, slot)` to every element of `out`.
    pub fn for_each_indexed<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            out.par_iter_mut().enumerate().for_each(|(i, v)| f(i, v));
            return;
        }
        out.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
    }

    /// Order-preserving map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Deterministic scalar reduction of `f(i)` over `0..n`.
    pub fn sum<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let block = |b: usize| {
            let lo = b * REDUCE_BLOCK;
            let hi = (lo + REDUCE_BLOCK).min(n);
            (lo..hi).map(&f).sum::<f64>()
        };
        let blocks = n.div_ceil(REDUCE_BLOCK);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            let partials: Vec<f64> = (0..blocks).into_par_iter().map(block).collect();
            return partials.into_iter().sum();
        }
        (0..blocks).map(block).sum()
    }

    /// Deterministic vector-valued reduction: `f(i, acc)` accumulates row `i`
    /// into a zeroed buffer of length `len`.
    pub fn sum_vec<F>(self, n: usize, len: usize, f: F) -> Vec<f64>
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        let block = |b: usize| {
            let lo = b * REDUCE_BLOCK;
            let hi = (lo + REDUCE_BLOCK).min(n);
            let mut acc = vec![0.0; len];
            for i in lo..hi {
                f(i, &mut acc);
            }
            acc
        };
        let blocks = n.div_ceil(REDUCE_BLOCK);
        #[cfg(feature = "parallel")]
        let partials: Vec<Vec<f64>> = if self.is_parallel() {
            (0..blocks).into_par_iter().map(block).collect()
        } else {
            (0..blocks).map(block).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let partials: Vec<Vec<f64>> = (0..blocks).map(block).collect();

        let mut total = vec![0.0; len];
        for p in partials {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total
    }
}
