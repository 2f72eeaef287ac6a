//! Parallel reductions whose result does not depend on the thread count.

use rayon::prelude::*;

const CHUNK: usize = 4096;

/// `Σᵢ f(i)` over `0..len`, summed chunk by chunk in a fixed order.
pub(crate) fn sum(len: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let partial: Vec<f64> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(len)).map(&f).sum())
        .collect();
    partial.iter().sum()
}
