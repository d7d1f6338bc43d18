//! Thin wrappers over the data-parallel inner loops.
//!
//! With the `parallel` feature these dispatch to rayon; without it they run
//! the same closures sequentially. Reductions are written so that both
//! paths produce bitwise-identical results for associative-enough
//! accumulations used here (per-index outputs) and identical results up to
//! summation order for folds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fold `0..n` into per-thread accumulators, then combine them.
///
/// `init` creates an empty accumulator, `fold` absorbs one index,
/// `combine` merges two accumulators.
pub fn fold_indexed<A, I, F, C>(n: usize, init: I, fold: F, combine: C) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(A, usize) -> A + Sync + Send,
    C: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n)
            .into_par_iter()
            .fold(&init, |acc, i| fold(acc, i))
            .reduce(&init, combine)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = &combine;
        (0..n).fold(init(), |acc, i| fold(acc, i))
    }
}

/// Fill `out[i] = f(i)` in place over a mutable slice.
pub fn for_each_mut<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut().enumerate().for_each(|(i, v)| f(i, v));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
    }
}

/// True when compiled with rayon support.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
