//! Thin shims over rayon so the rest of the crate stays agnostic of the
//! `parallel` feature. Order matters: both helpers return results in input
//! order, and callers reduce those results sequentially, so the final
//! numbers are bit-identical no matter how many worker threads run.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
pub(crate) fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(&f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(&f).collect()
    }
}

/// Maps `f` over chunks of `items`, preserving chunk order. Only suitable
/// when the caller's merge step is exact (integer counts), since the chunk
/// boundaries depend on the worker count.
pub(crate) fn map_chunks<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&[I]) -> T + Sync + Send,
{
    if items.is_empty() {
        return Vec::new();
    }
    #[cfg(feature = "parallel")]
    {
        let chunk = items
            .len()
            .div_ceil(rayon::current_num_threads() * 4)
            .max(1);
        items.par_chunks(chunk).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        vec![f(items)]
    }
}
