//! Data-parallel map helper with a sequential fallback.
//!
//! Results are collected in index order, so output is identical whether the
//! body runs on the rayon pool or inline. With the `parallel` feature
//! disabled the flag is ignored and everything runs sequentially.

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, _parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
