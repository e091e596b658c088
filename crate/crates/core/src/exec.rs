//! Execution-mode shim: rayon data parallelism with a sequential fallback.
//!
//! Built with the `parallel` feature (the default), the helpers fan work out
//! over rayon's global pool; without it they run plain sequential loops with
//! identical results. Everything routed through here must be order-stable:
//! `map` and `map_indexed` preserve input order in both modes, so outputs are
//! bit-identical across modes and thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Human-readable name of the compiled execution mode.
pub const fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "rayon"
    } else {
        "sequential"
    }
}

/// Cap the worker pool at `n` threads (0 = leave the default). Safe to call
/// more than once; only the first call can win, later calls are ignored.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) {
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// Sequential build: thread cap is a no-op.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) {}

/// Order-preserving map over a slice.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Order-preserving map over a slice.
#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Order-preserving indexed map over a slice.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Order-preserving indexed map over a slice.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Map over index range 0..n, preserving order.
#[cfg(feature = "parallel")]
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map over index range 0..n, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}
