//! Thread-count resolution and order-preserving parallel mapping.
//!
//! Parallelism is only ever applied map-style over independent work items;
//! results are collected in input order and any reduction happens
//! sequentially afterwards, so outputs are bit-identical for every thread
//! count.

use rayon::prelude::*;
use rayon::ThreadPool;

/// Environment variable that overrides any requested thread count.
pub const THREADS_ENV: &str = "GRAZE_THREADS";

/// Picks the worker count: `GRAZE_THREADS` when set and parseable, then the
/// explicit request, then the machine's available parallelism.
pub fn resolve_threads(requested: Option<usize>) -> usize {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n > 0 {
                return n;
            }
        }
    }
    match requested {
        Some(n) if n > 0 => n,
        _ => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    }
}

/// Builds a dedicated pool; keeping pools scoped avoids fighting over the
/// global one in tests.
pub fn build_pool(threads: usize) -> ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool construction")
}

/// Maps `f` over `items` on the pool, preserving input order.
pub fn par_map<T, U, F>(pool: &ThreadPool, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Indexed variant for workers that need their position in the batch.
pub fn par_map_indexed<T, U, F>(pool: &ThreadPool, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect())
}
