//! Sample-level parallelism with results kept in index order.

use rayon::prelude::*;

pub const THREADS_ENV: &str = "DELAYCREDIT_THREADS";

/// Worker count: `DELAYCREDIT_THREADS` when it holds a positive integer,
/// otherwise the available parallelism.
pub fn worker_count() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(n) if n > 0 => n,
        _ => available,
    }
}

/// `(0..n).map(f)` on `workers` threads. The output is in index order, so any
/// reduction over it is independent of scheduling.
pub fn ordered_map<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}
