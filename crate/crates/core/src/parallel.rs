//! Worker-pool sizing.

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "OODKIT_THREADS";

/// Worker count: `OODKIT_THREADS` if set to a positive integer, otherwise the
/// available parallelism.
pub fn worker_count() -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(cap) if cap > 0 => cap,
        _ => available,
    }
}

/// Runs `f` inside a dedicated rayon pool of `workers` threads.
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        // pool creation only fails on thread spawn errors; run on the caller
        Err(_) => f(),
    }
}
