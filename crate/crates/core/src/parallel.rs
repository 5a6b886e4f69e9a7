//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature the items run on the rayon pool; without it
//! they run in order on the calling thread. Output order always matches
//! input order, so reductions over the results are deterministic either way.

#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

/// Sequential reference used by benchmarks and equivalence tests.
pub fn seq_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

/// Caps the global worker pool; a no-op without the `parallel` feature.
pub fn set_threads(threads: usize) -> crate::Result<()> {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| crate::Error::Config(format!("thread pool: {e}")))?;
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}
