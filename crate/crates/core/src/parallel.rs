use crate::error::{Error, Result};

/// Runs `work` on a dedicated pool of `threads` workers, or on the global pool when `None`.
pub fn with_threads<T, F>(threads: Option<usize>, work: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match threads {
        None => Ok(work()),
        Some(0) => Err(Error::InvalidArgument("thread count must be at least 1".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot start {t} worker threads: {e}")))?;
            Ok(pool.install(work))
        }
    }
}
