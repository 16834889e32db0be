use crate::config::ExecMode;

/// Maps jobs to results on the rayon pool when `mode` is parallel and the
/// feature is enabled. Output order always matches input order.
pub fn map_ordered<T, R, F>(mode: ExecMode, jobs: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel && jobs.len() > 1 {
        use rayon::prelude::*;
        return jobs.into_par_iter().map(f).collect();
    }
    let _ = mode;
    jobs.into_iter().map(f).collect()
}
