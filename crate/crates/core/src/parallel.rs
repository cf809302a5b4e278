//! Replica fan-out. Replicas run on a rayon pool but results always come back
//! in replica-index order, so any later reduction is independent of the worker
//! count.

use rayon::prelude::*;

use crate::error::{FlowError, Result};

/// Runs `job(replica)` for `0..count` and returns the results in index order.
/// `workers = None` uses the global pool; `Some(n)` builds a dedicated pool.
pub fn run_replicas<T, F>(count: usize, workers: Option<usize>, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let run = || (0..count as u64).into_par_iter().map(&job).collect::<Result<Vec<T>>>();
    match workers {
        None => run(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| FlowError::Config(format!("cannot build worker pool: {e}")))?;
            pool.install(run)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let a = run_replicas(100, Some(1), |r| Ok(r * r)).unwrap();
        let b = run_replicas(100, Some(4), |r| Ok(r * r)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }

    #[test]
    fn first_error_is_reported() {
        let r = run_replicas(10, Some(2), |r| {
            if r == 3 {
                Err(FlowError::Config("boom".into()))
            } else {
                Ok(r)
            }
        });
        assert!(r.is_err());
    }
}
