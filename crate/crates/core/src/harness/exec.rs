//! Replicate execution. Results come back in replicate-index order whatever
//! the worker count, so downstream reductions are order-stable.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Run on a dedicated pool of `workers` threads. Falls back to sequential
    /// execution when the crate is built without the `parallel` feature.
    Parallel { workers: usize },
}

impl Execution {
    pub fn with_workers(workers: usize) -> Self {
        if workers <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { workers }
        }
    }
}

/// Evaluate `job` for every index in `0..count`. If any job fails, the error
/// of the lowest failing index is returned.
pub fn map_replicates<T, F>(count: usize, execution: Execution, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = match execution {
        Execution::Sequential => (0..count).map(&job).collect(),
        Execution::Parallel { workers } => run_parallel(count, workers, &job),
    };
    results.into_iter().collect()
}

#[cfg(feature = "parallel")]
fn run_parallel<T, F>(count: usize, workers: usize, job: &F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..count).into_par_iter().map(job).collect()),
        Err(_) => (0..count).map(job).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_parallel<T, F>(count: usize, _workers: usize, job: &F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..count).map(job).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn order_is_preserved() {
        for exec in [Execution::Sequential, Execution::Parallel { workers: 4 }] {
            let out = map_replicates(100, exec, |i| Ok(i * i)).unwrap();
            assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn lowest_failing_index_wins() {
        let r = map_replicates(50, Execution::Parallel { workers: 3 }, |i| {
            if i % 7 == 3 {
                Err(Error::InvalidParameter(format!("job {i}")))
            } else {
                Ok(i)
            }
        });
        match r {
            Err(Error::InvalidParameter(m)) => assert_eq!(m, "job 3"),
            other => panic!("{other:?}"),
        }
    }
}
