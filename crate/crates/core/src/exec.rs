//! Trial fan-out. With the `parallel` feature, independent trials run on a
//! rayon pool; without it everything runs on the calling thread. Results are
//! always returned in trial order, so aggregates do not depend on scheduling.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    /// `threads == 0` uses rayon's global pool.
    Parallel { threads: usize },
}

impl Execution {
    /// `--jobs` semantics: 1 (or 0) is sequential.
    pub fn from_jobs(jobs: usize) -> Self {
        if jobs <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { threads: jobs }
        }
    }
}

/// `(0..count).map(f)`, possibly in parallel, collected in index order.
pub fn map_indexed<T, F>(exec: Execution, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..count).map(f).collect(),
        Execution::Parallel { threads } => parallel::map_indexed(threads, count, f),
    }
}

#[cfg(feature = "parallel")]
mod parallel {
    use rayon::prelude::*;

    pub(super) fn map_indexed<T, F>(threads: usize, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let run = || (0..count).into_par_iter().map(&f).collect();
        if threads == 0 {
            return run();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod parallel {
    pub(super) fn map_indexed<T, F>(_threads: usize, count: usize, f: F) -> Vec<T>
    where
        F: Fn(usize) -> T,
    {
        (0..count).map(f).collect()
    }
}
