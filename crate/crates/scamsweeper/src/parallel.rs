//! Thread-pool executor. Results come back in index order and are reduced by
//! the caller in that order, so output does not depend on the thread count.

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use scamsweeper_core::train::Executor;

pub struct Pool {
    pool: ThreadPool,
}

impl Pool {
    /// `threads = 0` uses all available cores.
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        Ok(Self { pool: ThreadPoolBuilder::new().num_threads(threads).build()? })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}
