//! Thread-pool backed [`PointMap`].

use fewparam_core::certify::PointMap;
use rayon::prelude::*;

/// Evaluates points on a dedicated rayon pool. Results come back in index
/// order, so reductions over them do not depend on the thread count.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    /// `threads = 0` uses every available core.
    pub fn new(threads: usize) -> anyhow::Result<Pool> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Pool { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl PointMap for Pool {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..count).into_par_iter().map(f).collect())
    }
}
