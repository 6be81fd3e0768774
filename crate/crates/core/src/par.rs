//! Ordered data-parallel map. Results always come back in input order, so
//! output never depends on the worker count.

#[cfg(feature = "parallel")]
use std::sync::Arc;

use crate::error::Result;

#[derive(Clone)]
pub struct Jobs {
    n: usize,
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Jobs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Jobs").field("n", &self.n).finish()
    }
}

impl Jobs {
    /// `n` workers; 0 means one. Without the `parallel` feature every map is
    /// sequential regardless of `n`.
    pub fn new(n: usize) -> Self {
        let n = n.max(1);
        #[cfg(feature = "parallel")]
        {
            let pool = (n > 1).then(|| {
                Arc::new(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build()
                        .expect("failed to start worker threads"),
                )
            });
            Self { n, pool }
        }
        #[cfg(not(feature = "parallel"))]
        Self { n }
    }

    pub fn sequential() -> Self {
        Self::new(1)
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }

    /// Like [`map`](Self::map); the first error in input order wins.
    pub fn try_map<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}

impl Default for Jobs {
    fn default() -> Self {
        Self::sequential()
    }
}
