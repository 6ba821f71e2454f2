//! Block-parallel execution.
//!
//! Work is split into index-addressed blocks. With the `parallel` feature and
//! more than one worker the blocks run on a dedicated rayon pool; otherwise
//! they run in a plain loop. Results always come back in block order, so any
//! reduction over them is schedule independent.

use crate::error::{invalid, Result};

/// Replicates per work item.
pub const DEFAULT_BLOCK_SIZE: usize = 4096;

pub struct Executor {
    workers: usize,
    block_size: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("workers", &self.workers)
            .field("block_size", &self.block_size)
            .field("parallel", &self.is_parallel())
            .finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Self {
            workers: 1,
            block_size: DEFAULT_BLOCK_SIZE,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// Executor with `workers` threads. Without the `parallel` feature every
    /// worker count degrades to the sequential loop.
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return invalid("worker count must be at least 1");
        }
        #[cfg(feature = "parallel")]
        {
            let pool = if workers > 1 {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(workers)
                        .thread_name(|i| format!("nestmlmc-{i}"))
                        .build()
                        .map_err(|e| crate::error::Error::InvalidInput(format!("thread pool: {e}")))?,
                )
            } else {
                None
            };
            Ok(Self { workers, block_size: DEFAULT_BLOCK_SIZE, pool })
        }
        #[cfg(not(feature = "parallel"))]
        {
            if workers > 1 {
                log::debug!("built without the `parallel` feature; running {workers} workers sequentially");
            }
            Ok(Self { workers, block_size: DEFAULT_BLOCK_SIZE })
        }
    }

    pub fn with_block_size(mut self, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return invalid("block size must be positive");
        }
        self.block_size = block_size;
        Ok(self)
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// Evaluates `f(b)` for every block `b` in `0..n_blocks`, returned in block order.
    pub fn map_blocks<T, F>(&self, n_blocks: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..n_blocks).into_par_iter().map(&f).collect());
        }
        (0..n_blocks).map(f).collect()
    }

    /// Splits `n` replicates into blocks of `block_size` and maps each block's
    /// index range.
    pub fn map_ranges<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(std::ops::Range<u64>) -> T + Sync + Send,
    {
        let bs = self.block_size as u64;
        let n_blocks = n.div_ceil(bs) as usize;
        self.map_blocks(n_blocks, |b| {
            let start = b as u64 * bs;
            f(start..(start + bs).min(n))
        })
    }
}
