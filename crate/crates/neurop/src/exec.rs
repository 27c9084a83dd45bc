use neurop_core::train::{Executor, Serial};
use neurop_core::{Result, Tensor};

type Job<'a> = &'a (dyn Fn(usize) -> Result<(f64, Vec<Tensor>)> + Sync);

/// Runs jobs on a dedicated rayon pool. Results keep job order, so the
/// reduction downstream matches [`Serial`] bit for bit.
#[cfg(feature = "parallel")]
#[derive(Debug)]
pub struct Parallel {
    pool: rayon::ThreadPool,
}

#[cfg(feature = "parallel")]
impl Parallel {
    pub fn new(workers: usize) -> anyhow::Result<Self> {
        Ok(Parallel { pool: rayon::ThreadPoolBuilder::new().num_threads(workers).build()? })
    }
}

#[cfg(feature = "parallel")]
impl Executor for Parallel {
    fn map(&self, jobs: usize, f: Job<'_>) -> Vec<Result<(f64, Vec<Tensor>)>> {
        use rayon::prelude::*;
        self.pool.install(|| (0..jobs).into_par_iter().map(f).collect())
    }
}

/// Serial for 0 or 1 workers, otherwise a pool when the `parallel` feature is on.
pub fn executor(workers: usize) -> anyhow::Result<Box<dyn Executor>> {
    #[cfg(feature = "parallel")]
    if workers > 1 {
        return Ok(Box::new(Parallel::new(workers)?));
    }
    #[cfg(not(feature = "parallel"))]
    if workers > 1 {
        anyhow::bail!("workers = {workers} needs the `parallel` feature");
    }
    Ok(Box::new(Serial))
}
