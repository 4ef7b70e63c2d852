use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Seed, worker count and batch size for a Monte Carlo run.
///
/// Runs are grouped into fixed-size batches and batch `b` draws from ChaCha8
/// stream `b` of the master seed. Batches are reduced in index order, so results
/// depend on the seed and batch size only, not on the number of workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub seed: u64,
    pub workers: usize,
    pub batch_size: u64,
}

impl MonteCarlo {
    pub const DEFAULT_BATCH: u64 = 512;

    /// Uses all available cores.
    pub fn new(seed: u64) -> Self {
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        MonteCarlo {
            seed,
            workers,
            batch_size: Self::DEFAULT_BATCH,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_batch_size(mut self, batch_size: u64) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    /// Same settings on an independent master seed, e.g. one per grid point.
    pub fn derive(&self, index: u64) -> Self {
        MonteCarlo {
            seed: derive_seed(self.seed, index),
            ..*self
        }
    }

    pub(crate) fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub(crate) fn pool(&self) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .expect("thread pool")
    }

    /// Runs `f(first_run, count, rng)` for every batch covering runs `0..n` and
    /// returns the batch results in batch order. The first error in batch order wins.
    pub(crate) fn map_batches<T, E, F>(&self, n: u64, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(u64, u64, &mut ChaCha8Rng) -> Result<T, E> + Sync,
    {
        let size = self.batch_size.max(1);
        let batches = n.div_ceil(size);
        let results: Vec<Result<T, E>> = self.pool().install(|| {
            (0..batches)
                .into_par_iter()
                .map(|b| {
                    let first = b * size;
                    let count = size.min(n - first);
                    f(first, count, &mut self.stream(b))
                })
                .collect()
        });
        results.into_iter().collect()
    }
}

/// SplitMix64 mix of `(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
