//! Chunked Monte Carlo with per-chunk seeds. A chunk's random stream depends
//! only on (master seed, cell, chunk), so results do not depend on how many
//! workers run the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Error rates below this are not resolved even at 4e6 trials.
pub const SER_RESOLUTION: f64 = 2.5e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SerEstimate {
    pub trials: u64,
    pub errors: u64,
    pub ser: f64,
    /// Binomial standard error sqrt(p (1 - p) / n).
    pub std_err: f64,
}

impl SerEstimate {
    pub fn new(errors: u64, trials: u64) -> Self {
        let ser = errors as f64 / trials as f64;
        Self {
            trials,
            errors,
            ser,
            std_err: (ser * (1.0 - ser) / trials as f64).sqrt(),
        }
    }

    pub fn below_resolution(&self) -> bool {
        self.ser < SER_RESOLUTION
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator of chunk `chunk` of cell `cell`.
pub fn chunk_rng(master_seed: u64, cell: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(master_seed ^ mix(cell)));
    rng.set_stream(chunk);
    rng
}

/// Runs `trials` Bernoulli trials; `trial` returns true on an error.
/// The calling thread pool decides the parallelism.
pub fn count_errors<F>(master_seed: u64, cell: u64, trials: u64, chunk_size: u64, trial: F) -> SerEstimate
where
    F: Fn(&mut ChaCha8Rng) -> bool + Sync,
{
    let chunks = trials.div_ceil(chunk_size);
    let errors: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(master_seed, cell, c);
            let n = chunk_size.min(trials - c * chunk_size);
            (0..n).filter(|_| trial(&mut rng)).count() as u64
        })
        .sum();
    SerEstimate::new(errors, trials)
}

pub fn thread_pool(threads: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        anyhow::ensure!(n >= 1, "--threads must be >= 1");
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn standard_error() {
        let e = SerEstimate::new(25, 100);
        assert_eq!(e.ser, 0.25);
        assert!((e.std_err - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        assert_eq!(SerEstimate::new(0, 10).std_err, 0.0);
        assert!(SerEstimate::new(0, 10).below_resolution());
    }

    #[test]
    fn independent_of_worker_count() {
        let run = |threads| {
            thread_pool(Some(threads))
                .unwrap()
                .install(|| count_errors(7, 3, 10_007, 100, |r| r.random::<f64>() < 0.3))
        };
        assert_eq!(run(1), run(8));
    }

    #[test]
    fn chunks_and_cells_get_distinct_streams() {
        let a: u64 = chunk_rng(1, 0, 0).random();
        let b: u64 = chunk_rng(1, 0, 1).random();
        let c: u64 = chunk_rng(1, 1, 0).random();
        let d: u64 = chunk_rng(2, 0, 0).random();
        assert!(a != b && a != c && a != d && b != c);
        assert_eq!(a, chunk_rng(1, 0, 0).random::<u64>());
    }

    #[test]
    fn bernoulli_rate() {
        let e = count_errors(5, 0, 200_000, 1000, |r| r.random::<f64>() < 0.1);
        assert!((e.ser - 0.1).abs() < 4.0 * e.std_err);
        assert_eq!(e.trials, 200_000);
    }
}
