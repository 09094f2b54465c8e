//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the [`Execution::Parallel`] strategy
//! fans work out over the rayon pool. Without it, every strategy runs
//! sequentially. Results are always assembled in index order, so outputs do not
//! depend on the strategy or the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch of independent work items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// `true` when work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Map `f` over `0..n`, returning results in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Map `f` over a slice, returning results in order.
    pub fn map_slice<I, T, F>(self, items: &[I], f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&I) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

/// Derive a per-chunk seed so Monte-Carlo chunks are reproducible under any strategy.
pub fn chunk_seed(base: u64, chunk: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ chunk.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample mean and standard error of a vector-valued Monte-Carlo statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub samples: usize,
}

impl McEstimate {
    /// `true` when `target[i]` lies within `k` standard errors of `mean[i]` for all `i`.
    pub fn within(&self, target: &[f64], k: f64) -> bool {
        self.mean
            .iter()
            .zip(&self.std_error)
            .zip(target)
            .all(|((m, se), t)| (m - t).abs() <= k * se)
    }
}

const MC_CHUNK: usize = 4096;

/// Average `draw` over `n` independent samples.
///
/// Samples are drawn in fixed-size chunks, each with its own ChaCha stream
/// derived from `seed`, so the estimate is identical for both strategies.
pub fn monte_carlo<F>(exec: Execution, n: usize, dim: usize, seed: u64, draw: F) -> McEstimate
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync + Send,
{
    let chunks = n.div_ceil(MC_CHUNK);
    let partials = exec.map_range(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(chunk_seed(seed, c as u64));
        let len = MC_CHUNK.min(n - c * MC_CHUNK);
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        let mut buf = vec![0.0; dim];
        for _ in 0..len {
            draw(&mut rng, &mut buf);
            for i in 0..dim {
                sum[i] += buf[i];
                sum_sq[i] += buf[i] * buf[i];
            }
        }
        (sum, sum_sq)
    });
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for (s, sq) in partials {
        for i in 0..dim {
            sum[i] += s[i];
            sum_sq[i] += sq[i];
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std_error = mean
        .iter()
        .zip(&sum_sq)
        .map(|(m, sq)| {
            let var = (sq / nf - m * m).max(0.0) * nf / (nf - 1.0);
            (var / nf).sqrt()
        })
        .collect();
    McEstimate {
        mean,
        std_error,
        samples: n,
    }
}
