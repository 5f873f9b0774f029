//! Independent-trial fan-out.
//!
//! Every trial gets its own RNG stream derived from `(seed, trial index)`,
//! so results do not depend on how trials are scheduled across threads.
//! With the `parallel` feature the trials run on the current rayon pool;
//! without it, or with [`Execution::Sequential`], they run in order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Deterministic RNG for trial `index` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Run `f(index, rng)` for `index in 0..n` and collect results in index order.
pub fn map_trials<T, F>(exec: Execution, seed: u64, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n)
                .into_par_iter()
                .map(|i| f(i, &mut trial_rng(seed, i as u64)))
                .collect()
        }
        _ => (0..n).map(|i| f(i, &mut trial_rng(seed, i as u64))).collect(),
    }
}

/// Map over a slice of inputs, preserving order.
pub fn map_items<I, T, F>(exec: Execution, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}
