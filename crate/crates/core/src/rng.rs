use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Seeded random stream. One per trial; never shared between threads.
#[derive(Debug, Clone)]
pub struct RandomSource {
    inner: ChaCha8Rng,
}

impl RandomSource {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream `trial_index` of `base_seed`. Distinct indices select distinct
    /// ChaCha streams under the same key, so they never overlap.
    pub fn for_trial(base_seed: u64, trial_index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(base_seed);
        inner.set_stream(trial_index);
        Self { inner }
    }

    /// Uniform draw on `[low, high]`; returns `low` for a degenerate range.
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        if p >= 1.0 {
            return true;
        }
        self.inner.random::<f64>() < p
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Gaussian draw with mean 0 and standard deviation `sd`; 0 when `sd == 0`.
    pub fn gaussian(&mut self, sd: f64) -> f64 {
        if sd == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sd).expect("sd validated non-negative").sample(&mut self.inner)
    }

    /// Pick up to `k` distinct elements of `items`, in draw order.
    pub fn sample_without_replacement<T: Copy>(&mut self, items: &[T], k: usize) -> Vec<T> {
        let mut pool = items.to_vec();
        let k = k.min(pool.len());
        for i in 0..k {
            let j = i + self.index(pool.len() - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Random stream for trial `trial_index` under `base_seed`.
pub fn derive_trial_rng(base_seed: u64, trial_index: u64) -> RandomSource {
    RandomSource::for_trial(base_seed, trial_index)
}
