use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Tensor;
use crate::error::{arg_err, Result};

/// Seeded, platform-independent random source.
///
/// Parallel workers must not share an instance; derive one per stream with
/// [`Rng::for_stream`].
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent generator for `stream_id`, seeded with `base_seed ^ stream_id`.
    pub fn for_stream(base_seed: u64, stream_id: u64) -> Self {
        Rng::new(base_seed ^ stream_id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal(&mut self, mean: f64, sigma: f64) -> f64 {
        mean + sigma * self.standard_normal()
    }

    pub fn coin(&mut self) -> bool {
        self.inner.random::<bool>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }

    /// `amount` distinct indices drawn uniformly from `0..length`.
    pub fn sample_indices(&mut self, length: usize, amount: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, length, amount).into_vec()
    }
}

/// `n` i.i.d. draws from `N(mean, sigma²)`.
pub fn sample_gaussian(rng: &mut Rng, n: usize, mean: f64, sigma: f64) -> Result<Tensor> {
    if !(sigma >= 0.0) {
        return Err(arg_err!("sigma must be nonnegative, got {sigma}"));
    }
    if n == 0 {
        return Err(arg_err!("sample count must be positive"));
    }
    Tensor::new(vec![n], (0..n).map(|_| rng.normal(mean, sigma)).collect())
}

/// `n` draws from the Rayleigh distribution with the given scale, built as
/// the magnitude of two independent `N(0, scale²)` components.
pub fn sample_rayleigh(rng: &mut Rng, n: usize, scale: f64) -> Result<Tensor> {
    if !(scale > 0.0) {
        return Err(arg_err!("rayleigh scale must be positive, got {scale}"));
    }
    if n == 0 {
        return Err(arg_err!("sample count must be positive"));
    }
    Tensor::new(vec![n], (0..n).map(|_| rayleigh_draw(rng, scale)).collect())
}

pub(crate) fn rayleigh_draw(rng: &mut Rng, scale: f64) -> f64 {
    let a = rng.normal(0.0, scale);
    let b = rng.normal(0.0, scale);
    a.hypot(b)
}
