use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Seeded random stream.
///
/// Backed by ChaCha8 (a counter-based generator), seeded through
/// `seed_from_u64`. Independent streams for the same seed are selected with
/// [`Rng::with_stream`], so weight initialization and batch shuffling never
/// consume each other's randomness.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// Stream used for parameter initialization.
pub const STREAM_INIT: u64 = 0;
/// Stream used for per-epoch shuffling.
pub const STREAM_SHUFFLE: u64 = 1;
/// Stream used for dataset generation.
pub const STREAM_DATA: u64 = 2;
/// Stream used for train/test splitting.
pub const STREAM_SPLIT: u64 = 3;

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, STREAM_INIT)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<U>(&mut self, items: &mut [U]) {
        items.shuffle(&mut self.inner);
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}
