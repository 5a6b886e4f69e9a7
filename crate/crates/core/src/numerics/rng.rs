use rand::distr::{Distribution, Open01};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, StandardNormal};

/// Seeded random stream; identical `(seed, stream)` pairs replay identical draws.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

/// SplitMix64 finalizer, used to fold structured ids into a stream id.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    /// Stream keyed by a path of ids, e.g. `(seed, [epoch, batch, scene])`.
    pub fn keyed(seed: u64, ids: &[u64]) -> Self {
        let stream = ids.iter().fold(0x5EED_u64, |acc, &id| mix(acc ^ mix(id)));
        RngStream::new(seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw strictly inside (0, 1).
    pub fn open01(&mut self) -> f64 {
        Open01.sample(&mut self.rng)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    /// Symmetric Beta(alpha, alpha) draw; `alpha` must be positive.
    pub fn beta(&mut self, alpha: f64) -> f64 {
        Beta::new(alpha, alpha)
            .expect("beta parameter must be positive")
            .sample(&mut self.rng)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}
