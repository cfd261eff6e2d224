//! Seeded, platform-independent random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::Tensor;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator family keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream keyed by a label such as `SS1/walking`, stable across platforms
/// and releases (the label is hashed with SHA-256).
pub fn keyed(seed: u64, key: &str) -> SeededRng {
    let digest = Sha256::digest(key.as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    substream(seed, u64::from_le_bytes(word))
}

pub fn uniform_vec(rng: &mut SeededRng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn normal_vec(rng: &mut SeededRng, len: usize, sigma: f64) -> Vec<f64> {
    (0..len)
        .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

impl Tensor {
    pub fn rand_uniform(rng: &mut SeededRng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(uniform_vec(rng, n, lo, hi), shape).expect("shape matches length")
    }

    pub fn rand_normal(rng: &mut SeededRng, shape: &[usize], sigma: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(normal_vec(rng, n, sigma), shape).expect("shape matches length")
    }
}
