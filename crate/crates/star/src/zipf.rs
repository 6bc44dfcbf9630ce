//! Zipf-distributed measurement sampling by inverse CDF over a precomputed table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub const DEFAULT_SUPPORT: usize = 10_000;
pub const DEFAULT_EXPONENT: f64 = 1.03;

/// `sum_{k=1}^{n} k^-s`.
pub fn harmonic(n: usize, s: f64) -> f64 {
    (1..=n).map(|k| (k as f64).powf(-s)).sum()
}

#[derive(Clone, Debug)]
pub struct ZipfSampler {
    support: usize,
    exponent: f64,
    cdf: Vec<f64>,
    rng: ChaCha20Rng,
}

impl ZipfSampler {
    /// Panics if `support` is zero or `exponent` is not positive.
    pub fn new(support: usize, exponent: f64, seed: u64) -> Self {
        assert!(support > 0, "empty support");
        assert!(exponent > 0.0, "exponent must be positive");
        let norm = harmonic(support, exponent);
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=support)
            .map(|k| {
                acc += (k as f64).powf(-exponent) / norm;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        ZipfSampler {
            support,
            exponent,
            cdf,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn support(&self) -> usize {
        self.support
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Analytic probability of `rank` (1-based).
    pub fn probability(&self, rank: usize) -> f64 {
        if rank == 0 || rank > self.support {
            return 0.0;
        }
        let below = if rank == 1 { 0.0 } else { self.cdf[rank - 2] };
        self.cdf[rank - 1] - below
    }

    /// Draws a rank in `1..=support`.
    pub fn sample_rank(&mut self) -> usize {
        let u: f64 = self.rng.gen();
        self.cdf.partition_point(|&c| c <= u).min(self.support - 1) + 1
    }
}

/// Fixed 32-byte measurement for a rank.
pub fn measurement_for_rank(rank: usize) -> [u8; 32] {
    Sha256::new()
        .chain_update(b"STAR-VAL")
        .chain_update((rank as u64).to_be_bytes())
        .finalize()
        .into()
}

pub fn sample_ranks(n: usize, sampler: &mut ZipfSampler) -> Vec<usize> {
    (0..n).map(|_| sampler.sample_rank()).collect()
}

pub fn sample_measurements(n: usize, sampler: &mut ZipfSampler) -> Vec<[u8; 32]> {
    (0..n).map(|_| measurement_for_rank(sampler.sample_rank())).collect()
}
