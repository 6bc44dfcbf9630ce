//! Min-entropy of an empirical distribution.

use std::collections::HashMap;
use std::hash::Hash;

/// `-log2(max_i c_i / sum_i c_i)`. `None` for an empty histogram.
pub fn min_entropy(histogram: &[u64]) -> Option<f64> {
    let total: u64 = histogram.iter().sum();
    let max = *histogram.iter().max()?;
    if total == 0 {
        return None;
    }
    Some((total as f64 / max as f64).log2())
}

pub fn histogram<T: Eq + Hash>(samples: impl IntoIterator<Item = T>) -> Vec<u64> {
    let mut counts: HashMap<T, u64> = HashMap::new();
    for s in samples {
        *counts.entry(s).or_default() += 1;
    }
    counts.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zipf::{harmonic, ZipfSampler, DEFAULT_EXPONENT, DEFAULT_SUPPORT};

    #[test]
    fn uniform_and_point_mass() {
        assert_eq!(min_entropy(&[5; 8]), Some(3.0));
        assert_eq!(min_entropy(&[42]), Some(0.0));
        assert_eq!(min_entropy(&[]), None);
        assert_eq!(min_entropy(&[0, 0]), None);
    }

    #[test]
    fn zipf_head_probability() {
        let mut z = ZipfSampler::new(DEFAULT_SUPPORT, DEFAULT_EXPONENT, 3);
        let hist = histogram((0..1_000_000).map(|_| z.sample_rank()));
        let analytic = harmonic(DEFAULT_SUPPORT, DEFAULT_EXPONENT).log2();
        let empirical = min_entropy(&hist).unwrap();
        assert!((empirical - analytic).abs() < 0.1, "{empirical} vs {analytic}");
    }
}
