//! Hash functions shared by every sketch of a run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::Symbol;

/// Finalizer from splitmix64; a bijection on `u64` with good avalanche.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit fingerprint of a symbol string, domain-separated by `tag`.
pub fn fingerprint(tag: u64, symbols: &[Symbol]) -> u64 {
    let mut h = mix64(tag ^ 0xA076_1D64_78BD_642F);
    for s in symbols {
        h = mix64(h.rotate_left(23) ^ (u64::from(s.0) + 1));
    }
    mix64(h ^ symbols.len() as u64)
}

/// Fingerprint of a word sequence (used for MinHash signatures).
pub fn fingerprint_words(tag: u64, words: &[u64]) -> u64 {
    let mut h = mix64(tag ^ 0xE703_7ED1_A0B4_28DB);
    for &w in words {
        h = mix64(h.rotate_left(23) ^ w);
    }
    mix64(h ^ words.len() as u64)
}

/// `d` independently drawn multiply-add-shift functions mapping 64-bit keys
/// into `[0, w)`.
///
/// `h(x) = ((a*x + b) mod 2^128) >> 64` is 2-universal for 64-bit keys when
/// `a`, `b` are uniform 128-bit values; the bucket is then taken with a
/// multiply-high range reduction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowHashes {
    width: usize,
    seed: u64,
    params: Vec<(u128, u128)>,
}

impl RowHashes {
    pub fn new(width: usize, depth: usize, seed: u64) -> Self {
        assert!(width > 0 && depth > 0, "sketch dimensions must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..depth)
            .map(|_| (rng.gen::<u128>() | 1, rng.gen::<u128>()))
            .collect();
        Self {
            width,
            seed,
            params,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.params.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-row `(a, b)` pairs.
    pub fn params(&self) -> &[(u128, u128)] {
        &self.params
    }

    #[inline]
    pub fn bucket(&self, row: usize, key: u64) -> usize {
        let (a, b) = self.params[row];
        let h = (a.wrapping_mul(key as u128).wrapping_add(b) >> 64) as u64;
        ((h as u128 * self.width as u128) >> 64) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets_in_range_and_deterministic() {
        let h = RowHashes::new(37, 3, 7);
        let g = RowHashes::new(37, 3, 7);
        for key in 0..1000u64 {
            for row in 0..3 {
                let b = h.bucket(row, mix64(key));
                assert!(b < 37);
                assert_eq!(b, g.bucket(row, mix64(key)));
            }
        }
    }

    #[test]
    fn buckets_roughly_uniform() {
        let h = RowHashes::new(16, 1, 99);
        let mut counts = [0usize; 16];
        for key in 0..16_000u64 {
            counts[h.bucket(0, fingerprint(1, &[Symbol(key as u32)]))] += 1;
        }
        for c in counts {
            assert!((800..1200).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn fingerprint_depends_on_order_and_tag() {
        let ab = [Symbol(0), Symbol(1)];
        let ba = [Symbol(1), Symbol(0)];
        assert_ne!(fingerprint(1, &ab), fingerprint(1, &ba));
        assert_ne!(fingerprint(1, &ab), fingerprint(2, &ab));
        assert_ne!(fingerprint(1, &[]), fingerprint(1, &[Symbol(0)]));
    }
}
