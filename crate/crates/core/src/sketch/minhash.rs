//! MinHash signatures over the symbol set of a string.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::hash::mix64;
use crate::model::Symbol;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
}

/// `l_m` independently seeded hash functions on symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHasher {
    seeds: Vec<u64>,
}

impl MinHasher {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6D69_6E68_6173_6821);
        Self {
            seeds: (0..len).map(|_| rng.gen()).collect(),
        }
    }

    pub fn from_seeds(seeds: Vec<u64>) -> Self {
        Self { seeds }
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    /// One minimum per hash function; depends only on the set of symbols.
    pub fn signature(&self, symbols: &[Symbol]) -> MinHashSignature {
        MinHashSignature {
            values: self
                .seeds
                .iter()
                .map(|&seed| {
                    symbols
                        .iter()
                        .map(|s| mix64(seed ^ mix64(u64::from(s.0))))
                        .min()
                        .unwrap_or(u64::MAX)
                })
                .collect(),
        }
    }
}

/// Reduces a suffix to a signature of `l_m` minima.
pub fn minhash_reduce(suffix: &[Symbol], hasher: &MinHasher) -> MinHashSignature {
    hasher.signature(suffix)
}

/// Jaccard similarity of the symbol sets of two strings.
pub fn jaccard(a: &[Symbol], b: &[Symbol]) -> f64 {
    use std::collections::BTreeSet;
    let sa: BTreeSet<_> = a.iter().collect();
    let sb: BTreeSet<_> = b.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}
