//! Per-state stacks of sketches, one layer per future length, plus the
//! run-wide registries of keys observed in each layer.

use std::hash::{Hash, Hasher};
use std::sync::Arc;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use super::cms::CountMinSketch;
use super::hash::{fingerprint, fingerprint_words, RowHashes};
use super::minhash::MinHasher;
use crate::error::{Error, Result};
use crate::model::Symbol;

const REDUCED_TAG: u64 = 0x5245_4455_4345_4421;

/// Shape of the sketches kept in every state.
///
/// Layers `1..=raw_layers()` hold the outgoing substrings of that exact
/// length. With MinHash enabled (`minhash_len = Some(l_m)` and `l_m <
/// future_len`) the lengths `l_m + 1..=future_len` are reduced to signatures
/// and share one extra layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchLayout {
    pub width: usize,
    pub depth: usize,
    pub future_len: usize,
    pub minhash_len: Option<usize>,
}

impl SketchLayout {
    pub fn new(width: usize, depth: usize, future_len: usize) -> Self {
        Self {
            width,
            depth,
            future_len,
            minhash_len: None,
        }
    }

    pub fn with_minhash(mut self, l_m: usize) -> Self {
        self.minhash_len = Some(l_m);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.depth == 0 {
            return Err(Error::InvalidParameter(
                "sketch width and depth must be positive".into(),
            ));
        }
        if self.future_len == 0 {
            return Err(Error::InvalidParameter("future length must be >= 1".into()));
        }
        if let Some(lm) = self.minhash_len {
            if lm == 0 || lm >= self.future_len {
                return Err(Error::InvalidParameter(format!(
                    "MinHash length {lm} must lie in 1..{}",
                    self.future_len
                )));
            }
        }
        Ok(())
    }

    pub fn raw_layers(&self) -> usize {
        match self.minhash_len {
            Some(lm) if lm < self.future_len => lm,
            _ => self.future_len,
        }
    }

    pub fn has_reduced_layer(&self) -> bool {
        self.raw_layers() < self.future_len
    }

    pub fn num_layers(&self) -> usize {
        self.raw_layers() + usize::from(self.has_reduced_layer())
    }

    /// Number of keys a single visit inserts into `layer`.
    pub fn multiplicity(&self, layer: usize) -> u64 {
        if layer < self.raw_layers() {
            1
        } else {
            (self.future_len - self.raw_layers()) as u64
        }
    }

    /// Dense footprint of one state's sketches.
    pub fn bytes_per_stack(&self) -> usize {
        self.num_layers() * self.width * self.depth * std::mem::size_of::<u64>()
    }
}

/// Keys observed anywhere in the run, one ordered set per layer.
#[derive(Debug, Clone, Default)]
pub struct Registries {
    layers: Vec<IndexSet<u64>>,
}

impl Registries {
    pub fn layer(&self, layer: usize) -> &IndexSet<u64> {
        &self.layers[layer]
    }

    /// Grows whenever a new key shows up; used to invalidate cached verdicts.
    pub fn generation(&self) -> usize {
        self.layers.iter().map(IndexSet::len).sum()
    }
}

/// Shared hashing state and registries for all stacks of a run.
#[derive(Debug, Clone)]
pub struct SketchContext {
    layout: SketchLayout,
    hashes: Arc<RowHashes>,
    minhasher: MinHasher,
    registries: Registries,
}

impl SketchContext {
    pub fn new(layout: SketchLayout, seed: u64) -> Result<Self> {
        layout.validate()?;
        Ok(Self {
            layout,
            hashes: Arc::new(RowHashes::new(layout.width, layout.depth, seed)),
            minhasher: MinHasher::new(layout.minhash_len.unwrap_or(0), seed),
            registries: Registries {
                layers: vec![IndexSet::new(); layout.num_layers()],
            },
        })
    }

    pub fn layout(&self) -> &SketchLayout {
        &self.layout
    }

    pub fn hashes(&self) -> &Arc<RowHashes> {
        &self.hashes
    }

    pub fn registries(&self) -> &Registries {
        &self.registries
    }

    pub fn new_stack(&self) -> SketchStack {
        SketchStack {
            layers: (0..self.layout.num_layers())
                .map(|_| CountMinSketch::new(self.hashes.clone()))
                .collect(),
        }
    }

    /// The `(layer, key)` pairs one visit inserts for an outgoing suffix.
    ///
    /// `suffix` starts at the next symbol and runs to the end of the trace
    /// (final marker included). Layer `k` takes the first `k` symbols, or the
    /// whole suffix when it is shorter.
    pub fn keys_for(&self, suffix: &[Symbol]) -> Vec<(usize, u64)> {
        let raw = self.layout.raw_layers();
        let mut keys = Vec::with_capacity(self.layout.future_len);
        for k in 1..=raw {
            let sub = &suffix[..k.min(suffix.len())];
            keys.push((k - 1, fingerprint(k as u64, sub)));
        }
        if self.layout.has_reduced_layer() {
            for k in raw + 1..=self.layout.future_len {
                let sub = &suffix[..k.min(suffix.len())];
                let sig = self.minhasher.signature(sub);
                keys.push((raw, fingerprint_words(REDUCED_TAG, &sig.values)));
            }
        }
        keys
    }

    /// Stores one visit's outgoing substrings in `stack` and registers them.
    pub fn record(&mut self, stack: &mut SketchStack, suffix: &[Symbol], ends_here: bool) {
        self.record_n(stack, suffix, ends_here, 1);
    }

    /// Same as `count` calls to [`record`](Self::record).
    pub fn record_n(&mut self, stack: &mut SketchStack, suffix: &[Symbol], ends_here: bool, count: u64) {
        if count == 0 {
            return;
        }
        for (layer, key) in self.keys_for(suffix) {
            stack.layers[layer].store_n(key, count);
            self.registries.layers[layer].insert(key);
        }
        if ends_here {
            for layer in &mut stack.layers {
                layer.record_final_n(count);
            }
        }
    }
}

/// One count-min sketch per layer, all sharing the run's hash functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchStack {
    layers: Vec<CountMinSketch>,
}

impl SketchStack {
    pub fn layers(&self) -> &[CountMinSketch] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &CountMinSketch {
        &self.layers[i]
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::SketchMismatch("layer counts differ".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &Self) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::SketchMismatch("layer counts differ".into()));
        }
        // check every layer before touching any of them
        for (a, b) in self.layers.iter().zip(&other.layers) {
            super::cms::subtract(a, b)?;
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.sub_assign(b)?;
        }
        Ok(())
    }
}

impl Hash for SketchStack {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.layers.len().hash(state);
        for l in &self.layers {
            l.hash(state);
        }
    }
}
