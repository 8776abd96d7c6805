//! Mergeable count-min sketches and MinHash key reduction.

mod cms;
pub mod hash;
mod minhash;
mod stack;

pub use cms::{add, sketch_dimensions, subtract, CountMinSketch, SketchDump};
pub use hash::RowHashes;
pub use minhash::{jaccard, minhash_reduce, MinHashSignature, MinHasher};
pub use stack::{Registries, SketchContext, SketchLayout, SketchStack};

/// Practical default when no error bounds are given.
pub const DEFAULT_WIDTH: usize = 128;
pub const DEFAULT_DEPTH: usize = 4;
