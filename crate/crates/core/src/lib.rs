//! Learning probabilistic deterministic automata from data streams.
//!
//! States of a partially built prefix tree carry count-min sketches of their
//! outgoing substrings. Red/blue state merging compares those sketches with a
//! Hoeffding test and scores candidates by cosine similarity. While streaming,
//! every minimization pass is undone after the hypothesis is saved and its
//! refinements are replayed on the next batch.

pub mod error;
pub mod eval;
pub mod heuristics;
pub mod model;
pub mod pac;
pub mod sketch;
pub mod streamer;
pub mod synth;
pub mod tree;

pub use error::{Error, Result};
pub use model::{Alphabet, Pdfa, Symbol, Trace};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/sketches.md")]
    mod sketches {}
    #[doc = include_str!("../../../book/src/prefix-tree.md")]
    mod prefix_tree {}
    #[doc = include_str!("../../../book/src/heuristics.md")]
    mod heuristics {}
    #[doc = include_str!("../../../book/src/streaming.md")]
    mod streaming {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pac.md")]
    mod pac {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
