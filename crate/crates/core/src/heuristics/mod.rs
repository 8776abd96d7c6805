//! Consistency tests and merge scores for red/blue state pairs.
//!
//! Every heuristic answers two questions about a pair of states: may they be
//! merged, and if so how similar are they (a cosine score in `[-1, 1]`).

mod alergia;
mod css;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch::{SketchLayout, DEFAULT_DEPTH, DEFAULT_WIDTH};
use crate::tree::{NodeId, PrefixTree};

pub use alergia::alergia_consistency;
pub use css::{css_cellwise_consistency, css_consistency};
pub use stats::{cosine_similarity, hoeffding_accepts, hoeffding_bound, hoeffding_check};

/// Outcome of one consistency test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeuristicVerdict {
    pub consistent: bool,
    /// Similarity score; present exactly when `consistent`.
    pub score: Option<f64>,
    /// Sketch layers (or tree levels for Alergia) that were examined.
    pub layers_evaluated: usize,
}

impl HeuristicVerdict {
    pub fn accept(score: f64, layers_evaluated: usize) -> Self {
        Self {
            consistent: true,
            score: Some(score),
            layers_evaluated,
        }
    }

    pub fn reject(layers_evaluated: usize) -> Self {
        Self {
            consistent: false,
            score: None,
            layers_evaluated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeuristicKind {
    Css,
    CssMinhash,
    CssCellwise,
    Alergia,
    AlergiaKtails,
}

impl HeuristicKind {
    pub const ALL: [HeuristicKind; 5] = [
        HeuristicKind::Css,
        HeuristicKind::CssMinhash,
        HeuristicKind::CssCellwise,
        HeuristicKind::Alergia,
        HeuristicKind::AlergiaKtails,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeuristicKind::Css => "css",
            HeuristicKind::CssMinhash => "css-minhash",
            HeuristicKind::CssCellwise => "css-cellwise",
            HeuristicKind::Alergia => "alergia",
            HeuristicKind::AlergiaKtails => "alergia-ktails",
        }
    }

    pub fn uses_sketches(self) -> bool {
        matches!(
            self,
            HeuristicKind::Css | HeuristicKind::CssMinhash | HeuristicKind::CssCellwise
        )
    }
}

impl fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeuristicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeuristicKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown heuristic `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    pub kind: HeuristicKind,
    /// Hoeffding confidence.
    pub alpha: f64,
    /// Longest future stored in the sketches.
    pub future_len: usize,
    /// MinHash target length, used by `CssMinhash`.
    pub minhash_len: usize,
    /// Lookahead depth for `AlergiaKtails`.
    pub k: usize,
    pub width: usize,
    pub depth: usize,
    /// Optional amount subtracted from the Hoeffding bound to absorb sketch
    /// overestimates. Off by default.
    pub narrow: Option<f64>,
}

impl HeuristicConfig {
    pub fn new(kind: HeuristicKind) -> Self {
        Self {
            kind,
            alpha: 0.05,
            future_len: 3,
            minhash_len: 2,
            k: 2,
            width: DEFAULT_WIDTH,
            depth: DEFAULT_DEPTH,
            narrow: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if let Some(layout) = self.sketch_layout() {
            layout.validate()?;
        }
        if let Some(b) = self.narrow {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "narrowing must be non-negative, got {b}"
                )));
            }
        }
        Ok(())
    }

    /// Sketch shape the tree must maintain for this heuristic.
    pub fn sketch_layout(&self) -> Option<SketchLayout> {
        let base = SketchLayout::new(self.width, self.depth, self.future_len);
        match self.kind {
            HeuristicKind::Css | HeuristicKind::CssCellwise => Some(base),
            HeuristicKind::CssMinhash => Some(base.with_minhash(self.minhash_len)),
            HeuristicKind::Alergia | HeuristicKind::AlergiaKtails => None,
        }
    }

    /// Short label for reports, e.g. `css F=3` or `alergia-ktails k=2`.
    pub fn label(&self) -> String {
        match self.kind {
            HeuristicKind::Css | HeuristicKind::CssCellwise => {
                format!("{} F={}", self.kind, self.future_len)
            }
            HeuristicKind::CssMinhash => {
                format!("{} F={} lm={}", self.kind, self.future_len, self.minhash_len)
            }
            HeuristicKind::Alergia => self.kind.to_string(),
            HeuristicKind::AlergiaKtails => format!("{} k={}", self.kind, self.k),
        }
    }

    /// The F or k value reported next to the heuristic name.
    pub fn param(&self) -> usize {
        match self.kind {
            HeuristicKind::Alergia => 0,
            HeuristicKind::AlergiaKtails => self.k,
            _ => self.future_len,
        }
    }
}

/// Tests whether tree states `a` and `b` may be merged.
pub fn evaluate(
    config: &HeuristicConfig,
    tree: &PrefixTree,
    a: NodeId,
    b: NodeId,
) -> Result<HeuristicVerdict> {
    let (na, nb) = (tree.node(a), tree.node(b));
    let narrow = config.narrow.unwrap_or(0.0);
    match config.kind {
        HeuristicKind::Css | HeuristicKind::CssMinhash | HeuristicKind::CssCellwise => {
            let ctx = tree.sketch_context().ok_or_else(|| {
                Error::InvalidParameter(format!("{} needs a tree with sketches", config.kind))
            })?;
            let (sa, sb) = match (na.sketches(), nb.sketches()) {
                (Some(sa), Some(sb)) => (sa, sb),
                _ => return Err(Error::SketchMismatch("state without sketches".into())),
            };
            if config.kind == HeuristicKind::CssCellwise {
                css_cellwise_consistency(sa, na.size, sb, nb.size, ctx.layout(), config.alpha, narrow)
            } else {
                Ok(css_consistency(sa, na.size, sb, nb.size, ctx, config.alpha, narrow))
            }
        }
        HeuristicKind::Alergia => Ok(alergia_consistency(tree, a, b, config.alpha, 0)),
        HeuristicKind::AlergiaKtails => Ok(alergia_consistency(tree, a, b, config.alpha, config.k)),
    }
}
