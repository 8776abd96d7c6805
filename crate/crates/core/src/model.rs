//! Alphabet, traces and the probabilistic automaton every other module
//! produces or consumes.
//!
//! The end-of-string marker is an ordinary alphabet index: for an alphabet of
//! `k` real symbols it is index `k`. Parsers append it to every trace and the
//! JSON/DOT printers strip it again (it shows up as a state's `final_prob`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a state's outgoing mass sums to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

pub const MODEL_SCHEMA: &str = "pdfa-stream.model/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symbol(pub u32);

impl Symbol {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Number of real symbols; the final marker sits right after them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    size: u32,
}

impl Alphabet {
    pub fn new(size: u32) -> Self {
        Self { size }
    }

    /// Number of real symbols, excluding the final marker.
    pub fn size(self) -> usize {
        self.size as usize
    }

    /// Number of symbols including the final marker.
    pub fn extended_size(self) -> usize {
        self.size as usize + 1
    }

    pub fn final_symbol(self) -> Symbol {
        Symbol(self.size)
    }

    pub fn is_final(self, symbol: Symbol) -> bool {
        symbol.0 == self.size
    }

    pub fn symbols(self) -> impl Iterator<Item = Symbol> {
        (0..self.size).map(Symbol)
    }
}

/// A string over the alphabet, always terminated by exactly one final marker.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trace {
    symbols: Vec<Symbol>,
}

impl Trace {
    /// Builds a trace from raw symbols and appends the final marker.
    pub fn new(alphabet: Alphabet, raw: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut symbols = Vec::new();
        for s in raw {
            if s >= alphabet.size {
                return Err(Error::InvalidParameter(format!(
                    "symbol {s} outside alphabet of size {}",
                    alphabet.size
                )));
            }
            symbols.push(Symbol(s));
        }
        symbols.push(alphabet.final_symbol());
        Ok(Self { symbols })
    }

    /// All symbols including the trailing final marker.
    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// Symbols without the final marker.
    pub fn body(&self) -> &[Symbol] {
        &self.symbols[..self.symbols.len() - 1]
    }

    /// Length including the final marker (always at least one).
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub type StateId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// `None` when the probability mass is known but the target state was not
    /// kept in the model; strings taking it get probability zero.
    pub target: Option<StateId>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PdfaState {
    pub final_prob: f64,
    pub transitions: BTreeMap<Symbol, Transition>,
}

impl PdfaState {
    pub fn outgoing_mass(&self) -> f64 {
        self.final_prob + self.transitions.values().map(|t| t.prob).sum::<f64>()
    }
}

/// A probabilistic deterministic automaton with per-state symbol and final
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Pdfa {
    pub alphabet: Alphabet,
    pub root: StateId,
    pub states: Vec<PdfaState>,
}

/// Result of running a trace through a [`Pdfa`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StringProbability {
    pub probability: f64,
    /// False when the walk hit a missing transition (probability is then 0).
    pub complete: bool,
}

impl Pdfa {
    /// A single absorbing state that accepts only the empty string.
    pub fn root_only(alphabet: Alphabet) -> Self {
        Self {
            alphabet,
            root: 0,
            states: vec![PdfaState {
                final_prob: 1.0,
                transitions: BTreeMap::new(),
            }],
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Probability of `trace`: the product of the symbol probabilities along
    /// the path times the final probability of the state it ends in.
    pub fn string_probability(&self, trace: &Trace) -> StringProbability {
        let mut state = self.root;
        let mut prob = 1.0;
        for &symbol in trace.body() {
            match self.states[state].transitions.get(&symbol) {
                Some(Transition {
                    target: Some(next),
                    prob: p,
                }) => {
                    prob *= p;
                    state = *next;
                }
                _ => {
                    return StringProbability {
                        probability: 0.0,
                        complete: false,
                    }
                }
            }
        }
        StringProbability {
            probability: prob * self.states[state].final_prob,
            complete: true,
        }
    }

    /// Checks that every state's outgoing mass is one.
    pub fn check_normalized(&self) -> Result<()> {
        for (id, state) in self.states.iter().enumerate() {
            let mass = state.outgoing_mass();
            if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::InvalidParameter(format!(
                    "state {id} has outgoing mass {mass}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            schema: MODEL_SCHEMA.to_string(),
            alphabet_size: self.alphabet.size(),
            root: self.root,
            states: self
                .states
                .iter()
                .enumerate()
                .map(|(id, s)| StateDoc {
                    id,
                    final_prob: s.final_prob,
                    transitions: s
                        .transitions
                        .iter()
                        .map(|(sym, t)| TransitionDoc {
                            symbol: sym.0,
                            target: t.target,
                            prob: t.prob,
                        })
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        if doc.schema != MODEL_SCHEMA {
            return Err(Error::InvalidParameter(format!(
                "unsupported model schema {:?}",
                doc.schema
            )));
        }
        let alphabet = Alphabet::new(doc.alphabet_size as u32);
        let mut states = vec![PdfaState::default(); doc.states.len()];
        for s in doc.states {
            let slot = states.get_mut(s.id).ok_or_else(|| {
                Error::InvalidParameter(format!("state id {} out of range", s.id))
            })?;
            slot.final_prob = s.final_prob;
            for t in s.transitions {
                slot.transitions.insert(
                    Symbol(t.symbol),
                    Transition {
                        target: t.target,
                        prob: t.prob,
                    },
                );
            }
        }
        let n = states.len();
        for state in &states {
            for (sym, t) in &state.transitions {
                if sym.0 >= alphabet.size || t.target.is_some_and(|id| id >= n) {
                    return Err(Error::InvalidParameter(format!(
                        "transition on {sym} is out of range"
                    )));
                }
            }
        }
        if doc.root >= n {
            return Err(Error::InvalidParameter("root out of range".into()));
        }
        Ok(Self {
            alphabet,
            root: doc.root,
            states,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph pdfa {\n  rankdir=LR;\n");
        for (id, s) in self.states.iter().enumerate() {
            out.push_str(&format!(
                "  s{id} [label=\"{id}\\nfinal={:.3}\"{}];\n",
                s.final_prob,
                if id == self.root { ", shape=doublecircle" } else { "" }
            ));
        }
        for (id, s) in self.states.iter().enumerate() {
            for (sym, t) in &s.transitions {
                if let Some(target) = t.target {
                    out.push_str(&format!(
                        "  s{id} -> s{target} [label=\"{sym} ({:.3})\"];\n",
                        t.prob
                    ));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    schema: String,
    alphabet_size: usize,
    root: StateId,
    states: Vec<StateDoc>,
}

#[derive(Serialize, Deserialize)]
struct StateDoc {
    id: StateId,
    final_prob: f64,
    transitions: Vec<TransitionDoc>,
}

#[derive(Serialize, Deserialize)]
struct TransitionDoc {
    symbol: u32,
    target: Option<StateId>,
    prob: f64,
}

/// Raw per-state counts, as gathered while merging.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountState {
    /// Number of strings that traversed the state.
    pub size: u64,
    pub final_count: u64,
    /// Outgoing symbol counts and, when kept, the target state.
    pub transitions: BTreeMap<Symbol, (u64, Option<StateId>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountModel {
    pub alphabet: Alphabet,
    pub root: StateId,
    pub states: Vec<CountState>,
}

/// Turns counts into probabilities: `count / size` for every symbol and
/// `final / size` for stopping.
pub fn normalize_counts(model: &CountModel) -> Result<Pdfa> {
    let mut states = Vec::with_capacity(model.states.len());
    for (id, s) in model.states.iter().enumerate() {
        if s.size == 0 {
            return Err(Error::EmptyState(id));
        }
        let size = s.size as f64;
        states.push(PdfaState {
            final_prob: s.final_count as f64 / size,
            transitions: s
                .transitions
                .iter()
                .map(|(&sym, &(count, target))| {
                    (
                        sym,
                        Transition {
                            target,
                            prob: count as f64 / size,
                        },
                    )
                })
                .collect(),
        });
    }
    Ok(Pdfa {
        alphabet: model.alphabet,
        root: model.root,
        states,
    })
}
