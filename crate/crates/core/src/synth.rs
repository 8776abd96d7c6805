//! Random automata and samples drawn from them, for tests, benchmarks and
//! offline experiments.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ScenarioBundle;
use crate::model::{Alphabet, Pdfa, PdfaState, Symbol, Trace, Transition};

/// Shape of a random target automaton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub states: usize,
    pub alphabet: u32,
    /// Fraction of symbols with an outgoing transition in each state.
    pub density: f64,
    pub final_min: f64,
    pub final_max: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            states: 6,
            alphabet: 4,
            density: 0.6,
            final_min: 0.1,
            final_max: 0.3,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.alphabet == 0 {
            return Err(Error::InvalidParameter("need at least one state and symbol".into()));
        }
        if self.states > 1 && self.alphabet < 2 && self.density < 1.0 {
            return Err(Error::InvalidParameter("alphabet too small to connect states".into()));
        }
        if !(0.0 < self.final_min && self.final_min <= self.final_max && self.final_max < 1.0) {
            return Err(Error::InvalidParameter(
                "final probabilities must satisfy 0 < min <= max < 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::InvalidParameter("density must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A connected random automaton: a random spanning tree from the initial
/// state guarantees reachability, extra transitions are added up to
/// `density`, and each state stops with probability in
/// `[final_min, final_max]`.
pub fn random_pdfa(params: &SynthParams, rng: &mut impl Rng) -> Result<Pdfa> {
    params.validate()?;
    let alphabet = Alphabet::new(params.alphabet);
    let sigma = params.alphabet as usize;
    let mut edges: Vec<BTreeMap<Symbol, usize>> = vec![BTreeMap::new(); params.states];
    for q in 1..params.states {
        loop {
            let p = rng.gen_range(0..q);
            let free: Vec<Symbol> = alphabet.symbols().filter(|s| !edges[p].contains_key(s)).collect();
            if let Some(&s) = free.choose(rng) {
                edges[p].insert(s, q);
                break;
            }
        }
    }
    let per_state = ((params.density * sigma as f64).round() as usize).clamp(1, sigma);
    for e in edges.iter_mut() {
        let mut syms: Vec<Symbol> = alphabet.symbols().collect();
        syms.shuffle(rng);
        for s in syms {
            if e.len() >= per_state {
                break;
            }
            e.entry(s).or_insert_with(|| rng.gen_range(0..params.states));
        }
    }
    let states = edges
        .into_iter()
        .map(|e| {
            let final_prob = rng.gen_range(params.final_min..=params.final_max);
            let weights: Vec<f64> = e.keys().map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let transitions = e
                .into_iter()
                .zip(weights)
                .map(|((s, t), w)| {
                    let prob = (1.0 - final_prob) * w / total;
                    (s, Transition { target: Some(t), prob })
                })
                .collect();
            PdfaState {
                final_prob,
                transitions,
            }
        })
        .collect();
    Ok(Pdfa {
        alphabet,
        root: 0,
        states,
    })
}

/// Draws one string by walking the automaton until it stops. Walks longer
/// than `max_len` are cut and end there.
pub fn sample_trace(model: &Pdfa, rng: &mut impl Rng, max_len: usize) -> Trace {
    let mut q = model.root;
    let mut raw = Vec::new();
    while raw.len() < max_len {
        let state = &model.states[q];
        let mut u = rng.gen::<f64>() * state.outgoing_mass();
        if u < state.final_prob {
            break;
        }
        u -= state.final_prob;
        let mut next = None;
        for (s, t) in &state.transitions {
            if u < t.prob {
                next = Some((*s, t.target));
                break;
            }
            u -= t.prob;
        }
        // rounding can leave `u` just past the last transition
        let (s, target) = next.unwrap_or_else(|| {
            let (s, t) = state.transitions.iter().next_back().expect("mass left for symbols");
            (*s, t.target)
        });
        raw.push(s.0);
        match target {
            Some(t) => q = t,
            None => break,
        }
    }
    Trace::new(model.alphabet, raw).expect("symbols come from the model")
}

pub fn sample_traces(model: &Pdfa, n: usize, rng: &mut impl Rng) -> Vec<Trace> {
    (0..n).map(|_| sample_trace(model, rng, 1000)).collect()
}

/// Up to `n` distinct sampled strings with their true probabilities,
/// normalized over the set.
pub fn test_set(model: &Pdfa, n: usize, rng: &mut impl Rng) -> (Vec<Trace>, Vec<f64>) {
    let mut seen = HashSet::new();
    let mut test = Vec::new();
    let mut attempts = 0;
    while test.len() < n && attempts < 200 * n {
        attempts += 1;
        let t = sample_trace(model, rng, 1000);
        if seen.insert(t.clone()) {
            test.push(t);
        }
    }
    let probs: Vec<f64> = test
        .iter()
        .map(|t| model.string_probability(t).probability)
        .collect();
    let sum: f64 = probs.iter().sum();
    (test, probs.iter().map(|p| p / sum).collect())
}

/// A complete scenario drawn from a random automaton.
pub fn scenario(
    name: &str,
    params: &SynthParams,
    train: usize,
    test: usize,
    seed: u64,
) -> Result<(ScenarioBundle, Pdfa)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_pdfa(params, &mut rng)?;
    let train = sample_traces(&model, train, &mut rng);
    let (test, solution) = test_set(&model, test, &mut rng);
    Ok((
        ScenarioBundle {
            name: name.to_string(),
            alphabet: model.alphabet,
            train,
            test,
            solution,
        },
        model,
    ))
}

/// Parameters of the small built-in scenario suite: five targets with 12 to
/// 40 states, sized like the smaller competition problems.
pub fn desk_suite() -> Vec<(String, SynthParams, u64)> {
    let shapes = [
        (12, 5, 0.5),
        (20, 6, 0.4),
        (30, 8, 0.35),
        (16, 10, 0.3),
        (40, 6, 0.5),
    ];
    shapes
        .iter()
        .enumerate()
        .map(|(i, &(states, alphabet, density))| {
            (
                format!("d{}", i + 1),
                SynthParams {
                    states,
                    alphabet,
                    density,
                    final_min: 0.03,
                    final_max: 0.15,
                },
                500 + i as u64,
            )
        })
        .collect()
}

/// Training and test sizes of the desk suite, as in the competition.
pub const DESK_TRAIN: usize = 20_000;
pub const DESK_TEST: usize = 1_000;

fn state(final_prob: f64, edges: &[(u32, usize, f64)]) -> PdfaState {
    PdfaState {
        final_prob,
        transitions: edges
            .iter()
            .map(|&(s, t, p)| (Symbol(s), Transition { target: Some(t), prob: p }))
            .collect(),
    }
}

/// Two clearly different states over `{a, b}`: the first mostly emits `a`
/// and stays, the second mostly emits `b` and stays.
pub fn two_state_source() -> Pdfa {
    Pdfa {
        alphabet: Alphabet::new(2),
        root: 0,
        states: vec![
            state(0.2, &[(0, 0, 0.6), (1, 1, 0.2)]),
            state(0.3, &[(0, 0, 0.1), (1, 1, 0.6)]),
        ],
    }
}

/// Same shape as [`two_state_source`] with the symbol preferences swapped.
pub fn shifted_two_state_source() -> Pdfa {
    Pdfa {
        alphabet: Alphabet::new(2),
        root: 0,
        states: vec![
            state(0.2, &[(0, 1, 0.2), (1, 0, 0.6)]),
            state(0.3, &[(0, 1, 0.6), (1, 0, 0.1)]),
        ],
    }
}
