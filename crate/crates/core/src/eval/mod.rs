//! Scoring learned models against PAutomaC-style test sets.

mod pautomac;
mod perplexity;
mod report;

use std::time::Instant;

pub use pautomac::{
    bundle, discover_scenarios, load_scenario, parse_pautomac, parse_solution, parse_strings,
    scenario_paths, write_scenario, write_solution, write_strings, ScenarioBundle, StringFile,
};
pub use perplexity::{
    candidate_probabilities, perplexity, perplexity_of, true_perplexity, DEFAULT_SMOOTHING,
};
pub use report::{read_csv, summary, write_csv, ResultRow};

use crate::error::Result;
use crate::streamer::{self, LearnOutput, StreamConfig};

/// Learns on the scenario's training set and scores the result.
pub fn run_scenario(
    bundle: &ScenarioBundle,
    config: StreamConfig,
    eps: f64,
) -> Result<(ResultRow, LearnOutput)> {
    let start = Instant::now();
    let out = streamer::run(bundle.alphabet, &bundle.train, config)?;
    let wall_ms = start.elapsed().as_millis() as u64;
    let row = ResultRow {
        scenario: bundle.name.clone(),
        mode: config.mode.to_string(),
        heuristic: config.heuristic.kind.to_string(),
        f: config.heuristic.param(),
        perplexity: perplexity(&out.hypothesis, &bundle.test, &bundle.solution, eps),
        true_perplexity: true_perplexity(&bundle.solution, eps),
        wall_ms,
        peak_mem_bytes: out.peak_mem_estimate_bytes,
        states: out.hypothesis.num_states(),
    };
    Ok((row, out))
}
