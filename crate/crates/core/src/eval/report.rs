use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One learned model scored on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub mode: String,
    pub heuristic: String,
    #[serde(rename = "F")]
    pub f: usize,
    pub perplexity: f64,
    pub true_perplexity: f64,
    pub wall_ms: u64,
    pub peak_mem_bytes: usize,
    pub states: usize,
}

impl ResultRow {
    /// Perplexity relative to the floor set by the solution itself.
    pub fn ratio(&self) -> f64 {
        self.perplexity / self.true_perplexity
    }
}

pub fn write_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Plain-text table with one line per (mode, heuristic, F) configuration.
pub fn summary(rows: &[ResultRow]) -> String {
    let mut groups: BTreeMap<(&str, &str, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((&r.mode, &r.heuristic, r.f))
            .or_default()
            .push(r);
    }
    let mut out = format!(
        "{:<11} {:<15} {:>3} {:>9} {:>11} {:>10} {:>10} {:>13}\n",
        "mode", "heuristic", "F", "scenarios", "mean ratio", "mean pp", "mean ms", "mean mem (B)"
    );
    for ((mode, heuristic, f), rs) in groups {
        let n = rs.len() as f64;
        let mean = |g: &dyn Fn(&ResultRow) -> f64| rs.iter().map(|r| g(r)).sum::<f64>() / n;
        writeln!(
            out,
            "{:<11} {:<15} {:>3} {:>9} {:>11.4} {:>10.3} {:>10.1} {:>13.0}",
            mode,
            heuristic,
            f,
            rs.len(),
            mean(&|r| r.ratio()),
            mean(&|r| r.perplexity),
            mean(&|r| r.wall_ms as f64),
            mean(&|r| r.peak_mem_bytes as f64),
        )
        .unwrap();
    }
    out
}
