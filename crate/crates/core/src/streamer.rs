//! Batch-wise learning from a stream of traces.
//!
//! Traces are pushed into a [`Learner`]. After every `batch_size` traces the
//! tree is minimized with the red-blue greedy search, and the resulting
//! hypothesis is saved. In [`Mode::StreamNew`] all refinements of a pass are
//! undone afterwards and replayed at the start of the next pass, so early
//! mistakes can be corrected once more data is in. [`Mode::StreamOld`] keeps
//! its refinements, and [`Mode::Batch`] builds the full prefix tree and
//! minimizes once.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristics::{evaluate, HeuristicConfig, HeuristicKind, HeuristicVerdict};
use crate::model::{Alphabet, Pdfa, Trace};
use crate::tree::{
    GrowthMark, GrowthPolicy, NodeId, PrefixTree, Refinement, RefinementKind, TreeConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Batch,
    StreamOld,
    StreamNew,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Batch, Mode::StreamOld, Mode::StreamNew];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Batch => "batch",
            Mode::StreamOld => "stream-old",
            Mode::StreamNew => "stream-new",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub batch_size: usize,
    /// Visits a node needs before it may turn blue.
    pub threshold: u64,
    /// Learning stops once a saved hypothesis has this many states.
    pub state_bound: usize,
    pub mode: Mode,
    pub heuristic: HeuristicConfig,
    pub seed: u64,
    /// Store every trace completely even when streaming.
    pub full_tree: bool,
}

impl StreamConfig {
    pub fn new(mode: Mode, heuristic: HeuristicConfig) -> Self {
        Self {
            batch_size: 5000,
            threshold: 25,
            state_bound: 1000,
            mode,
            heuristic,
            seed: 0,
            full_tree: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        if self.threshold == 0 {
            return Err(Error::InvalidParameter("threshold must be >= 1".into()));
        }
        if self.state_bound == 0 {
            return Err(Error::InvalidParameter("state bound must be >= 1".into()));
        }
        self.heuristic.validate()
    }
}

/// Counters of one minimization pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PassStats {
    /// Size of the replay queue at the start of the pass.
    pub replay_queue: usize,
    pub replayed: usize,
    pub failed_structural: usize,
    pub discarded_consistency: usize,
    /// Entries of the structural-failure queue applied later in the pass.
    pub recovered: usize,
    pub greedy_steps: usize,
    pub merges: usize,
    pub promotions: usize,
}

/// One row of the per-batch metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BatchMetrics {
    pub batch_index: usize,
    pub nodes: usize,
    pub red: usize,
    pub blue: usize,
    pub white: usize,
    pub refinements_replayed: usize,
    pub refinements_failed_structural: usize,
    pub refinements_discarded_consistency: usize,
    pub peak_mem_estimate_bytes: usize,
    pub wall_ms: u64,
}

impl BatchMetrics {
    pub const CSV_HEADER: &'static str = "batch_index,nodes,red,blue,white,refinements_replayed,\
refinements_failed_structural,refinements_discarded_consistency,peak_mem_estimate_bytes,wall_ms";
}

/// Renders metrics rows as CSV with a header line.
pub fn metrics_csv(rows: &[BatchMetrics]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(BatchMetrics::CSV_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone)]
pub struct LearnOutput {
    pub hypothesis: Pdfa,
    pub metrics: Vec<BatchMetrics>,
    pub passes: Vec<PassStats>,
    pub traces_used: usize,
    pub peak_mem_estimate_bytes: usize,
    /// Hash of the final tree, for determinism checks.
    pub tree_hash: u64,
}

type CacheKey = (NodeId, NodeId, u64, u64, usize);

/// Incremental learner; see the module docs.
#[derive(Debug)]
pub struct Learner {
    config: StreamConfig,
    tree: PrefixTree,
    r_old: VecDeque<RefinementKind>,
    hypothesis: Pdfa,
    metrics: Vec<BatchMetrics>,
    passes: Vec<PassStats>,
    cache: HashMap<CacheKey, HeuristicVerdict>,
    in_batch: usize,
    traces_used: usize,
    peak_mem: usize,
    batch_start: Instant,
    stopped: bool,
}

impl Learner {
    pub fn new(alphabet: Alphabet, config: StreamConfig) -> Result<Self> {
        config.validate()?;
        let tree = PrefixTree::new(TreeConfig {
            alphabet,
            threshold: config.threshold,
            growth: if config.mode == Mode::Batch || config.full_tree {
                GrowthPolicy::Unbounded
            } else {
                GrowthPolicy::Gated
            },
            sketches: config.heuristic.sketch_layout(),
            seed: config.seed,
        })?;
        let peak_mem = tree.memory_estimate();
        Ok(Self {
            config,
            tree,
            r_old: VecDeque::new(),
            hypothesis: Pdfa::root_only(alphabet),
            metrics: Vec::new(),
            passes: Vec::new(),
            cache: HashMap::new(),
            in_batch: 0,
            traces_used: 0,
            peak_mem,
            batch_start: Instant::now(),
            stopped: false,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    pub fn tree(&self) -> &PrefixTree {
        &self.tree
    }

    /// The most recently saved hypothesis.
    pub fn hypothesis(&self) -> &Pdfa {
        &self.hypothesis
    }

    pub fn metrics(&self) -> &[BatchMetrics] {
        &self.metrics
    }

    pub fn passes(&self) -> &[PassStats] {
        &self.passes
    }

    /// Refinements the next pass will try to replay.
    pub fn replay_queue(&self) -> impl Iterator<Item = &RefinementKind> {
        self.r_old.iter()
    }

    /// True once the state bound was reached; further traces are ignored.
    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// Feeds one trace. Returns `false` when the learner has stopped.
    pub fn push(&mut self, trace: &Trace) -> Result<bool> {
        if self.stopped {
            return Ok(false);
        }
        let alphabet = self.tree.alphabet();
        if trace.symbols().last() != Some(&alphabet.final_symbol()) {
            return Err(Error::InvalidParameter(format!(
                "trace does not belong to the alphabet of size {}",
                alphabet.size()
            )));
        }
        if self.in_batch == 0 {
            self.batch_start = Instant::now();
        }
        self.tree.ingest(trace);
        self.traces_used += 1;
        self.in_batch += 1;
        self.peak_mem = self.peak_mem.max(self.tree.memory_estimate());
        if self.config.mode != Mode::Batch && self.in_batch == self.config.batch_size {
            self.end_batch()?;
        }
        Ok(!self.stopped)
    }

    /// Runs the closing pass and returns the result.
    pub fn finish(mut self) -> Result<LearnOutput> {
        if !self.stopped {
            if self.in_batch == 0 {
                self.batch_start = Instant::now();
            }
            self.end_batch()?;
        }
        Ok(LearnOutput {
            hypothesis: self.hypothesis,
            metrics: self.metrics,
            passes: self.passes,
            traces_used: self.traces_used,
            peak_mem_estimate_bytes: self.peak_mem,
            tree_hash: self.tree.state_hash(),
        })
    }

    fn end_batch(&mut self) -> Result<()> {
        let stats = self.minimize()?;
        let (red, blue, white) = self.tree.color_counts();
        self.metrics.push(BatchMetrics {
            batch_index: self.metrics.len(),
            nodes: self.tree.len(),
            red,
            blue,
            white,
            refinements_replayed: stats.replayed,
            refinements_failed_structural: stats.failed_structural,
            refinements_discarded_consistency: stats.discarded_consistency,
            peak_mem_estimate_bytes: self.peak_mem,
            wall_ms: self.batch_start.elapsed().as_millis() as u64,
        });
        self.in_batch = 0;
        if self.hypothesis.num_states() >= self.config.state_bound {
            self.stopped = true;
        }
        Ok(())
    }

    /// One minimization pass according to the configured mode.
    pub fn minimize(&mut self) -> Result<PassStats> {
        self.cache.clear();
        let stats = match self.config.mode {
            Mode::Batch | Mode::StreamOld => self.minimize_old()?,
            Mode::StreamNew => self.minimize_new()?,
        };
        self.passes.push(stats);
        Ok(stats)
    }

    /// Greedy minimization whose refinements stay applied.
    fn minimize_old(&mut self) -> Result<PassStats> {
        let mut stats = PassStats::default();
        while self.greedy_step(&mut stats)?.is_some() {}
        self.hypothesis = self.tree.hypothesis();
        Ok(stats)
    }

    /// Replay, greedy search, snapshot, then undo everything.
    fn minimize_new(&mut self) -> Result<PassStats> {
        let mut stats = PassStats {
            replay_queue: self.r_old.len(),
            ..PassStats::default()
        };
        let mut applied: Vec<Refinement> = Vec::new();
        let mut r_new: Vec<RefinementKind> = Vec::new();
        let mut r_failed: VecDeque<RefinementKind> = VecDeque::new();

        while let Some(kind) = self.r_old.pop_front() {
            if !self.tree.is_possible(kind) {
                stats.failed_structural += 1;
                r_failed.push_back(kind);
            } else if self.replay_consistent(kind)? {
                applied.push(self.tree.apply(kind)?);
                r_new.push(kind);
                stats.replayed += 1;
            } else {
                stats.discarded_consistency += 1;
            }
        }

        while let Some(r) = self.greedy_step(&mut stats)? {
            r_new.push(r.kind);
            applied.push(r);
            let mut i = 0;
            while i < r_failed.len() {
                let kind = r_failed[i];
                if self.tree.is_possible(kind) && self.replay_consistent(kind)? {
                    r_failed.remove(i);
                    applied.push(self.tree.apply(kind)?);
                    r_new.push(kind);
                    stats.recovered += 1;
                } else {
                    i += 1;
                }
            }
        }

        self.hypothesis = self.tree.hypothesis();
        self.mark_growth();
        for r in applied.iter().rev() {
            self.tree.undo(r)?;
        }
        self.r_old = r_new.into();
        Ok(stats)
    }

    /// Lets the tree keep growing below every state that was red or blue
    /// during the pass, including states that were folded into one.
    fn mark_growth(&mut self) {
        let marks: Vec<(NodeId, GrowthMark)> = self
            .tree
            .nodes()
            .iter()
            .filter_map(|n| {
                let mut rep = n.id;
                while let Some(next) = self.tree.node(rep).merged_into() {
                    rep = next;
                }
                if self.tree.is_red(rep) {
                    Some((n.id, GrowthMark::Core))
                } else if self.tree.is_blue(rep) {
                    Some((n.id, GrowthMark::Frontier))
                } else {
                    None
                }
            })
            .collect();
        for (q, mark) in marks {
            self.tree.raise_growth(q, mark);
        }
    }

    fn verdict(&mut self, red: NodeId, blue: NodeId) -> Result<HeuristicVerdict> {
        let h = &self.config.heuristic;
        let cacheable = h.kind != HeuristicKind::AlergiaKtails || h.k == 0;
        if !cacheable {
            return evaluate(h, &self.tree, red, blue);
        }
        let generation = self
            .tree
            .sketch_context()
            .map_or(0, |c| c.registries().generation());
        let key = (
            red,
            blue,
            self.tree.node(red).version(),
            self.tree.node(blue).version(),
            generation,
        );
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let v = evaluate(h, &self.tree, red, blue)?;
        self.cache.insert(key, v);
        Ok(v)
    }

    /// A replayed merge must still pass the heuristic; a replayed promotion
    /// must still have no consistent merge partner.
    fn replay_consistent(&mut self, kind: RefinementKind) -> Result<bool> {
        match kind {
            RefinementKind::Merge { red, blue } => Ok(self.verdict(red, blue)?.consistent),
            RefinementKind::Promote { blue } => {
                for red in self.tree.red_nodes() {
                    if self.verdict(red, blue)?.consistent {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }

    /// Performs the best refinement available, if any blue state is left.
    ///
    /// The consistent merge with the highest score wins, ties going to the
    /// smaller red and then the smaller blue id. Without any consistent merge
    /// the largest blue state is promoted.
    fn greedy_step(&mut self, stats: &mut PassStats) -> Result<Option<Refinement>> {
        let blues = self.tree.blue_nodes();
        if blues.is_empty() {
            return Ok(None);
        }
        let reds = self.tree.red_nodes();
        let mut best: Option<(f64, NodeId, NodeId)> = None;
        for &red in &reds {
            for &blue in &blues {
                let v = self.verdict(red, blue)?;
                if let Some(score) = v.score.filter(|_| v.consistent) {
                    if best.map_or(true, |(s, _, _)| score > s) {
                        best = Some((score, red, blue));
                    }
                }
            }
        }
        stats.greedy_steps += 1;
        let r = match best {
            Some((_, red, blue)) => {
                stats.merges += 1;
                self.tree.merge(red, blue)?
            }
            None => {
                let blue = blues
                    .iter()
                    .copied()
                    .max_by_key(|&b| (self.tree.node(b).size, std::cmp::Reverse(b)))
                    .expect("non-empty");
                stats.promotions += 1;
                self.tree.promote(blue)?
            }
        };
        debug_assert!(self.tree.check_colors().is_ok());
        Ok(Some(r))
    }
}

/// Learns from a whole trace sequence in one call.
pub fn run<'a, I>(alphabet: Alphabet, traces: I, config: StreamConfig) -> Result<LearnOutput>
where
    I: IntoIterator<Item = &'a Trace>,
{
    let mut learner = Learner::new(alphabet, config)?;
    for t in traces {
        if !learner.push(t)? {
            break;
        }
    }
    learner.finish()
}

#[cfg(test)]
mod tests;
