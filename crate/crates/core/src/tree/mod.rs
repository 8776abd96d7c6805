//! Streamed prefix tree with red/blue/white colouring.
//!
//! Merges never delete nodes. A merged node keeps its own counts and sketches
//! and is marked with the representative it was folded into, so every merge
//! can be rolled back by replaying its journal backwards. Sketch stacks are
//! folded with `+` and restored with `-`.

mod export;

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalize_counts, Alphabet, CountModel, CountState, Pdfa, Symbol, Trace};
use crate::sketch::{SketchContext, SketchLayout, SketchStack};

pub use export::{TreeDoc, TreeNodeDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Blue,
    White,
}

/// Persistent permission to grow the tree below a node while streaming.
///
/// Colours are owned by the minimization passes and rolled back with them;
/// these marks survive the rollback and record which nodes were red (`Core`)
/// or blue (`Frontier`) in some hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GrowthMark {
    None,
    Frontier,
    Core,
}

/// How far ingestion may extend the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthPolicy {
    /// Every trace is stored completely (plain batch learning).
    Unbounded,
    /// Children are only created below red or blue (or marked) nodes.
    Gated,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub color: Color,
    pub parent: Option<NodeId>,
    pub in_symbol: Option<Symbol>,
    children: Vec<(Symbol, NodeId)>,
    /// Number of strings that traversed the node.
    pub size: u64,
    /// Outgoing symbol counts indexed by symbol, final marker last.
    counts: Box<[u64]>,
    sketches: Option<SketchStack>,
    merged_into: Option<NodeId>,
    version: u64,
    pub growth: GrowthMark,
}

impl Node {
    pub fn children(&self) -> &[(Symbol, NodeId)] {
        &self.children
    }

    pub fn child(&self, symbol: Symbol) -> Option<NodeId> {
        self.children
            .binary_search_by_key(&symbol, |c| c.0)
            .ok()
            .map(|i| self.children[i].1)
    }

    /// Counts per symbol; the last entry is the final count.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, symbol: Symbol) -> u64 {
        self.counts[symbol.index()]
    }

    pub fn final_count(&self) -> u64 {
        *self.counts.last().expect("non-empty")
    }

    pub fn sketches(&self) -> Option<&SketchStack> {
        self.sketches.as_ref()
    }

    pub fn is_alive(&self) -> bool {
        self.merged_into.is_none()
    }

    pub fn merged_into(&self) -> Option<NodeId> {
        self.merged_into
    }

    /// Changes whenever the node's counts change; restored by undo.
    pub fn version(&self) -> u64 {
        self.version
    }

    fn set_child(&mut self, symbol: Symbol, target: Option<NodeId>) -> Option<NodeId> {
        match self.children.binary_search_by_key(&symbol, |c| c.0) {
            Ok(i) => match target {
                Some(t) => Some(std::mem::replace(&mut self.children[i].1, t)),
                None => Some(self.children.remove(i).1),
            },
            Err(i) => {
                if let Some(t) = target {
                    self.children.insert(i, (symbol, t));
                }
                None
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RefinementKind {
    Merge { red: NodeId, blue: NodeId },
    Promote { blue: NodeId },
}

impl fmt::Display for RefinementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefinementKind::Merge { red, blue } => write!(f, "merge({red}, {blue})"),
            RefinementKind::Promote { blue } => write!(f, "promote({blue})"),
        }
    }
}

/// One primitive tree mutation, with what is needed to reverse it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Primitive {
    SetColor { node: NodeId, old: Color },
    SetChild { node: NodeId, symbol: Symbol, old: Option<NodeId> },
    SetParent { node: NodeId, old: Option<NodeId> },
    SetMerged { node: NodeId, old: Option<NodeId> },
    /// `from`'s counts and sketches were added into `into`.
    Absorb { into: NodeId, from: NodeId, old_version: u64 },
}

/// An applied merge or promotion together with its undo record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refinement {
    pub kind: RefinementKind,
    seq: u64,
    pub undo_record: Vec<Primitive>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TreeConfig {
    pub alphabet: Alphabet,
    /// Minimum size before a node may turn blue.
    pub threshold: u64,
    pub growth: GrowthPolicy,
    /// `None` when the heuristic works on plain counts only.
    pub sketches: Option<SketchLayout>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TreeStats {
    pub created: u64,
    /// Nodes created under a parent that was not allowed to grow; must stay 0.
    pub fringe_violations: u64,
}

#[derive(Debug, Clone)]
pub struct PrefixTree {
    config: TreeConfig,
    nodes: Vec<Node>,
    ctx: Option<SketchContext>,
    applied: Vec<u64>,
    next_seq: u64,
    next_version: u64,
    stats: TreeStats,
}

impl PrefixTree {
    pub fn new(config: TreeConfig) -> Result<Self> {
        if config.threshold == 0 {
            return Err(Error::InvalidParameter("threshold must be >= 1".into()));
        }
        let ctx = config
            .sketches
            .map(|layout| SketchContext::new(layout, config.seed))
            .transpose()?;
        let mut tree = Self {
            config,
            nodes: Vec::new(),
            ctx,
            applied: Vec::new(),
            next_seq: 0,
            next_version: 0,
            stats: TreeStats::default(),
        };
        let root = tree.push_node(None, None);
        tree.nodes[root.idx()].color = Color::Red;
        tree.nodes[root.idx()].growth = GrowthMark::Core;
        Ok(tree)
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn alphabet(&self) -> Alphabet {
        self.config.alphabet
    }

    pub fn threshold(&self) -> u64 {
        self.config.threshold
    }

    pub fn sketch_context(&self) -> Option<&SketchContext> {
        self.ctx.as_ref()
    }

    pub fn stats(&self) -> TreeStats {
        self.stats
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.idx()]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of refinements currently applied and not yet undone.
    pub fn applied_count(&self) -> usize {
        self.applied.len()
    }

    fn fresh_version(&mut self) -> u64 {
        self.next_version += 1;
        self.next_version
    }

    fn push_node(&mut self, parent: Option<NodeId>, in_symbol: Option<Symbol>) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let version = self.fresh_version();
        self.nodes.push(Node {
            id,
            color: Color::White,
            parent,
            in_symbol,
            children: Vec::new(),
            size: 0,
            counts: vec![0; self.config.alphabet.extended_size()].into_boxed_slice(),
            sketches: self.ctx.as_ref().map(SketchContext::new_stack),
            merged_into: None,
            version,
            growth: GrowthMark::None,
        });
        self.stats.created += 1;
        id
    }

    pub fn is_red(&self, id: NodeId) -> bool {
        let n = self.node(id);
        n.is_alive() && n.color == Color::Red
    }

    pub fn is_blue(&self, id: NodeId) -> bool {
        let n = self.node(id);
        n.is_alive() && n.color == Color::Blue
    }

    pub fn red_nodes(&self) -> Vec<NodeId> {
        self.live_with_color(Color::Red)
    }

    pub fn blue_nodes(&self) -> Vec<NodeId> {
        self.live_with_color(Color::Blue)
    }

    fn live_with_color(&self, color: Color) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.is_alive() && n.color == color)
            .map(|n| n.id)
            .collect()
    }

    /// `(red, blue, white)` counts over live nodes.
    pub fn color_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for n in self.nodes.iter().filter(|n| n.is_alive()) {
            match n.color {
                Color::Red => c.0 += 1,
                Color::Blue => c.1 += 1,
                Color::White => c.2 += 1,
            }
        }
        c
    }

    fn may_spawn(&self, id: NodeId) -> bool {
        let n = self.node(id);
        match self.config.growth {
            GrowthPolicy::Unbounded => true,
            GrowthPolicy::Gated => {
                matches!(n.color, Color::Red | Color::Blue) || n.growth >= GrowthMark::Frontier
            }
        }
    }

    fn visit(&mut self, id: NodeId, suffix: &[Symbol]) {
        let alphabet = self.config.alphabet;
        let threshold = self.config.threshold;
        let ends_here = alphabet.is_final(suffix[0]);
        let version = self.fresh_version();
        let node = &mut self.nodes[id.idx()];
        node.size += 1;
        node.counts[suffix[0].index()] += 1;
        node.version = version;
        if let (Some(ctx), Some(stack)) = (self.ctx.as_mut(), node.sketches.as_mut()) {
            ctx.record(stack, suffix, ends_here);
        }
        let size = node.size;
        let (color, growth, parent) = (node.color, node.growth, node.parent);
        if let Some(p) = parent.filter(|_| size >= threshold) {
            let pn = &self.nodes[p.idx()];
            let parent_red = pn.is_alive() && pn.color == Color::Red;
            let parent_core = pn.growth == GrowthMark::Core;
            let node = &mut self.nodes[id.idx()];
            if color == Color::White && parent_red {
                node.color = Color::Blue;
            }
            if growth == GrowthMark::None && (parent_red || parent_core) {
                node.growth = GrowthMark::Frontier;
            }
        }
    }

    /// Streams one trace into the tree.
    ///
    /// Every traversed node counts the trace and records its outgoing
    /// substrings. A missing child is only created when the current node may
    /// grow; otherwise the walk stops there.
    pub fn ingest(&mut self, trace: &Trace) {
        let symbols = trace.symbols();
        let mut q = self.root();
        for i in 0..symbols.len() {
            self.visit(q, &symbols[i..]);
            let a = symbols[i];
            if self.config.alphabet.is_final(a) {
                break;
            }
            q = match self.node(q).child(a) {
                Some(c) => c,
                None if self.may_spawn(q) => {
                    let c = self.push_node(Some(q), Some(a));
                    self.nodes[q.idx()].set_child(a, Some(c));
                    c
                }
                None => break,
            };
        }
    }

    /// Raises a node's growth mark; never lowers it.
    pub fn raise_growth(&mut self, id: NodeId, mark: GrowthMark) {
        let n = &mut self.nodes[id.idx()];
        n.growth = n.growth.max(mark);
    }

    fn begin(&mut self, kind: RefinementKind) -> Refinement {
        self.next_seq += 1;
        Refinement {
            kind,
            seq: self.next_seq,
            undo_record: Vec::new(),
        }
    }

    fn finish(&mut self, r: Refinement) -> Refinement {
        self.applied.push(r.seq);
        r
    }

    fn set_color(&mut self, r: &mut Refinement, node: NodeId, color: Color) {
        let old = std::mem::replace(&mut self.nodes[node.idx()].color, color);
        if old != color {
            r.undo_record.push(Primitive::SetColor { node, old });
        }
    }

    fn set_child(&mut self, r: &mut Refinement, node: NodeId, symbol: Symbol, target: NodeId) {
        let old = self.nodes[node.idx()].set_child(symbol, Some(target));
        r.undo_record.push(Primitive::SetChild { node, symbol, old });
    }

    fn set_parent(&mut self, r: &mut Refinement, node: NodeId, parent: NodeId) {
        let old = self.nodes[node.idx()].parent.replace(parent);
        r.undo_record.push(Primitive::SetParent { node, old });
    }

    fn set_merged(&mut self, r: &mut Refinement, node: NodeId, into: NodeId) {
        let old = self.nodes[node.idx()].merged_into.replace(into);
        r.undo_record.push(Primitive::SetMerged { node, old });
    }

    fn absorb(&mut self, r: &mut Refinement, into: NodeId, from: NodeId) -> Result<()> {
        debug_assert_ne!(into, from);
        let version = self.fresh_version();
        let (a, b) = pair_mut(&mut self.nodes, into.idx(), from.idx());
        a.size += b.size;
        for (x, y) in a.counts.iter_mut().zip(b.counts.iter()) {
            *x += y;
        }
        if let (Some(sa), Some(sb)) = (a.sketches.as_mut(), b.sketches.as_ref()) {
            sa.add_assign(sb)?;
        }
        let old_version = std::mem::replace(&mut a.version, version);
        r.undo_record.push(Primitive::Absorb {
            into,
            from,
            old_version,
        });
        Ok(())
    }

    /// Turns qualifying white children of `red` blue.
    fn refresh_fringe(&mut self, r: &mut Refinement, red: NodeId) {
        let threshold = self.config.threshold;
        let children: Vec<NodeId> = self.node(red).children.iter().map(|c| c.1).collect();
        for c in children {
            let n = self.node(c);
            if n.is_alive() && n.color == Color::White && n.size >= threshold {
                self.set_color(r, c, Color::Blue);
            }
        }
    }

    /// Structural precondition of a refinement: a cheap flag check.
    pub fn is_possible(&self, kind: RefinementKind) -> bool {
        let in_range = |id: NodeId| id.idx() < self.nodes.len();
        match kind {
            RefinementKind::Merge { red, blue } => {
                in_range(red) && in_range(blue) && red != blue && self.is_red(red) && self.is_blue(blue)
            }
            RefinementKind::Promote { blue } => in_range(blue) && self.is_blue(blue),
        }
    }

    pub fn apply(&mut self, kind: RefinementKind) -> Result<Refinement> {
        match kind {
            RefinementKind::Merge { red, blue } => self.merge(red, blue),
            RefinementKind::Promote { blue } => self.promote(blue),
        }
    }

    /// Folds `blue` into `red`, merging equally labelled children recursively
    /// so the result stays deterministic.
    pub fn merge(&mut self, red: NodeId, blue: NodeId) -> Result<Refinement> {
        let kind = RefinementKind::Merge { red, blue };
        if !self.is_possible(kind) {
            return Err(Error::Structural(format!("{kind} not possible")));
        }
        let mut r = self.begin(kind);
        let parent = self.node(blue).parent.expect("blue nodes have a parent");
        let symbol = self.node(blue).in_symbol.expect("blue nodes have an in-symbol");
        self.set_child(&mut r, parent, symbol, red);
        self.set_merged(&mut r, blue, red);

        let mut touched = Vec::new();
        let mut work = vec![(red, blue)];
        while let Some((x, y)) = work.pop() {
            self.absorb(&mut r, x, y)?;
            touched.push(x);
            let ys: Vec<(Symbol, NodeId)> = self.node(y).children.clone();
            for (s, yc) in ys {
                match self.node(x).child(s) {
                    Some(xc) => {
                        self.set_merged(&mut r, yc, xc);
                        work.push((xc, yc));
                    }
                    None => {
                        self.set_child(&mut r, x, s, yc);
                        self.set_parent(&mut r, yc, x);
                    }
                }
            }
        }
        touched.sort_unstable();
        touched.dedup();
        for x in touched {
            if self.is_red(x) {
                self.refresh_fringe(&mut r, x);
            }
        }
        Ok(self.finish(r))
    }

    /// Turns a blue node red and its qualifying white children blue.
    pub fn promote(&mut self, blue: NodeId) -> Result<Refinement> {
        let kind = RefinementKind::Promote { blue };
        if !self.is_possible(kind) {
            return Err(Error::Structural(format!("{kind} not possible")));
        }
        let mut r = self.begin(kind);
        self.set_color(&mut r, blue, Color::Red);
        self.refresh_fringe(&mut r, blue);
        Ok(self.finish(r))
    }

    /// Reverses the most recently applied refinement.
    pub fn undo(&mut self, refinement: &Refinement) -> Result<()> {
        match self.applied.last() {
            Some(&seq) if seq == refinement.seq => {}
            other => {
                return Err(Error::UndoOrder {
                    expected: other.copied().unwrap_or(0) as usize,
                    got: refinement.seq as usize,
                })
            }
        }
        for p in refinement.undo_record.iter().rev() {
            match *p {
                Primitive::SetColor { node, old } => self.nodes[node.idx()].color = old,
                Primitive::SetChild { node, symbol, old } => {
                    self.nodes[node.idx()].set_child(symbol, old);
                }
                Primitive::SetParent { node, old } => self.nodes[node.idx()].parent = old,
                Primitive::SetMerged { node, old } => self.nodes[node.idx()].merged_into = old,
                Primitive::Absorb {
                    into,
                    from,
                    old_version,
                } => {
                    let (a, b) = pair_mut(&mut self.nodes, into.idx(), from.idx());
                    a.size -= b.size;
                    for (x, y) in a.counts.iter_mut().zip(b.counts.iter()) {
                        *x -= y;
                    }
                    if let (Some(sa), Some(sb)) = (a.sketches.as_mut(), b.sketches.as_ref()) {
                        sa.sub_assign(sb)?;
                    }
                    a.version = old_version;
                }
            }
        }
        self.applied.pop();
        Ok(())
    }

    /// Hash of everything refinements touch: structure, colours, counts and
    /// sketch cells. Growth marks and versions are excluded.
    pub fn state_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.nodes.len().hash(&mut h);
        for n in &self.nodes {
            n.id.hash(&mut h);
            n.color.hash(&mut h);
            n.parent.hash(&mut h);
            n.in_symbol.hash(&mut h);
            n.children.hash(&mut h);
            n.size.hash(&mut h);
            n.counts.hash(&mut h);
            n.merged_into.hash(&mut h);
            n.sketches.hash(&mut h);
        }
        h.finish()
    }

    /// Live red nodes reachable from the root through red nodes, in
    /// breadth-first order.
    pub fn red_core(&self) -> Vec<NodeId> {
        let mut order = vec![self.root()];
        let mut seen = vec![false; self.nodes.len()];
        seen[0] = true;
        let mut i = 0;
        while i < order.len() {
            let q = order[i];
            for &(_, c) in &self.node(q).children {
                if !seen[c.idx()] && self.is_red(c) {
                    seen[c.idx()] = true;
                    order.push(c);
                }
            }
            i += 1;
        }
        order
    }

    /// Count view of the current hypothesis: red states only; transitions into
    /// non-red targets keep their mass but lose their target.
    pub fn hypothesis_counts(&self) -> CountModel {
        let order = self.red_core();
        let mut index = vec![usize::MAX; self.nodes.len()];
        for (i, q) in order.iter().enumerate() {
            index[q.idx()] = i;
        }
        let alphabet = self.config.alphabet;
        let states = order
            .iter()
            .map(|&q| {
                let n = self.node(q);
                let transitions = alphabet
                    .symbols()
                    .filter(|&a| n.count(a) > 0)
                    .map(|a| {
                        let target = n
                            .child(a)
                            .filter(|&c| self.is_red(c))
                            .map(|c| index[c.idx()]);
                        (a, (n.count(a), target))
                    })
                    .collect();
                CountState {
                    size: n.size,
                    final_count: n.final_count(),
                    transitions,
                }
            })
            .collect();
        CountModel {
            alphabet,
            root: 0,
            states,
        }
    }

    /// The current hypothesis as a normalized automaton.
    pub fn hypothesis(&self) -> Pdfa {
        if self.node(self.root()).size == 0 {
            return Pdfa::root_only(self.config.alphabet);
        }
        normalize_counts(&self.hypothesis_counts()).expect("red states have been visited")
    }

    /// Estimated footprint if every sketch were stored densely.
    pub fn memory_estimate(&self) -> usize {
        self.nodes.len() * self.bytes_per_node()
    }

    pub fn bytes_per_node(&self) -> usize {
        std::mem::size_of::<Node>()
            + self.config.alphabet.extended_size() * std::mem::size_of::<u64>()
            + self
                .config
                .sketches
                .map(|l| l.bytes_per_stack())
                .unwrap_or(0)
    }

    /// Checks that every live blue node hangs below a live red node.
    pub fn check_colors(&self) -> Result<()> {
        for n in self.nodes.iter().filter(|n| n.is_alive()) {
            if n.color == Color::Blue {
                match n.parent {
                    Some(p) if self.is_red(p) => {}
                    _ => return Err(Error::Structural(format!("blue {} has non-red parent", n.id))),
                }
            }
        }
        Ok(())
    }
}

fn pair_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &lo[b])
    }
}
