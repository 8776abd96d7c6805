//! Count-min sketch extended with a final-count attribute and element-wise
//! `+`/`-` so that state merges can be applied and rolled back exactly.

use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::Serialize;

use super::hash::RowHashes;
use crate::error::{Error, Result};

/// Width and depth for error bound `beta` holding with probability `1 - gamma`:
/// `w = ceil(e / beta)`, `d = ceil(ln(1 / gamma))`.
pub fn sketch_dimensions(beta: f64, gamma: f64) -> Result<(usize, usize)> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive, got {beta}"
        )));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    let w = (std::f64::consts::E / beta).ceil().max(1.0) as usize;
    let d = (1.0 / gamma).ln().ceil().max(1.0) as usize;
    Ok((w, d))
}

// Sparse cells are promoted to a dense matrix once they cover this fraction
// of the matrix.
const DENSE_FRACTION: usize = 4;

#[derive(Debug, Clone)]
enum Cells {
    /// `(row * width + col, count)`, sorted by index, no zero counts.
    Sparse(Vec<(u32, u64)>),
    Dense(Box<[u64]>),
}

#[derive(Debug, Clone)]
pub struct CountMinSketch {
    hashes: Arc<RowHashes>,
    cells: Cells,
    final_count: u64,
    total: u64,
}

impl CountMinSketch {
    pub fn new(hashes: Arc<RowHashes>) -> Self {
        Self {
            hashes,
            cells: Cells::Sparse(Vec::new()),
            final_count: 0,
            total: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.hashes.width()
    }

    pub fn depth(&self) -> usize {
        self.hashes.depth()
    }

    pub fn hashes(&self) -> &Arc<RowHashes> {
        &self.hashes
    }

    /// Number of keys stored so far.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn final_count(&self) -> u64 {
        self.final_count
    }

    pub fn record_final(&mut self) {
        self.final_count += 1;
    }

    pub fn record_final_n(&mut self, count: u64) {
        self.final_count += count;
    }

    fn n_cells(&self) -> usize {
        self.width() * self.depth()
    }

    pub fn store(&mut self, key: u64) {
        self.store_n(key, 1);
    }

    pub fn store_n(&mut self, key: u64, count: u64) {
        if count == 0 {
            return;
        }
        let w = self.width();
        for row in 0..self.depth() {
            let idx = row * w + self.hashes.bucket(row, key);
            self.bump(idx, count);
        }
        self.total += count;
    }

    fn bump(&mut self, idx: usize, count: u64) {
        match &mut self.cells {
            Cells::Dense(cells) => cells[idx] += count,
            Cells::Sparse(entries) => {
                match entries.binary_search_by_key(&(idx as u32), |e| e.0) {
                    Ok(pos) => entries[pos].1 += count,
                    Err(pos) => entries.insert(pos, (idx as u32, count)),
                }
                if entries.len() * DENSE_FRACTION > self.hashes.width() * self.hashes.depth() {
                    self.densify();
                }
            }
        }
    }

    fn densify(&mut self) {
        if let Cells::Sparse(entries) = &self.cells {
            let mut dense = vec![0u64; self.n_cells()].into_boxed_slice();
            for &(i, c) in entries {
                dense[i as usize] = c;
            }
            self.cells = Cells::Dense(dense);
        }
    }

    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> u64 {
        self.cell_at(row * self.width() + col)
    }

    fn cell_at(&self, idx: usize) -> u64 {
        match &self.cells {
            Cells::Dense(cells) => cells[idx],
            Cells::Sparse(entries) => entries
                .binary_search_by_key(&(idx as u32), |e| e.0)
                .map(|pos| entries[pos].1)
                .unwrap_or(0),
        }
    }

    /// Minimum over rows of the key's cells; never below the true count.
    pub fn retrieve(&self, key: u64) -> u64 {
        let w = self.width();
        (0..self.depth())
            .map(|row| self.cell_at(row * w + self.hashes.bucket(row, key)))
            .min()
            .unwrap_or(0)
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        let w = self.width();
        (0..w).map(|col| self.cell_at(row * w + col)).sum()
    }

    /// Nonzero cells as `(flat index, count)` in index order.
    pub fn nonzero_cells(&self) -> Vec<(usize, u64)> {
        match &self.cells {
            Cells::Sparse(entries) => entries.iter().map(|&(i, c)| (i as usize, c)).collect(),
            Cells::Dense(cells) => cells
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0)
                .map(|(i, &c)| (i, c))
                .collect(),
        }
    }

    /// Row-major copy of every cell.
    pub fn dense_cells(&self) -> Vec<u64> {
        match &self.cells {
            Cells::Dense(cells) => cells.to_vec(),
            Cells::Sparse(entries) => {
                let mut out = vec![0; self.n_cells()];
                for &(i, c) in entries {
                    out[i as usize] = c;
                }
                out
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0 && self.final_count == 0
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.hashes, &other.hashes) || *self.hashes == *other.hashes {
            Ok(())
        } else {
            Err(Error::SketchMismatch(format!(
                "{}x{} (seed {}) vs {}x{} (seed {})",
                self.depth(),
                self.width(),
                self.hashes.seed(),
                other.depth(),
                other.width(),
                other.hashes.seed()
            )))
        }
    }

    /// In-place element-wise sum, including the final count.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        match (&mut self.cells, &other.cells) {
            (Cells::Sparse(a), Cells::Sparse(b)) => {
                let mut merged = Vec::with_capacity(a.len() + b.len());
                let (mut i, mut j) = (0, 0);
                while i < a.len() || j < b.len() {
                    if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                        merged.push(a[i]);
                        i += 1;
                    } else if i == a.len() || b[j].0 < a[i].0 {
                        merged.push(b[j]);
                        j += 1;
                    } else {
                        merged.push((a[i].0, a[i].1 + b[j].1));
                        i += 1;
                        j += 1;
                    }
                }
                *a = merged;
                if a.len() * DENSE_FRACTION > self.hashes.width() * self.hashes.depth() {
                    self.densify();
                }
            }
            (Cells::Dense(a), Cells::Sparse(b)) => {
                for &(i, c) in b {
                    a[i as usize] += c;
                }
            }
            (_, Cells::Dense(b)) => {
                self.densify();
                if let Cells::Dense(a) = &mut self.cells {
                    for (x, y) in a.iter_mut().zip(b.iter()) {
                        *x += y;
                    }
                }
            }
        }
        self.final_count += other.final_count;
        self.total += other.total;
        Ok(())
    }

    /// In-place element-wise difference. Fails without modifying `self` if any
    /// cell would go negative.
    pub fn sub_assign(&mut self, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        let w = self.width();
        for (i, c) in other.nonzero_cells() {
            if self.cell_at(i) < c {
                return Err(Error::SketchCorrupted {
                    row: i / w,
                    col: i % w,
                });
            }
        }
        if self.final_count < other.final_count || self.total < other.total {
            return Err(Error::SketchMismatch(
                "subtracting a sketch with larger totals".into(),
            ));
        }
        match &mut self.cells {
            Cells::Dense(a) => {
                for (i, c) in other.nonzero_cells() {
                    a[i] -= c;
                }
            }
            Cells::Sparse(a) => {
                for (i, c) in other.nonzero_cells() {
                    let pos = a
                        .binary_search_by_key(&(i as u32), |e| e.0)
                        .expect("checked above");
                    a[pos].1 -= c;
                }
                a.retain(|e| e.1 != 0);
            }
        }
        self.final_count -= other.final_count;
        self.total -= other.total;
        Ok(())
    }

    pub fn dump(&self) -> SketchDump {
        SketchDump {
            width: self.width(),
            depth: self.depth(),
            seed: self.hashes.seed(),
            row_params: self
                .hashes
                .params()
                .iter()
                .map(|(a, b)| [format!("{a:032x}"), format!("{b:032x}")])
                .collect(),
            cells: self.dense_cells(),
            final_count: self.final_count,
            total: self.total,
        }
    }
}

/// `a + b` as a new sketch.
pub fn add(a: &CountMinSketch, b: &CountMinSketch) -> Result<CountMinSketch> {
    let mut out = a.clone();
    out.add_assign(b)?;
    Ok(out)
}

/// `a - b` as a new sketch.
pub fn subtract(a: &CountMinSketch, b: &CountMinSketch) -> Result<CountMinSketch> {
    let mut out = a.clone();
    out.sub_assign(b)?;
    Ok(out)
}

impl PartialEq for CountMinSketch {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.hashes, &other.hashes) || *self.hashes == *other.hashes)
            && self.final_count == other.final_count
            && self.total == other.total
            && self.nonzero_cells() == other.nonzero_cells()
    }
}

impl Eq for CountMinSketch {}

impl Hash for CountMinSketch {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.width().hash(state);
        self.depth().hash(state);
        self.hashes.seed().hash(state);
        self.final_count.hash(state);
        self.total.hash(state);
        for (i, c) in self.nonzero_cells() {
            i.hash(state);
            c.hash(state);
        }
    }
}

/// Debug dump of a sketch. The layout is documented but not stable.
#[derive(Debug, Clone, Serialize)]
pub struct SketchDump {
    pub width: usize,
    pub depth: usize,
    pub seed: u64,
    /// Per-row `(a, b)` multiply-add-shift parameters, hex encoded.
    pub row_params: Vec<[String; 2]>,
    /// Row-major `depth * width` counters.
    pub cells: Vec<u64>,
    pub final_count: u64,
    pub total: u64,
}
