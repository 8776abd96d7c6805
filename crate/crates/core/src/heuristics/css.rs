use super::stats::{cosine_similarity, hoeffding_accepts};
use super::HeuristicVerdict;
use crate::error::{Error, Result};
use crate::sketch::{SketchContext, SketchLayout, SketchStack};

/// Layered sketch test.
///
/// Layers are checked in ascending order. For each layer every key seen in
/// the run is looked up in both sketches and its two frequencies go through
/// the Hoeffding test; the first failing layer rejects the pair and the
/// layers above it are skipped. The score is the mean of the per-layer
/// cosines.
pub fn css_consistency(
    s1: &SketchStack,
    n1: u64,
    s2: &SketchStack,
    n2: u64,
    ctx: &SketchContext,
    alpha: f64,
    narrow: f64,
) -> HeuristicVerdict {
    if n1 == 0 || n2 == 0 {
        return HeuristicVerdict::accept(0.0, 0);
    }
    let layout = ctx.layout();
    let layers = layout.num_layers();
    let mut score_sum = 0.0;
    let mut v1 = Vec::new();
    let mut v2 = Vec::new();
    for layer in 0..layers {
        let mult = layout.multiplicity(layer) as f64;
        let (d1, d2) = (n1 as f64 * mult, n2 as f64 * mult);
        let (c1, c2) = (s1.layer(layer), s2.layer(layer));
        v1.clear();
        v2.clear();
        for &key in ctx.registries().layer(layer) {
            let f1 = c1.retrieve(key) as f64 / d1;
            let f2 = c2.retrieve(key) as f64 / d2;
            if !hoeffding_accepts(f1, n1, f2, n2, alpha, narrow) {
                return HeuristicVerdict::reject(layer + 1);
            }
            v1.push(f1);
            v2.push(f2);
        }
        score_sum += cosine_similarity(&v1, &v2);
    }
    HeuristicVerdict::accept(score_sum / layers as f64, layers)
}

/// Cell-by-cell variant: every aligned counter pair is tested directly, so
/// the cost depends only on the sketch size. The score is the cosine of the
/// flattened cell frequencies.
pub fn css_cellwise_consistency(
    s1: &SketchStack,
    n1: u64,
    s2: &SketchStack,
    n2: u64,
    layout: &SketchLayout,
    alpha: f64,
    narrow: f64,
) -> Result<HeuristicVerdict> {
    if s1.layers().len() != s2.layers().len() {
        return Err(Error::SketchMismatch(format!(
            "{} vs {} layers",
            s1.layers().len(),
            s2.layers().len()
        )));
    }
    for (a, b) in s1.layers().iter().zip(s2.layers()) {
        if a.hashes() != b.hashes() {
            return Err(Error::SketchMismatch(
                "sketches use different hash functions".into(),
            ));
        }
    }
    if n1 == 0 || n2 == 0 {
        return Ok(HeuristicVerdict::accept(0.0, 0));
    }
    let mut v1 = Vec::new();
    let mut v2 = Vec::new();
    for (layer, (a, b)) in s1.layers().iter().zip(s2.layers()).enumerate() {
        let mult = layout.multiplicity(layer) as f64;
        let (d1, d2) = (n1 as f64 * mult, n2 as f64 * mult);
        for (x, y) in a.dense_cells().into_iter().zip(b.dense_cells()) {
            let (f1, f2) = (x as f64 / d1, y as f64 / d2);
            if !hoeffding_accepts(f1, n1, f2, n2, alpha, narrow) {
                return Ok(HeuristicVerdict::reject(layer + 1));
            }
            v1.push(f1);
            v2.push(f2);
        }
    }
    Ok(HeuristicVerdict::accept(
        cosine_similarity(&v1, &v2),
        s1.layers().len(),
    ))
}
