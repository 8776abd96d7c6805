//! The Hoeffding frequency test and cosine scoring shared by all heuristics.

/// Half-width of the Hoeffding acceptance region for sample sizes `n1`, `n2`:
/// `sqrt(ln(2/alpha) / 2) * (1/sqrt(n1) + 1/sqrt(n2))`.
pub fn hoeffding_bound(n1: u64, n2: u64, alpha: f64) -> f64 {
    debug_assert!(n1 >= 1 && n2 >= 1);
    (0.5 * (2.0 / alpha).ln()).sqrt() * (1.0 / (n1 as f64).sqrt() + 1.0 / (n2 as f64).sqrt())
}

/// True when the frequencies `f1`, `f2` observed on `n1`, `n2` samples are
/// compatible. `narrow` is subtracted from the bound (zero for the plain test).
pub fn hoeffding_accepts(f1: f64, n1: u64, f2: f64, n2: u64, alpha: f64, narrow: f64) -> bool {
    (f1 - f2).abs() < hoeffding_bound(n1, n2, alpha) - narrow
}

/// Count form of the test: `|c1/n1 - c2/n2| < bound`.
pub fn hoeffding_check(c1: u64, n1: u64, c2: u64, n2: u64, alpha: f64) -> bool {
    hoeffding_accepts(c1 as f64 / n1 as f64, n1, c2 as f64 / n2 as f64, n2, alpha, 0.0)
}

/// `v1 . v2 / (|v1| |v2|)`; zero when either vector is zero.
pub fn cosine_similarity(v1: &[f64], v2: &[f64]) -> f64 {
    assert_eq!(v1.len(), v2.len(), "cosine of vectors with different lengths");
    let (mut dot, mut n1, mut n2) = (0.0, 0.0, 0.0);
    for (a, b) in v1.iter().zip(v2) {
        dot += a * b;
        n1 += a * a;
        n2 += b * b;
    }
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    dot / (n1.sqrt() * n2.sqrt())
}
