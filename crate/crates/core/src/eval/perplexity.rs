use crate::model::{Pdfa, Trace};

/// Default mass added to every candidate probability before renormalizing.
pub const DEFAULT_SMOOTHING: f64 = 1e-9;

/// `2^(-sum_i t_i log2 c_i)` where `t` is normalized as given and `c` is
/// smoothed with `eps` and renormalized over the same strings.
pub fn perplexity_of(truth: &[f64], candidate: &[f64], eps: f64) -> f64 {
    assert_eq!(truth.len(), candidate.len(), "misaligned probability lists");
    let t_sum: f64 = truth.iter().sum();
    let c_sum: f64 = candidate.iter().map(|c| c + eps).sum();
    let cross: f64 = truth
        .iter()
        .zip(candidate)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &c)| (t / t_sum) * ((c + eps) / c_sum).log2())
        .sum();
    (-cross).exp2()
}

/// Probabilities the model assigns to each test string.
pub fn candidate_probabilities(model: &Pdfa, test: &[Trace]) -> Vec<f64> {
    test.iter()
        .map(|t| model.string_probability(t).probability)
        .collect()
}

/// Perplexity of `model` on a test set with known true probabilities.
pub fn perplexity(model: &Pdfa, test: &[Trace], solution: &[f64], eps: f64) -> f64 {
    perplexity_of(solution, &candidate_probabilities(model, test), eps)
}

/// The floor reached by a model that reproduces the solution exactly.
pub fn true_perplexity(solution: &[f64], eps: f64) -> f64 {
    perplexity_of(solution, solution, eps)
}
