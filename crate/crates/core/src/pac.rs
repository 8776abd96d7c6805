//! Sample-size and sketch-size calculator for the PAC guarantees of the
//! sketch-based learner.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::sketch::sketch_dimensions;

/// Chebyshev-Cantelli bound on a false accept for two states of size `m`
/// whose distributions differ by `mu`:
/// `(1/2m) / (1/2m + (mu - sqrt(2 ln(2/alpha) / m))^2)`.
pub fn f_m0(m: f64, mu: f64, alpha: f64) -> f64 {
    let a = 1.0 / (2.0 * m);
    let g = mu - (2.0 / m * (2.0 / alpha).ln()).sqrt();
    a / (a + g * g)
}

/// Real-valued location of the maximum of [`f_m0`], where it equals one.
pub fn f_m0_argmax(mu: f64, alpha: f64) -> f64 {
    2.0 * (2.0 / alpha).ln() / (mu * mu)
}

/// Smallest `m >= 1` with `f_m0(m') <= bound` for every `m' >= m`.
///
/// `f_m0` rises up to its maximum and falls afterwards, so the answer is
/// either 1 (the bound is never exceeded) or lies on the falling side, where
/// it is found by doubling and bisection.
pub fn min_m0(mu: f64, alpha: f64, bound: f64) -> Result<u64> {
    check_mu(mu)?;
    check_open_unit("alpha", alpha)?;
    if !(bound > 0.0) {
        return Err(Error::InvalidParameter(format!("bound must be positive, got {bound}")));
    }
    let peak = f_m0_argmax(mu, alpha).max(1.0);
    let lo_peak = peak.floor().max(1.0) as u64;
    let hi_peak = peak.ceil() as u64;
    let f = |m: u64| f_m0(m as f64, mu, alpha);
    if f(lo_peak).max(f(hi_peak)) <= bound {
        return Ok(1);
    }
    // f(lo) > bound, and f decreases from hi_peak on.
    let mut lo = hi_peak;
    if f(lo) <= bound {
        return Ok(lo);
    }
    let mut hi = lo.saturating_mul(2);
    while f(hi) > bound {
        if hi == u64::MAX {
            return Err(Error::InvalidParameter("bound too small to reach".into()));
        }
        lo = hi;
        hi = hi.saturating_mul(2);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(mid) > bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Both terms of the batch-size requirement and their maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchBound {
    /// `(8 n^2 S^2 / eps^2) ln(2 n^2 S^2 / delta')`.
    pub sample_term: f64,
    /// `4 m0 n S / eps`.
    pub size_term: f64,
    pub bound: u64,
    pub size_term_dominates: bool,
}

pub fn batch_lower_bound(n: u64, alphabet_size: u64, epsilon: f64, delta_prime: f64, m0: u64) -> BatchBound {
    let (n, s) = (n as f64, alphabet_size as f64);
    let ns2 = n * n * s * s;
    let sample_term = 8.0 * ns2 / (epsilon * epsilon) * (2.0 * ns2 / delta_prime).ln();
    let size_term = 4.0 * m0 as f64 * n * s / epsilon;
    let max = sample_term.max(size_term);
    BatchBound {
        sample_term,
        size_term,
        bound: max.ceil().min(u64::MAX as f64) as u64,
        size_term_dominates: size_term > sample_term,
    }
}

/// `P(n' <= t)` for the number `n'` of symbols hashed into one sketch
/// column, `n' ~ Binomial(S, 1/w)`, by the normal approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionBound {
    pub probability: f64,
    pub mean: f64,
    pub std_dev: f64,
    /// False when `S < 10 w`, where the approximation is poor.
    pub reliable: bool,
}

pub fn collision_bound(alphabet_size: u64, width: u64, t: f64) -> Result<CollisionBound> {
    if alphabet_size == 0 || width == 0 {
        return Err(Error::InvalidParameter("alphabet size and width must be positive".into()));
    }
    let (s, p) = (alphabet_size as f64, 1.0 / width as f64);
    let mean = s * p;
    let std_dev = (s * p * (1.0 - p)).sqrt();
    let probability = if std_dev == 0.0 {
        if t >= mean { 1.0 } else { 0.0 }
    } else {
        Normal::new(mean, std_dev)
            .expect("positive deviation")
            .cdf(t + 0.5)
    };
    Ok(CollisionBound {
        probability,
        mean,
        std_dev,
        reliable: alphabet_size >= 10 * width,
    })
}

/// Samples per state that the cell-wise test needs when `n_c` keys share a
/// cell: `n_c n^2 S^2 / ((mu / 4 n_c)^2 delta')`, rounded up.
pub fn cellwise_m0_bound(n_c: u64, n: u64, alphabet_size: u64, mu: f64, delta_prime: f64) -> f64 {
    let (nc, n, s) = (n_c as f64, n as f64, alphabet_size as f64);
    let gap = mu / (4.0 * nc);
    (nc * n * n * s * s / (gap * gap * delta_prime)).ceil()
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "mu must lie in (0, 1], got {mu}"
        )))
    }
}

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// Inputs of the calculator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PacParams {
    pub mu: f64,
    pub alpha: f64,
    /// Sketch error bound; must stay below `mu`.
    pub beta: f64,
    /// Sketch failure probability.
    pub gamma: f64,
    pub epsilon: f64,
    pub delta_prime: f64,
    /// Upper bound on the number of states.
    pub n: u64,
    pub alphabet_size: u64,
    pub future_len: u64,
}

impl PacParams {
    /// Defaults `beta = mu / 4` and `gamma = delta'`.
    pub fn new(mu: f64, alpha: f64, epsilon: f64, delta_prime: f64, n: u64, alphabet_size: u64) -> Self {
        Self {
            mu,
            alpha,
            beta: mu / 4.0,
            gamma: delta_prime,
            epsilon,
            delta_prime,
            n,
            alphabet_size,
            future_len: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_mu(self.mu)?;
        check_open_unit("alpha", self.alpha)?;
        check_open_unit("gamma", self.gamma)?;
        check_open_unit("epsilon", self.epsilon)?;
        check_open_unit("delta'", self.delta_prime)?;
        if !(self.beta > 0.0 && self.beta < self.mu) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (0, mu = {}), got {}",
                self.mu, self.beta
            )));
        }
        if self.n == 0 || self.alphabet_size == 0 || self.future_len == 0 {
            return Err(Error::InvalidParameter(
                "n, alphabet size and future length must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn report(&self) -> Result<PacReport> {
        self.validate()?;
        let (width, depth) = sketch_dimensions(self.beta, self.gamma)?;
        let (n, s) = (self.n as f64, self.alphabet_size as f64);
        let wd = (width * depth) as f64;
        let m0_target = self.delta_prime / (2.0 * n * n * s * s * wd * wd * self.future_len as f64);
        let m0 = min_m0(self.mu, self.alpha, m0_target)?;
        let batch = batch_lower_bound(self.n, self.alphabet_size, self.epsilon, self.delta_prime, m0);
        let collisions_per_cell = self.alphabet_size.div_ceil(width as u64).max(1);
        Ok(PacReport {
            params: *self,
            width,
            depth,
            m0_target,
            m0,
            f_at_m0: f_m0(m0 as f64, self.mu, self.alpha),
            batch,
            collisions_per_cell,
            collision: collision_bound(self.alphabet_size, width as u64, collisions_per_cell as f64)?,
            cellwise_m0: cellwise_m0_bound(
                collisions_per_cell,
                self.n,
                self.alphabet_size,
                self.mu,
                self.delta_prime,
            ),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PacReport {
    pub params: PacParams,
    pub width: usize,
    pub depth: usize,
    /// Required per-pair false-accept level `delta' / (2 n^2 S^2 (wd)^2 F)`.
    pub m0_target: f64,
    pub m0: u64,
    pub f_at_m0: f64,
    pub batch: BatchBound,
    pub collisions_per_cell: u64,
    pub collision: CollisionBound,
    pub cellwise_m0: f64,
}

impl std::fmt::Display for PacReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = &self.params;
        writeln!(
            f,
            "inputs: mu={} alpha={} beta={} gamma={} eps={} delta'={} n={} |S|={} F={}",
            p.mu, p.alpha, p.beta, p.gamma, p.epsilon, p.delta_prime, p.n, p.alphabet_size, p.future_len
        )?;
        writeln!(f, "sketch: w={} d={}", self.width, self.depth)?;
        writeln!(
            f,
            "m0: {} (f(m0)={:.3e} <= {:.3e})",
            self.m0, self.f_at_m0, self.m0_target
        )?;
        writeln!(f, "batch term 8n^2S^2/eps^2 ln(2n^2S^2/delta'): {:.6e}", self.batch.sample_term)?;
        writeln!(f, "batch term 4 m0 n S/eps: {:.6e}", self.batch.size_term)?;
        writeln!(
            f,
            "batch size B >= {} ({} term dominates)",
            self.batch.bound,
            if self.batch.size_term_dominates { "m0" } else { "sample" }
        )?;
        writeln!(
            f,
            "collisions: P(n' <= {}) = {:.4}{}",
            self.collisions_per_cell,
            self.collision.probability,
            if self.collision.reliable { "" } else { " (normal approximation unreliable: |S| < 10w)" }
        )?;
        write!(f, "cell-wise m0 >= {:.6e}", self.cellwise_m0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f_m0_hand_value() {
        let v = f_m0(100.0, 0.5, 0.05);
        assert!((v - 0.0875).abs() < 5e-4, "{v}");
    }

    #[test]
    fn f_m0_rises_then_falls() {
        let (mu, alpha) = (0.5, 0.05);
        let vals: Vec<f64> = (1..=200).map(|m| f_m0(m as f64, mu, alpha)).collect();
        let argmax = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(argmax > 0 && argmax < vals.len() - 1);
        assert!(vals[..argmax].windows(2).all(|w| w[0] < w[1]));
        assert!(vals[argmax..].windows(2).all(|w| w[0] > w[1]));
        assert!((f_m0(f_m0_argmax(mu, alpha), mu, alpha) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tail_decreases_to_zero() {
        for mu in [0.1, 0.3, 0.5, 0.9] {
            for alpha in [0.05, 0.2] {
                let start = f_m0_argmax(mu, alpha).ceil() as u64;
                let mut last = f_m0(start as f64, mu, alpha);
                let mut m = start;
                while m < 1_000_000 {
                    m = (m + 1).max(m * 101 / 100);
                    let v = f_m0(m as f64, mu, alpha);
                    assert!(v < last, "mu={mu} alpha={alpha} m={m}");
                    last = v;
                }
                assert!(last < 1e-3);
            }
        }
    }

    /// `f = 1 / (1 + 2 (mu sqrt(m) - sqrt(c))^2)`, solved for the falling side.
    fn closed_form_m0(mu: f64, alpha: f64, bound: f64) -> f64 {
        let c = 2.0 * (2.0 / alpha).ln();
        let s = ((1.0 / bound - 1.0) / 2.0).sqrt();
        ((c.sqrt() + s) / mu).powi(2)
    }

    #[test]
    fn min_m0_matches_scan() {
        let (mu, alpha, bound) = (0.5, 0.05, 0.01);
        let m0 = min_m0(mu, alpha, bound).unwrap();
        let mut last_bad = 0;
        for m in 1..=1_000_000u64 {
            if f_m0(m as f64, mu, alpha) > bound {
                last_bad = m;
            }
        }
        assert_eq!(m0, last_bad + 1);
        assert!((m0 as f64 - closed_form_m0(mu, alpha, bound)).abs() <= 1.0);
    }

    #[test]
    fn loose_bound_gives_one() {
        assert_eq!(min_m0(0.5, 0.05, 1.0).unwrap(), 1);
        assert!(min_m0(0.0, 0.05, 0.1).is_err());
        assert!(min_m0(0.5, 0.05, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn min_m0_is_monotone_and_exact(mu in 0.05f64..1.0, alpha in 0.01f64..0.5, e1 in 1.0f64..8.0, e2 in 0.1f64..2.0) {
            let b1 = 10f64.powf(-e1);
            let b2 = b1 * 10f64.powf(-e2);
            let m1 = min_m0(mu, alpha, b1).unwrap();
            let m2 = min_m0(mu, alpha, b2).unwrap();
            prop_assert!(m2 >= m1);
            prop_assert!(f_m0(m1 as f64, mu, alpha) <= b1);
            if m1 > 1 {
                prop_assert!(f_m0((m1 - 1) as f64, mu, alpha) > b1);
            }
            let cf = closed_form_m0(mu, alpha, b1);
            prop_assert!((m1 as f64 - cf).abs() <= 1.0 + 1e-9 * cf);
        }
    }

    #[test]
    fn batch_bound_terms() {
        let b = batch_lower_bound(5, 3, 0.1, 0.05, 500);
        // written out separately: n^2 S^2 = 225
        let t1 = 8.0 * 225.0 / 0.01 * (450.0f64 / 0.05).ln();
        let t2 = 4.0 * 500.0 * 15.0 / 0.1;
        assert!((b.sample_term - t1).abs() < 1e-6 * t1);
        assert!((b.size_term - t2).abs() < 1e-9);
        assert_eq!(b.bound, t1.max(t2).ceil() as u64);
        assert!(!b.size_term_dominates);
        let doubled = batch_lower_bound(10, 3, 0.1, 0.05, 500);
        assert!(doubled.sample_term > 4.0 * b.sample_term);
        let tiny = batch_lower_bound(5, 3, 1e-9, 0.05, 500);
        assert!(tiny.sample_term > 1e20);
    }

    fn exact_binomial_cdf(n: u64, p: f64, t: u64) -> f64 {
        // pmf recursion in log space
        let mut log_pmf = n as f64 * (1.0 - p).ln();
        let mut total = log_pmf.exp();
        for k in 1..=t.min(n) {
            log_pmf += ((n - k + 1) as f64).ln() - (k as f64).ln() + p.ln() - (1.0 - p).ln();
            total += log_pmf.exp();
        }
        total
    }

    #[test]
    fn collision_bound_against_exact_tail() {
        let c = collision_bound(10_000, 100, 120.0).unwrap();
        let exact = exact_binomial_cdf(10_000, 0.01, 120);
        assert!((c.probability - exact).abs() < 0.01, "{} vs {exact}", c.probability);
        assert!(c.reliable);
        let full = collision_bound(10_000, 100, 10_000.0).unwrap();
        assert!((full.probability - 1.0).abs() < 1e-12);
        let mid = collision_bound(10_000, 100, 100.0).unwrap();
        assert!((mid.probability - 0.5).abs() < 0.05);
        assert!(!collision_bound(50, 100, 1.0).unwrap().reliable);
    }

    #[test]
    fn cellwise_bound() {
        let one = cellwise_m0_bound(1, 10, 5, 0.2, 0.05);
        assert_eq!(one, (100.0 * 25.0 * 16.0 / (0.04 * 0.05) as f64).ceil());
        let four = cellwise_m0_bound(4, 10, 5, 0.2, 0.05);
        let direct = (4.0 * 100.0 * 25.0 / ((0.2f64 / 16.0).powi(2) * 0.05)).ceil();
        assert!((four - direct).abs() <= 1.0);
        let eight = cellwise_m0_bound(8, 10, 5, 0.2, 0.05);
        assert!((eight / four - 8.0).abs() < 1e-6);
    }

    #[test]
    fn report_validates_and_formats() {
        let p = PacParams::new(0.5, 0.05, 0.1, 0.05, 10, 8);
        let r = p.report().unwrap();
        assert_eq!((r.width, r.depth), (22, 3));
        assert!(f_m0(r.m0 as f64, p.mu, p.alpha) <= r.m0_target);
        let text = r.to_string();
        assert!(text.contains("batch size B >="));
        assert!(text.contains("term dominates"));
        let bad = PacParams { beta: 0.6, ..p };
        assert!(bad.report().is_err());
        assert!(PacParams::new(0.0, 0.05, 0.1, 0.05, 10, 8).report().is_err());
        assert_eq!(p.report().unwrap(), r);
    }
}
