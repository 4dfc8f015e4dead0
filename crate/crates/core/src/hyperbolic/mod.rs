//! Hyperbolic times and their ensemble statistics.
//!
//! An iterate `n` is a `(δ, c′)`-hyperbolic time for `(ω, x)` when every
//! suffix of the depth sequence ending at `n` stays below the slope `c′`:
//!
//! ```text
//! Σ_{j=k}^{n-1} r_δ(T_ω^j x) < c′ (n - k)   for all 0 <= k < n.
//! ```
//!
//! With `S(k)` the prefix sums of depths and `G(k) = S(k) - c′k` this says
//! `G(n) < min_{k<n} G(k)`: hyperbolic times are the strict running minima
//! of `G`, which gives a single O(n) pass. The same reduction with
//! `a_j = c - r_j`, `c_1 = c - c′` is the Pliss setting.

mod binding;
mod neighborhood;
mod tails;

pub use binding::{
    binding_period_check, preferred_binding, BindingParams, CheckReport, PreferredBinding,
    Violation,
};
pub use neighborhood::{v_neighborhood, VCertificate, VError, VNeighborhood};
pub use tails::{
    fit_kappa, fit_survival, run_ensemble, sample_first_times, EnsembleSpec, EnsembleSummary,
    KappaFit, TailKind, TailRow, TailTable,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::{tilde_b, CriticalNeighborhoods, MapError, MapFamily};
use crate::orbit::OrbitTrace;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("Pliss constants need A >= c2 > c1 (got A = {a}, c2 = {c2}, c1 = {c1})")]
    Ordering { a: f64, c2: f64, c1: f64 },
    #[error("sequence entry a[{index}] = {value} exceeds A = {a}")]
    AboveBound { index: usize, value: f64, a: f64 },
    #[error("invalid hyperbolic constants: {0}")]
    Config(String),
}

/// Constants of the hyperbolic-time machinery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperbolicConfig {
    /// Depth scale `δ`.
    pub delta: f64,
    /// Neighborhood radius `δ_0`; the tower base has radius `δ_0 / 2`.
    pub delta0: f64,
    /// Bad-set threshold `c`.
    pub c: f64,
    /// Hyperbolic-time slope `c′` with `c < c′ < κ`.
    pub c_prime: f64,
    /// Expansion exponent `κ`.
    pub kappa: f64,
    /// Constant `C` of the expansion bound `DT^{n-k} >= C e^{λ′(n-k)/2}` and
    /// of the radius `C^{-1} δ_0 e^{-λ′n/2}` of `V_{x,n}`.
    pub expansion_const: f64,
}

impl Default for HyperbolicConfig {
    fn default() -> Self {
        HyperbolicConfig {
            delta: 0.01,
            delta0: 0.1,
            c: 0.3,
            c_prime: 0.5,
            kappa: 0.69,
            expansion_const: 0.5,
        }
    }
}

/// Status of the two smallness conditions on `δ_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta0Constraints {
    /// `C′ C^{-1} K_2 δ_0 δ^{1/s} < λ′/2`.
    pub distortion: bool,
    /// `δ_0 < C K_2^{-1} δ^{1/s}`.
    pub separation: bool,
}

impl HyperbolicConfig {
    /// `λ′ = κ - c′`.
    pub fn lambda_prime(&self) -> f64 {
        self.kappa - self.c_prime
    }

    /// Checks `0 < c < c′ < κ` and the positivity of the radii.
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ParamError::Config(format!(
                "delta = {} must lie in (0, 1)",
                self.delta
            )));
        }
        if !(self.delta0 > 0.0) {
            return Err(ParamError::Config(format!(
                "delta0 = {} must be positive",
                self.delta0
            )));
        }
        if !(0.0 < self.c && self.c < self.c_prime && self.c_prime < self.kappa) {
            return Err(ParamError::Config(format!(
                "need 0 < c < c_prime < kappa (got c = {}, c_prime = {}, kappa = {})",
                self.c, self.c_prime, self.kappa
            )));
        }
        if !(self.expansion_const > 0.0) {
            return Err(ParamError::Config(
                "expansion_const must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Evaluates the smallness conditions on `δ_0` for a family with order
    /// `s`, envelope bound `K_2` and admissibility constant `C′`.
    pub fn delta0_constraints(
        &self,
        s: f64,
        k2: f64,
        admissibility_const: f64,
    ) -> Delta0Constraints {
        let root = self.delta.powf(1.0 / s);
        let c = self.expansion_const;
        Delta0Constraints {
            distortion: admissibility_const / c * k2 * self.delta0 * root
                < 0.5 * self.lambda_prime(),
            separation: self.delta0 < c / k2 * root,
        }
    }

    /// Config with `c = κ/4`, `c′ = κ/2` derived from a fitted `κ`.
    pub fn with_kappa(self, kappa: f64) -> Self {
        HyperbolicConfig {
            kappa,
            c: kappa / 4.0,
            c_prime: kappa / 2.0,
            ..self
        }
    }
}

/// Pliss indices: all `1 <= n_i <= len` with `Σ_{j=k}^{n_i-1} a_j > c1 (n_i - k)`
/// for every `0 <= k < n_i`.
///
/// When `Σ a_j > c2 · len` there are at least `θ · len` of them, with
/// `θ = (c2 - c1) / (A - c1)`.
pub fn pliss_times(a: &[f64], c1: f64, c2: f64, big_a: f64) -> Result<Vec<usize>, ParamError> {
    if !(big_a >= c2 && c2 > c1) {
        return Err(ParamError::Ordering { a: big_a, c2, c1 });
    }
    if let Some((index, &value)) = a.iter().enumerate().find(|(_, &v)| v > big_a) {
        return Err(ParamError::AboveBound {
            index,
            value,
            a: big_a,
        });
    }
    // P(n) = Σ_{j<n} (a_j - c1); n qualifies iff P(n) > max_{k<n} P(k).
    let mut out = Vec::new();
    let mut p = 0.0;
    let mut running_max = 0.0;
    for (j, &aj) in a.iter().enumerate() {
        p += aj - c1;
        if p > running_max {
            out.push(j + 1);
            running_max = p;
        }
    }
    Ok(out)
}

/// `θ = (c2 - c1) / (A - c1)`.
pub fn pliss_theta(c1: f64, c2: f64, big_a: f64) -> f64 {
    (c2 - c1) / (big_a - c1)
}

/// All `(δ, c′)`-hyperbolic times `n ∈ 1..=depths.len()` of a depth sequence.
pub fn hyperbolic_times(depths: &[u32], c_prime: f64) -> Vec<usize> {
    let mut out = Vec::new();
    // Running argmin of G(k) = S(k) - c′k, compared as S(k) - S(k*) < c′(k - k*)
    // so every decision uses the same arithmetic as the definition.
    let mut s: u64 = 0;
    let mut best_k = 0usize;
    let mut best_s: u64 = 0;
    for (j, &r) in depths.iter().enumerate() {
        s += r as u64;
        let n = j + 1;
        if ((s - best_s) as f64) < c_prime * (n - best_k) as f64 {
            out.push(n);
            best_k = n;
            best_s = s;
        }
    }
    out
}

/// True iff `n` is a hyperbolic time, checked directly from the definition.
pub fn is_hyperbolic_time(depths: &[u32], n: usize, c_prime: f64) -> bool {
    if n == 0 || n > depths.len() {
        return false;
    }
    let mut suffix: u64 = 0;
    for k in (0..n).rev() {
        suffix += depths[k] as u64;
        if !((suffix as f64) < c_prime * (n - k) as f64) {
            return false;
        }
    }
    true
}

/// `(ω, x) ∈ E_n`: the depth sum over `[0, n)` reaches `c·n`.
pub fn bad_set_membership(trace: &OrbitTrace, cfg: &HyperbolicConfig, n: usize) -> bool {
    assert!(
        n <= trace.len(),
        "horizon {n} exceeds trace length {}",
        trace.len()
    );
    (trace.depth_sum(0, n) as f64) >= cfg.c * n as f64
}

/// Hyperbolic and hyperbolic-return times of one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicReport {
    pub times: Vec<usize>,
    /// `h(ω, x)`.
    pub first: Option<usize>,
    /// Hyperbolic times `n` with `T_ω^n(x) ∈ B̃(δ_0/2)`.
    pub return_times: Vec<usize>,
    /// `h*(ω, x)`.
    pub first_return: Option<usize>,
    /// Membership in `E_n` at the trace length.
    pub bad: bool,
}

/// Analyzer with `B̃(δ_0/2)` precomputed.
#[derive(Debug, Clone, Copy)]
pub struct HyperbolicAnalyzer {
    pub cfg: HyperbolicConfig,
    pub return_region: CriticalNeighborhoods,
}

impl HyperbolicAnalyzer {
    pub fn new<M: MapFamily + ?Sized>(family: &M, cfg: HyperbolicConfig) -> Result<Self, MapError> {
        let return_region = tilde_b(family, 0.0, 0.5 * cfg.delta0)?;
        Ok(HyperbolicAnalyzer { cfg, return_region })
    }

    pub fn report(&self, trace: &OrbitTrace) -> HyperbolicReport {
        debug_assert_eq!(
            trace.delta, self.cfg.delta,
            "trace depths use a different delta"
        );
        let times = hyperbolic_times(&trace.depths, self.cfg.c_prime);
        let return_times = self.return_times_from(trace, &times);
        HyperbolicReport {
            first: times.first().copied(),
            first_return: return_times.first().copied(),
            bad: bad_set_membership(trace, &self.cfg, trace.len()),
            times,
            return_times,
        }
    }

    fn return_times_from(&self, trace: &OrbitTrace, times: &[usize]) -> Vec<usize> {
        times
            .iter()
            .copied()
            .filter(|&n| self.return_region.contains(trace.points[n]))
            .collect()
    }

    pub fn hyperbolic_return_times(&self, trace: &OrbitTrace) -> Vec<usize> {
        let times = hyperbolic_times(&trace.depths, self.cfg.c_prime);
        self.return_times_from(trace, &times)
    }

    pub fn first_hyperbolic_return(&self, trace: &OrbitTrace) -> Option<usize> {
        self.hyperbolic_return_times(trace).first().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(depths: &[u32], c_prime: f64) -> Vec<usize> {
        (1..=depths.len())
            .filter(|&n| is_hyperbolic_time(depths, n, c_prime))
            .collect()
    }

    #[test]
    fn pliss_constant_sequence() {
        let t = pliss_times(&[1.0, 1.0, 1.0, 1.0], 0.0, 0.5, 1.0).unwrap();
        assert_eq!(t, vec![1, 2, 3, 4]);
    }

    #[test]
    fn pliss_rejects_bad_constants() {
        assert!(matches!(
            pliss_times(&[0.0], 0.5, 0.5, 1.0),
            Err(ParamError::Ordering { .. })
        ));
        assert!(matches!(
            pliss_times(&[0.0], 0.0, 1.0, 0.5),
            Err(ParamError::Ordering { .. })
        ));
        assert!(matches!(
            pliss_times(&[2.0], 0.0, 0.5, 1.0),
            Err(ParamError::AboveBound { index: 0, .. })
        ));
    }

    #[test]
    fn pliss_reduction_gives_hyperbolic_times() {
        // a_j = c - r_j with c = 1, c1 = c - c′ = 0 for c′ = 1.
        let depths = [5u32, 0, 0, 0, 0, 0, 0, 0];
        let a: Vec<f64> = depths.iter().map(|&r| 1.0 - r as f64).collect();
        let p = pliss_times(&a, 0.0, 0.0 + 1e-9, 1.0).unwrap();
        assert_eq!(p.first(), Some(&6));
        assert_eq!(hyperbolic_times(&depths, 1.0).first(), Some(&6));
    }

    #[test]
    fn hyperbolic_examples() {
        assert_eq!(hyperbolic_times(&[0; 6], 0.1), vec![1, 2, 3, 4, 5, 6]);
        let d = [5u32, 0, 0, 0, 0, 0, 0];
        assert_eq!(hyperbolic_times(&d, 1.0), brute(&d, 1.0));
        assert_eq!(hyperbolic_times(&d, 1.0)[0], 6);
        let d = [0u32, 3, 0, 0, 0, 0];
        let h = hyperbolic_times(&d, 1.0);
        assert_eq!(h, brute(&d, 1.0));
        assert!(h.contains(&1) && !h.contains(&2) && h.contains(&5));
    }

    #[test]
    fn config_validation() {
        assert!(HyperbolicConfig::default().validate().is_ok());
        let bad = HyperbolicConfig {
            c: 0.5,
            c_prime: 0.4,
            ..HyperbolicConfig::default()
        };
        assert!(bad.validate().is_err());
        let derived = HyperbolicConfig::default().with_kappa(0.6);
        assert!((derived.c - 0.15).abs() < 1e-15 && (derived.c_prime - 0.3).abs() < 1e-15);
        assert!((derived.lambda_prime() - 0.3).abs() < 1e-15);
    }
}
