//! Binding periods along the critical orbits.
//!
//! A perturbed orbit started near a critical value `v` shadows the
//! unperturbed orbit `v_j = T_0^j(v)` for `N` steps when, for `j < N`,
//!
//! 1. `2|y_j - v_j| <= |v_j|`,
//! 2. `e^{-1} |DT^{j+1}(v)| <= |DT_ω^{j+1}(y)| <= e |DT^{j+1}(v)|`,
//! 3. `C ε |DT^{j+1}(v)| >= |y_{j+1} - v_{j+1}|`.
//!
//! The check below samples `(y, ω)` and reports the first failure.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::{derivative_unchecked, tilde_b, value_unchecked, MapError, MapFamily, Side};
use crate::noise::{derive_seed, task_rng, NoiseStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub sample: usize,
    pub y0: f64,
    pub step: usize,
    /// Which of the three binding conditions failed (1, 2 or 3).
    pub condition: u8,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub pass: bool,
    pub samples: usize,
    pub steps: usize,
    pub first_violation: Option<Violation>,
}

/// Samples `samples` pairs `(y, ω)` with `y` uniform in `B(v, ε) ∩ I` and
/// checks the binding conditions for `j < n`.
///
/// `constant` is the `C` of condition 3.
pub fn binding_period_check<M: MapFamily + ?Sized>(
    family: &M,
    v: f64,
    n: usize,
    eps: f64,
    constant: f64,
    samples: usize,
    seed: u64,
) -> CheckReport {
    // Unperturbed orbit and log |DT^{j+1}(v)|.
    let mut vs = Vec::with_capacity(n + 1);
    let mut log_dv = Vec::with_capacity(n);
    let mut x = v;
    let mut acc = 0.0;
    vs.push(x);
    for _ in 0..n {
        acc += derivative_unchecked(family, 0.0, x).ln();
        log_dv.push(acc);
        x = value_unchecked(family, 0.0, x);
        vs.push(x);
    }

    let mut first_violation = None;
    'samples: for i in 0..samples {
        let y0 = if eps == 0.0 {
            v
        } else {
            let u: f64 = task_rng(seed, i as u64).gen_range(-1.0..=1.0);
            (v + u * eps).clamp(-1.0, 1.0)
        };
        let omega = NoiseStream::new(derive_seed(seed ^ 0x5eed, i as u64), eps).window(0, n);
        let mut y = y0;
        let mut log_dy = 0.0;
        for j in 0..n {
            let violation = |condition, lhs, rhs| Violation {
                sample: i,
                y0,
                step: j,
                condition,
                lhs,
                rhs,
            };
            let dist = (y - vs[j]).abs();
            if 2.0 * dist > vs[j].abs() {
                first_violation = Some(violation(1, 2.0 * dist, vs[j].abs()));
                break 'samples;
            }
            if y == 0.0 {
                first_violation = Some(violation(1, 2.0 * dist, vs[j].abs()));
                break 'samples;
            }
            log_dy += derivative_unchecked(family, omega[j], y).ln();
            if (log_dy - log_dv[j]).abs() > 1.0 {
                first_violation = Some(violation(2, log_dy - log_dv[j], 1.0));
                break 'samples;
            }
            y = value_unchecked(family, omega[j], y);
            let lhs = constant * eps * log_dv[j].exp();
            let gap = (y - vs[j + 1]).abs();
            if lhs < gap {
                first_violation = Some(violation(3, lhs, gap));
                break 'samples;
            }
        }
    }
    CheckReport {
        pass: first_violation.is_none(),
        samples,
        steps: n,
        first_violation,
    }
}

/// Parameters of the preferred binding period search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BindingParams {
    /// `θ_1`; the search uses `θ = θ_1 / (4 W_0)`.
    pub theta1: f64,
    /// `L > 2^{s+1}`; `None` picks `2^{s+1} + 1`.
    pub l_factor: Option<f64>,
    /// `ζ ∈ (0, 1/s)`; `None` picks `1/(2s)`.
    pub zeta: Option<f64>,
    /// Largest `M` tried.
    pub cap: usize,
}

impl Default for BindingParams {
    fn default() -> Self {
        BindingParams {
            theta1: 0.09,
            l_factor: None,
            zeta: None,
            cap: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferredBinding {
    pub side: Side,
    /// Critical value `T_0(0±)`.
    pub critical_value: f64,
    pub m: usize,
    /// `Λ_0 = DT_0^{M+1}` along the critical value orbit.
    pub lambda0: f64,
    /// `W_0 = Σ_n 1 / DT_0^n(T_0(0))`.
    pub w0: f64,
    pub theta: f64,
    /// `A(T_0(0), M)`.
    pub a_value: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BindingError {
    #[error("no binding period up to M = {cap} satisfies the three conditions")]
    NotFound { cap: usize },
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Smallest `M` such that, along the unperturbed orbit `v_i` of the critical
/// value on the given side,
///
/// * `A(v, M) = Σ_{i<M} DT^i(v)/|v_i| <= θ/δ`,
/// * `v_0, …, v_{M-2} ∉ B̃(Lδ)`,
/// * `DT^{M+1}(v) >= (max{|v_M|, δ}/δ)^{1-ζ}`.
///
/// The sum is taken from the critical value itself, since `A` is infinite at
/// the singularity, and `Λ_0` is reported as `DT^{M+1}(v)`.
pub fn preferred_binding<M: MapFamily + ?Sized>(
    family: &M,
    side: Side,
    delta: f64,
    params: &BindingParams,
) -> Result<PreferredBinding, BindingError> {
    let s = family.order();
    let l = params.l_factor.unwrap_or(2f64.powf(s + 1.0) + 1.0);
    let zeta = params.zeta.unwrap_or(0.5 / s);
    let far = tilde_b(family, 0.0, l * delta)?;
    let v = side.limit_at_zero();

    // W_0 from the same orbit, summed until the terms are negligible.
    let mut w0 = 0.0;
    let mut x = v;
    let mut log_d = 0.0f64;
    for _ in 0..10_000 {
        let term = (-log_d).exp();
        w0 += term;
        if term < 1e-17 * w0 || x == 0.0 {
            break;
        }
        log_d += derivative_unchecked(family, 0.0, x).ln();
        x = value_unchecked(family, 0.0, x);
    }
    let theta = params.theta1 / (4.0 * w0);

    // vs[i] = v_i and log_dv[i] = log DT^i(v) for i <= cap + 1.
    let mut vs = vec![v];
    let mut log_dv = vec![0.0f64];
    for i in 0..=params.cap {
        let x = vs[i];
        if x == 0.0 {
            break;
        }
        log_dv.push(log_dv[i] + derivative_unchecked(family, 0.0, x).ln());
        vs.push(value_unchecked(family, 0.0, x));
    }

    let mut a = 0.0;
    for m in 1..=params.cap {
        if m + 1 >= vs.len() {
            break;
        }
        a += log_dv[m - 1].exp() / vs[m - 1].abs();
        if m >= 2 && far.contains(vs[m - 2]) {
            break;
        }
        if a > theta / delta {
            break;
        }
        let rhs = (vs[m].abs().max(delta) / delta).powf(1.0 - zeta);
        let lambda0 = log_dv[m + 1].exp();
        if lambda0 >= rhs {
            return Ok(PreferredBinding {
                side,
                critical_value: v,
                m,
                lambda0,
                w0,
                theta,
                a_value: a,
            });
        }
    }
    Err(BindingError::NotFound { cap: params.cap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::PowerFixture;

    #[test]
    fn zero_noise_binds_trivially() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let r = binding_period_check(&f, 1.0, 10, 0.0, 1.0, 5, 1);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn small_noise_binds_for_short_times() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let r = binding_period_check(&f, -1.0, 3, 1e-6, 40.0, 200, 7);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn large_noise_breaks_binding() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let r = binding_period_check(&f, 1.0, 20, 0.1, 1.0, 50, 7);
        assert!(!r.pass);
    }

    #[test]
    fn fixture_preferred_binding() {
        // Critical values are fixed points with DT = 4, so W_0 = 4/3,
        // A(v, M) = (4^M - 1)/3 and the derivative condition reads 4^{M+1} >= δ^{ζ-1}.
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        for side in [Side::Neg, Side::Pos] {
            let b = preferred_binding(&f, side, 1e-4, &BindingParams::default()).unwrap();
            assert!((b.w0 - 4.0 / 3.0).abs() < 1e-12);
            assert!((b.theta - 0.09 / (16.0 / 3.0)).abs() < 1e-12);
            assert_eq!(b.m, 4);
            assert!((b.lambda0 - 1024.0).abs() < 1e-9);
            assert!((b.a_value - 85.0).abs() < 1e-9);
        }
    }
}
