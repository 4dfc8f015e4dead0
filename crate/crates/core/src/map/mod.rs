//! Contracting Lorenz map families on `I = [-1, 1]`.
//!
//! A family is described per side of the singularity by a *profile*
//! `F_side(t, y)` on `y = |x| ∈ [0, 1]` with `F(t, 0) = -1`, so that
//!
//! ```text
//! T_t(x) = side(x) · F_side(t, |x|)
//! ```
//!
//! and `T_t(0±) = ∓1`. Derivatives in `x` follow from the profile as
//! `D^k T_t(x) = side^{k+1} · F^{(k)}(|x|)`.

mod conditions;
mod table;

pub use conditions::{verify_conditions, ConditionReport, GridSpec};
pub use table::{MonotoneSpline, TabulatedFamily};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::bisect_monotone;
use crate::Interval;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("x = 0 is the singular point of the family")]
    Singular,
    #[error("x = {0} lies outside [-1, 1]")]
    OutOfDomain(f64),
    #[error("noise parameter t = {t} exceeds eps_max = {eps_max}")]
    NoiseOutOfRange { t: f64, eps_max: f64 },
    #[error("delta = {delta} too large: B_delta(±1) leaves the branch range (limit {limit})")]
    DeltaTooLarge { delta: f64, limit: f64 },
    #[error("invalid family: {0}")]
    InvalidFamily(String),
}

/// Side of the singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Neg,
    Pos,
}

impl Side {
    /// Side of a nonzero point; `0.0` and `-0.0` map by their sign bit.
    #[inline]
    pub fn of(x: f64) -> Side {
        if x.is_sign_negative() {
            Side::Neg
        } else {
            Side::Pos
        }
    }

    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Side::Neg => -1.0,
            Side::Pos => 1.0,
        }
    }

    /// One-sided limit `T_t(0±)`.
    #[inline]
    pub fn limit_at_zero(self) -> f64 {
        -self.sign()
    }
}

/// An admissible one-parameter family `{T_t}` with `|t| <= eps_max`.
pub trait MapFamily: Send + Sync {
    /// Order `s > 1` of the singularity.
    fn order(&self) -> f64;

    fn eps_max(&self) -> f64;

    /// Declared envelope `(K1, K2)` with `K1 |x|^{s-1} <= DT_t(x) <= K2 |x|^{s-1}`.
    fn envelope(&self) -> (f64, f64);

    /// Profile value `F_side(t, y)`.
    fn profile(&self, side: Side, t: f64, y: f64) -> f64;

    /// Profile derivatives `[F', F'', F''']` in `y`.
    fn profile_derivs(&self, side: Side, t: f64, y: f64) -> [f64; 3];

    fn profile_slope(&self, side: Side, t: f64, y: f64) -> f64 {
        self.profile_derivs(side, t, y)[0]
    }
}

impl<M: MapFamily + ?Sized> MapFamily for &M {
    fn order(&self) -> f64 {
        (**self).order()
    }
    fn eps_max(&self) -> f64 {
        (**self).eps_max()
    }
    fn envelope(&self) -> (f64, f64) {
        (**self).envelope()
    }
    fn profile(&self, side: Side, t: f64, y: f64) -> f64 {
        (**self).profile(side, t, y)
    }
    fn profile_derivs(&self, side: Side, t: f64, y: f64) -> [f64; 3] {
        (**self).profile_derivs(side, t, y)
    }
    fn profile_slope(&self, side: Side, t: f64, y: f64) -> f64 {
        (**self).profile_slope(side, t, y)
    }
}

/// Closed-form fixture `T_t(x) = sign(x)((2 - |t|)|x|^s - 1)`.
///
/// Satisfies C1–C3 and R1–R2 exactly (the critical values `±1` are repelling
/// fixed points of `T_0` with `DT_0(±1) = 2s`) but not R3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFixture {
    pub s: f64,
    pub eps_max: f64,
}

impl PowerFixture {
    pub fn new(s: f64, eps_max: f64) -> Result<Self, MapError> {
        if !(s > 1.0 && s.is_finite()) {
            return Err(MapError::InvalidFamily(format!(
                "order s = {s} must exceed 1"
            )));
        }
        if !(eps_max > 0.0 && eps_max <= 1.0) {
            return Err(MapError::InvalidFamily(format!(
                "eps_max = {eps_max} must lie in (0, 1]"
            )));
        }
        Ok(PowerFixture { s, eps_max })
    }
}

impl MapFamily for PowerFixture {
    fn order(&self) -> f64 {
        self.s
    }

    fn eps_max(&self) -> f64 {
        self.eps_max
    }

    fn envelope(&self) -> (f64, f64) {
        ((2.0 - self.eps_max) * self.s, 2.0 * self.s)
    }

    #[inline]
    fn profile(&self, _side: Side, t: f64, y: f64) -> f64 {
        let a = 2.0 - t.abs();
        if self.s == 2.0 {
            a * y * y - 1.0
        } else {
            a * y.powf(self.s) - 1.0
        }
    }

    fn profile_derivs(&self, _side: Side, t: f64, y: f64) -> [f64; 3] {
        let a = 2.0 - t.abs();
        let s = self.s;
        [
            a * s * y.powf(s - 1.0),
            a * s * (s - 1.0) * y.powf(s - 2.0),
            a * s * (s - 1.0) * (s - 2.0) * y.powf(s - 3.0),
        ]
    }

    #[inline]
    fn profile_slope(&self, _side: Side, t: f64, y: f64) -> f64 {
        let a = 2.0 - t.abs();
        if self.s == 2.0 {
            2.0 * a * y
        } else {
            a * self.s * y.powf(self.s - 1.0)
        }
    }
}

/// Config-selectable family.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Fixture(PowerFixture),
    Table(TabulatedFamily),
}

impl MapFamily for Family {
    fn order(&self) -> f64 {
        match self {
            Family::Fixture(f) => f.order(),
            Family::Table(f) => f.order(),
        }
    }
    fn eps_max(&self) -> f64 {
        match self {
            Family::Fixture(f) => f.eps_max(),
            Family::Table(f) => f.eps_max(),
        }
    }
    fn envelope(&self) -> (f64, f64) {
        match self {
            Family::Fixture(f) => f.envelope(),
            Family::Table(f) => f.envelope(),
        }
    }
    #[inline]
    fn profile(&self, side: Side, t: f64, y: f64) -> f64 {
        match self {
            Family::Fixture(f) => f.profile(side, t, y),
            Family::Table(f) => f.profile(side, t, y),
        }
    }
    fn profile_derivs(&self, side: Side, t: f64, y: f64) -> [f64; 3] {
        match self {
            Family::Fixture(f) => f.profile_derivs(side, t, y),
            Family::Table(f) => f.profile_derivs(side, t, y),
        }
    }
    #[inline]
    fn profile_slope(&self, side: Side, t: f64, y: f64) -> f64 {
        match self {
            Family::Fixture(f) => f.profile_slope(side, t, y),
            Family::Table(f) => f.profile_slope(side, t, y),
        }
    }
}

// ---------------------------------------------------------------------------
// Unchecked evaluation used on hot paths. Callers guarantee x ∈ [-1, 1].

/// `T_t` restricted to one branch, continuously extended to the cut (`x = 0`).
#[inline]
pub fn value_on<M: MapFamily + ?Sized>(family: &M, side: Side, t: f64, x: f64) -> f64 {
    let y = (side.sign() * x).max(0.0);
    (side.sign() * family.profile(side, t, y)).clamp(-1.0, 1.0)
}

#[inline]
pub fn value_unchecked<M: MapFamily + ?Sized>(family: &M, t: f64, x: f64) -> f64 {
    value_on(family, Side::of(x), t, x)
}

#[inline]
pub fn derivative_unchecked<M: MapFamily + ?Sized>(family: &M, t: f64, x: f64) -> f64 {
    let side = Side::of(x);
    family.profile_slope(side, t, x.abs())
}

fn check<M: MapFamily + ?Sized>(family: &M, t: f64, x: f64) -> Result<(), MapError> {
    if x == 0.0 {
        return Err(MapError::Singular);
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(MapError::OutOfDomain(x));
    }
    if !(t.abs() <= family.eps_max()) {
        return Err(MapError::NoiseOutOfRange {
            t,
            eps_max: family.eps_max(),
        });
    }
    Ok(())
}

/// `T_t(x)`.
pub fn evaluate<M: MapFamily + ?Sized>(family: &M, t: f64, x: f64) -> Result<f64, MapError> {
    check(family, t, x)?;
    Ok(value_unchecked(family, t, x))
}

/// `DT_t(x)`.
pub fn derivative<M: MapFamily + ?Sized>(family: &M, t: f64, x: f64) -> Result<f64, MapError> {
    check(family, t, x)?;
    Ok(derivative_unchecked(family, t, x))
}

/// `D²T_t(x)`.
pub fn second_derivative<M: MapFamily + ?Sized>(
    family: &M,
    t: f64,
    x: f64,
) -> Result<f64, MapError> {
    check(family, t, x)?;
    let side = Side::of(x);
    Ok(side.sign() * family.profile_derivs(side, t, x.abs())[1])
}

/// `D³T_t(x)`.
pub fn third_derivative<M: MapFamily + ?Sized>(
    family: &M,
    t: f64,
    x: f64,
) -> Result<f64, MapError> {
    check(family, t, x)?;
    let side = Side::of(x);
    Ok(family.profile_derivs(side, t, x.abs())[2])
}

/// Schwarzian derivative `D(D²T/DT) - ½(D²T/DT)² = D³T/DT - 3/2 (D²T/DT)²`.
pub fn schwarzian<M: MapFamily + ?Sized>(family: &M, t: f64, x: f64) -> Result<f64, MapError> {
    check(family, t, x)?;
    let side = Side::of(x);
    let [d1, d2, d3] = family.profile_derivs(side, t, x.abs());
    let q = side.sign() * d2 / d1;
    Ok(d3 / d1 - 1.5 * q * q)
}

/// Preimages of the δ-neighborhoods of the critical values `±1` that touch the
/// singularity, one per side, together with `D(δ) = |B_δ(0)| / |B̃(δ)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalNeighborhoods {
    pub delta: f64,
    /// `(-a_neg, 0)`, mapped onto `(1 - δ, 1)`.
    pub neg: Interval,
    /// `(0, a_pos)`, mapped onto `(-1, -1 + δ)`.
    pub pos: Interval,
    pub d_ratio: f64,
}

impl CriticalNeighborhoods {
    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x != 0.0 && self.neg.lo <= x && x <= self.pos.hi
    }

    /// Total length `|B̃(δ)|`.
    pub fn measure(&self) -> f64 {
        self.neg.len() + self.pos.len()
    }
}

/// Computes `B̃(δ)` for the map `T_t` by bisection on each monotone branch.
pub fn tilde_b<M: MapFamily + ?Sized>(
    family: &M,
    t: f64,
    delta: f64,
) -> Result<CriticalNeighborhoods, MapError> {
    if !(t.abs() <= family.eps_max()) {
        return Err(MapError::NoiseOutOfRange {
            t,
            eps_max: family.eps_max(),
        });
    }
    if !(delta > 0.0) {
        return Err(MapError::DeltaTooLarge { delta, limit: 0.0 });
    }
    // Branch range on the positive side is (-1, T_t(1)]; on the negative side [T_t(-1), 1).
    let top = value_on(family, Side::Pos, t, 1.0);
    let bottom = value_on(family, Side::Neg, t, -1.0);
    let limit = (top + 1.0).min(1.0 - bottom);
    if delta >= limit {
        return Err(MapError::DeltaTooLarge { delta, limit });
    }
    let a_pos = bisect_monotone(
        |x| value_on(family, Side::Pos, t, x),
        0.0,
        1.0,
        -1.0 + delta,
        true,
        1e-13,
    );
    let a_neg = bisect_monotone(
        |x| value_on(family, Side::Neg, t, x),
        -1.0,
        0.0,
        1.0 - delta,
        true,
        1e-13,
    );
    let neg = Interval { lo: a_neg, hi: 0.0 };
    let pos = Interval { lo: 0.0, hi: a_pos };
    let d_ratio = 2.0 * delta / (neg.len() + pos.len());
    Ok(CriticalNeighborhoods {
        delta,
        neg,
        pos,
        d_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(s: f64) -> PowerFixture {
        PowerFixture::new(s, 0.1).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let f = fixture(2.0);
        assert_eq!(evaluate(&f, 0.0, 1.0).unwrap(), 1.0);
        assert!((evaluate(&f, 0.0, 0.5).unwrap() + 0.5).abs() < 1e-15);
        assert!((evaluate(&f, 0.0, -0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        let f = fixture(2.0);
        assert_eq!(evaluate(&f, 0.0, 0.0), Err(MapError::Singular));
        assert!(matches!(
            evaluate(&f, 0.2, 0.5),
            Err(MapError::NoiseOutOfRange { .. })
        ));
        assert!(matches!(
            derivative(&f, 0.0, 1.5),
            Err(MapError::OutOfDomain(_))
        ));
        assert_eq!(schwarzian(&f, 0.0, 0.0), Err(MapError::Singular));
    }

    #[test]
    fn derivative_examples() {
        let f = fixture(2.0);
        assert!((derivative(&f, 0.0, 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!((derivative(&f, 0.0, 1.0).unwrap() - 4.0).abs() < 1e-15);
        for x in [1e-3, 1e-6, 1e-9] {
            assert!((derivative(&f, 0.0, x).unwrap() / x - 4.0).abs() < 1e-12);
            assert!((derivative(&f, 0.0, -x).unwrap() / x - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn schwarzian_examples() {
        let f2 = fixture(2.0);
        assert!((schwarzian(&f2, 0.0, 0.5).unwrap() + 6.0).abs() < 1e-12);
        assert!((schwarzian(&f2, 0.0, -0.5).unwrap() + 6.0).abs() < 1e-12);
        let f3 = fixture(3.0);
        assert!((schwarzian(&f3, 0.0, 1.0).unwrap() + 4.0).abs() < 1e-12);
    }

    #[test]
    fn schwarzian_matches_finite_difference_composition() {
        // D(D²T/DT) by central differences of the exact ratio.
        let f = fixture(2.5);
        for &x in &[-0.8, -0.3, 0.2, 0.7] {
            let ratio =
                |x: f64| second_derivative(&f, 0.03, x).unwrap() / derivative(&f, 0.03, x).unwrap();
            let h = 1e-5;
            let d_ratio = (ratio(x + h) - ratio(x - h)) / (2.0 * h);
            let fd = d_ratio - 0.5 * ratio(x) * ratio(x);
            let exact = schwarzian(&f, 0.03, x).unwrap();
            assert!(
                ((fd - exact) / exact).abs() < 1e-6,
                "x={x}: {fd} vs {exact}"
            );
        }
    }

    #[test]
    fn tilde_b_fixture() {
        let f = fixture(2.0);
        let nb = tilde_b(&f, 0.0, 0.1).unwrap();
        let a = 0.05f64.sqrt();
        assert!((nb.pos.hi - a).abs() < 1e-12);
        assert!((nb.neg.lo + a).abs() < 1e-12);
        assert!((nb.measure() - 0.447_213_595_5).abs() < 1e-9);
        assert!((nb.d_ratio - 0.447_213_595_5).abs() < 1e-9);
        assert!((evaluate(&f, 0.0, nb.pos.hi).unwrap() - (-0.9)).abs() < 1e-10);
        assert!((evaluate(&f, 0.0, nb.neg.lo).unwrap() - 0.9).abs() < 1e-10);
        assert!(nb.contains(0.1) && nb.contains(-0.1) && !nb.contains(0.0) && !nb.contains(0.3));
    }

    #[test]
    fn tilde_b_shrinks_with_delta() {
        let f = fixture(2.0);
        let mut prev = f64::INFINITY;
        for delta in [0.5, 0.1, 1e-2, 1e-4, 1e-8] {
            let m = tilde_b(&f, 0.0, delta).unwrap().measure();
            assert!(m < prev);
            prev = m;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn tilde_b_too_large() {
        let f = fixture(2.0);
        assert!(matches!(
            tilde_b(&f, 0.0, 2.0),
            Err(MapError::DeltaTooLarge { .. })
        ));
        // T_t(1) = 1 - |t| shrinks the admissible range.
        assert!(matches!(
            tilde_b(&f, 0.1, 1.95),
            Err(MapError::DeltaTooLarge { .. })
        ));
    }
}
