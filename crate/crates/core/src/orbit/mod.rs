//! Random orbits `x_i = T_ω^i(x_0)` with derivative bookkeeping.
//!
//! Derivatives are accumulated as cumulative sums of `log DT_{σ^j ω}(x_j)`,
//! so `DT_ω^n(x_0) = exp(log_der[n])` and the cocycle identity becomes a
//! difference of two entries.
//!
//! `A(ω, x, n) = Σ_{i<n} DT_ω^i(x) / |T_ω^i(x)|` is implemented literally; with
//! `DT^0 = 1` its first term is `1/|x|` (not 1).

mod branch;

pub use branch::{
    branch_partition, cylinder_of, preimage_in_branch, Branch, BranchId, BranchPartition, Cylinder,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::{
    derivative_unchecked, tilde_b, value_unchecked, CriticalNeighborhoods, MapError, MapFamily,
};
use crate::noise::NoiseStream;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrbitError {
    #[error("orbit of x0 = {x0} hit the singularity exactly at step {step}")]
    SingularHit { x0: f64, step: usize },
    #[error("branch partition depth {n} exceeds cap {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("target interval does not meet the branch image")]
    EmptyIntersection,
    #[error(transparent)]
    Map(#[from] MapError),
}

/// A random orbit with per-step bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrace {
    pub x0: f64,
    /// `x_0, …, x_n`.
    pub points: Vec<f64>,
    /// `log_der[i] = Σ_{j<i} log DT_{σ^j ω}(x_j)`, `i = 0..=n`.
    pub log_der: Vec<f64>,
    /// `r_δ(σ^i ω, x_i)` for `i < n`.
    pub depths: Vec<u32>,
    /// `x_i ∈ B̃(δ)` for `i = 0..=n`.
    pub visits: Vec<bool>,
    pub delta: f64,
}

impl OrbitTrace {
    /// Number of steps `n`.
    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    /// `log DT_{σ^k ω}^{m-k}(x_k)` for `k <= m <= n`.
    pub fn log_derivative(&self, k: usize, m: usize) -> f64 {
        self.log_der[m] - self.log_der[k]
    }

    /// Sum of depths over `[k, m)`.
    pub fn depth_sum(&self, k: usize, m: usize) -> u64 {
        self.depths[k..m].iter().map(|&r| r as u64).sum()
    }
}

/// Least `r ∈ {0, 1, 2, …}` with `p >= e^{-r} δ`, where `p = DT(x)·|x| > 0`.
#[inline]
pub fn depth_from_product(p: f64, delta: f64) -> u32 {
    if p >= delta {
        return 0;
    }
    let mut r = (delta / p).ln().ceil().max(0.0) as u32;
    while p < (-(r as f64)).exp() * delta {
        r += 1;
    }
    while r > 0 && p >= (-((r - 1) as f64)).exp() * delta {
        r -= 1;
    }
    r
}

/// Return depth `r_δ(x)` of the point `x` under `T_t`.
pub fn return_depth<M: MapFamily + ?Sized>(
    family: &M,
    t: f64,
    x: f64,
    delta: f64,
) -> Result<u32, MapError> {
    let d = crate::map::derivative(family, t, x)?;
    if !(delta > 0.0) {
        return Err(MapError::DeltaTooLarge { delta, limit: 0.0 });
    }
    Ok(depth_from_product(d * x.abs(), delta))
}

/// Orbit generator bound to a family and a depth scale `δ`, with `B̃(δ)` of
/// the unperturbed map precomputed.
#[derive(Debug, Clone)]
pub struct OrbitEngine<'a, M: MapFamily + ?Sized> {
    family: &'a M,
    delta: f64,
    neighborhoods: CriticalNeighborhoods,
}

impl<'a, M: MapFamily + ?Sized> OrbitEngine<'a, M> {
    pub fn new(family: &'a M, delta: f64) -> Result<Self, MapError> {
        let neighborhoods = tilde_b(family, 0.0, delta)?;
        Ok(OrbitEngine {
            family,
            delta,
            neighborhoods,
        })
    }

    pub fn family(&self) -> &'a M {
        self.family
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn neighborhoods(&self) -> &CriticalNeighborhoods {
        &self.neighborhoods
    }

    pub fn iterate(
        &self,
        stream: &NoiseStream,
        x0: f64,
        n: usize,
    ) -> Result<OrbitTrace, OrbitError> {
        if x0 == 0.0 {
            return Err(OrbitError::SingularHit { x0, step: 0 });
        }
        if !(-1.0..=1.0).contains(&x0) {
            return Err(MapError::OutOfDomain(x0).into());
        }
        let omega = stream.window(0, n);
        if let Some(&t) = omega.iter().find(|t| t.abs() > self.family.eps_max()) {
            return Err(MapError::NoiseOutOfRange {
                t,
                eps_max: self.family.eps_max(),
            }
            .into());
        }
        let mut points = Vec::with_capacity(n + 1);
        let mut log_der = Vec::with_capacity(n + 1);
        let mut depths = Vec::with_capacity(n);
        let mut visits = Vec::with_capacity(n + 1);
        let mut x = x0;
        let mut acc = 0.0;
        points.push(x);
        log_der.push(acc);
        for (i, &t) in omega.iter().enumerate() {
            if x == 0.0 {
                return Err(OrbitError::SingularHit { x0, step: i });
            }
            let d = derivative_unchecked(self.family, t, x);
            depths.push(depth_from_product(d * x.abs(), self.delta));
            visits.push(self.neighborhoods.contains(x));
            acc += d.ln();
            x = value_unchecked(self.family, t, x);
            points.push(x);
            log_der.push(acc);
        }
        if x == 0.0 {
            return Err(OrbitError::SingularHit { x0, step: n });
        }
        visits.push(self.neighborhoods.contains(x));
        Ok(OrbitTrace {
            x0,
            points,
            log_der,
            depths,
            visits,
            delta: self.delta,
        })
    }
}

/// Generates `n` steps of the random orbit of `x0`.
pub fn iterate<M: MapFamily + ?Sized>(
    family: &M,
    stream: &NoiseStream,
    x0: f64,
    n: usize,
    delta: f64,
) -> Result<OrbitTrace, OrbitError> {
    OrbitEngine::new(family, delta)?.iterate(stream, x0, n)
}

/// `A(ω, x, n) = Σ_{i=0}^{n-1} DT_ω^i(x) / |T_ω^i(x)|`.
pub fn a_sum(trace: &OrbitTrace, n: usize) -> f64 {
    assert!(
        n <= trace.len(),
        "a_sum horizon {n} exceeds trace length {}",
        trace.len()
    );
    (0..n)
        .map(|i| trace.log_der[i].exp() / trace.points[i].abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::PowerFixture;

    fn fixture() -> PowerFixture {
        PowerFixture::new(2.0, 0.1).unwrap()
    }

    #[test]
    fn fixed_point_trace() {
        let f = fixture();
        let tr = iterate(&f, &NoiseStream::new(1, 0.0), 1.0, 5, 0.1).unwrap();
        assert!(tr.points.iter().all(|&x| x == 1.0));
        assert!((tr.log_der[5] - 5.0 * 4f64.ln()).abs() < 1e-12);
        assert_eq!(tr.log_der[0], 0.0);
        assert!((a_sum(&tr, 3) - 21.0).abs() < 1e-12);
    }

    #[test]
    fn one_step() {
        let f = fixture();
        let tr = iterate(&f, &NoiseStream::new(1, 0.0), 0.5, 2, 0.1).unwrap();
        assert!((tr.points[1] + 0.5).abs() < 1e-15);
        assert!((a_sum(&tr, 1) - 2.0).abs() < 1e-15);
        assert!((a_sum(&tr, 2) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn depth_examples() {
        let f = fixture();
        assert_eq!(return_depth(&f, 0.0, 0.5, 0.1).unwrap(), 0);
        assert_eq!(return_depth(&f, 0.0, 0.1, 0.5).unwrap(), 3);
        assert_eq!(return_depth(&f, 0.0, -0.1, 0.5).unwrap(), 3);
        // DT·|x| = 4x² = δ exactly at the boundary.
        assert_eq!(depth_from_product(0.25, 0.25), 0);
        assert!(return_depth(&f, 0.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn depth_is_least_admissible() {
        for &p in &[1e-9, 3.3e-5, 0.01, 0.099, 0.1, 0.7] {
            let r = depth_from_product(p, 0.1);
            assert!(p >= (-(r as f64)).exp() * 0.1);
            if r > 0 {
                assert!(p < (-((r - 1) as f64)).exp() * 0.1);
            }
        }
    }

    #[test]
    fn singular_start_rejected() {
        let f = fixture();
        assert!(matches!(
            iterate(&f, &NoiseStream::new(1, 0.0), 0.0, 3, 0.1),
            Err(OrbitError::SingularHit { step: 0, .. })
        ));
        // 1/√2 maps to 0 under the unperturbed fixture.
        let c = 0.5f64.sqrt();
        let x1 = value_unchecked(&f, 0.0, c);
        if x1 == 0.0 {
            assert!(matches!(
                iterate(&f, &NoiseStream::new(1, 0.0), c, 3, 0.1),
                Err(OrbitError::SingularHit { step: 1, .. })
            ));
        }
    }
}
