//! Simulation and verification toolkit for random perturbations of contracting
//! Lorenz interval maps.
//!
//! The crate is organised bottom-up:
//!
//! * [`map`]: admissible one-parameter families `T_t` on `I = [-1, 1]` with a
//!   singularity of order `s > 1` at the origin, their derivatives, the
//!   critical neighborhoods `B̃(δ)` and numerical condition checks.
//! * [`noise`]: counter-based, two-sided i.i.d. noise sequences `ω`.
//! * [`orbit`]: random orbits with log-domain derivative bookkeeping, return
//!   depths and exact branch (cylinder) structure of `T_ω^n`.
//! * [`hyperbolic`]: Pliss times, hyperbolic (return) times, bad sets,
//!   binding periods, `V_{x,n}` neighborhoods and ensemble tail statistics.
//! * [`tower`]: the return partition over the base interval, the tower map
//!   and a numeric certifier for the tower axioms.
//! * [`measures`]: Ulam discretisation, equivariant sample densities and the
//!   quenched correlation estimators, plus exponential fits.

pub mod hyperbolic;
pub mod map;
pub mod measures;
pub mod noise;
pub mod numerics;
pub mod orbit;
pub mod tower;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use hyperbolic::{HyperbolicConfig, HyperbolicReport};
pub use tower::{AxiomReport, ReturnPartition, TowerConfig, TowerState};
pub use map::{
    CriticalNeighborhoods, Family, MapError, MapFamily, PowerFixture, Side, TabulatedFamily,
};
pub use measures::{CorrelationSeries, DensityVector, ExpFit, Grid};
pub use noise::NoiseStream;
pub use orbit::{BranchPartition, OrbitError, OrbitTrace};

/// A closed or open real interval `[lo, hi]` with `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Self {
        if a <= b {
            Interval { lo: a, hi: b }
        } else {
            Interval { lo: b, hi: a }
        }
    }

    /// Ball `B(center, radius)`.
    pub fn ball(center: f64, radius: f64) -> Self {
        Interval {
            lo: center - radius,
            hi: center + radius,
        }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo < hi).then_some(Interval { lo, hi })
    }

    /// True when the open interiors overlap.
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }
}
