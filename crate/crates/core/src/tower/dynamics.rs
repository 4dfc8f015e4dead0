//! The tower map over a noise realization.
//!
//! A return from epoch `e` with time `τ` lands in the base at epoch `e + τ`,
//! whose partition is built for `σ^{e+τ} ω`. Partitions are built on demand
//! and cached per epoch.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{build_return_partition, ReturnPartition, TowerConfig};
use crate::map::MapFamily;
use crate::noise::NoiseStream;
use crate::orbit::OrbitError;

/// A point `(x, ℓ)` of the tower: `x` lies in `element` of the partition at
/// `epoch`, and the projection is `T_{σ^epoch ω}^ℓ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowerState {
    pub epoch: i64,
    pub element: usize,
    pub level: usize,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TowerError {
    #[error("invalid tower state: {0}")]
    InvalidState(String),
    /// The return image fell in the part of the base no element covers.
    #[error("return to {y} at epoch {epoch} lands outside every element")]
    Uncovered { epoch: i64, y: f64 },
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

pub struct Tower<'a, M: MapFamily + ?Sized> {
    family: &'a M,
    stream: NoiseStream,
    cfg: TowerConfig,
    cache: RwLock<HashMap<i64, Arc<ReturnPartition>>>,
}

impl<'a, M: MapFamily + ?Sized + Sync> Tower<'a, M> {
    pub fn new(family: &'a M, stream: NoiseStream, cfg: TowerConfig) -> Self {
        Tower { family, stream, cfg, cache: RwLock::new(HashMap::new()) }
    }

    pub fn family(&self) -> &'a M {
        self.family
    }

    pub fn stream(&self) -> &NoiseStream {
        &self.stream
    }

    pub fn config(&self) -> &TowerConfig {
        &self.cfg
    }

    /// Seeds the cache, e.g. with a partition built elsewhere for epoch 0.
    pub fn insert(&self, epoch: i64, partition: ReturnPartition) {
        self.cache.write().unwrap().insert(epoch, Arc::new(partition));
    }

    pub fn cached_epochs(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    /// Partition for `σ^epoch ω`.
    pub fn partition(&self, epoch: i64) -> Result<Arc<ReturnPartition>, OrbitError> {
        if let Some(p) = self.cache.read().unwrap().get(&epoch) {
            return Ok(p.clone());
        }
        let p = Arc::new(build_return_partition(self.family, &self.stream.shift(epoch), &self.cfg)?);
        Ok(self.cache.write().unwrap().entry(epoch).or_insert(p).clone())
    }

    /// Lifts a base point at `epoch` to level 0.
    pub fn lift(&self, epoch: i64, x: f64) -> Result<TowerState, TowerError> {
        let p = self.partition(epoch)?;
        let element = p.locate(x).ok_or(TowerError::Uncovered { epoch, y: x })?;
        Ok(TowerState { epoch, element, level: 0, x })
    }

    fn check(&self, p: &ReturnPartition, state: &TowerState) -> Result<(), TowerError> {
        let e = p
            .elements
            .get(state.element)
            .ok_or_else(|| TowerError::InvalidState(format!("no element {}", state.element)))?;
        if state.level >= e.tau {
            return Err(TowerError::InvalidState(format!("level {} >= tau {}", state.level, e.tau)));
        }
        if !e.interval.contains(state.x) {
            return Err(TowerError::InvalidState(format!("x = {} outside its element", state.x)));
        }
        Ok(())
    }

    /// `F_ω`: climb one level, or return to the base after `τ` steps.
    pub fn step(&self, state: &TowerState) -> Result<TowerState, TowerError> {
        let p = self.partition(state.epoch)?;
        self.check(&p, state)?;
        let tau = p.elements[state.element].tau;
        if state.level + 1 < tau {
            return Ok(TowerState { level: state.level + 1, ..*state });
        }
        let y = p.return_map(self.family, state.element, state.x).clamp(p.base.lo, p.base.hi);
        self.lift(state.epoch + tau as i64, y)
    }

    /// Projection `π(x, ℓ) = T_{σ^epoch ω}^ℓ(x)` to the interval.
    pub fn project(&self, state: &TowerState) -> Result<f64, TowerError> {
        let p = self.partition(state.epoch)?;
        self.check(&p, state)?;
        Ok(p.eval_prefix(self.family, &p.elements[state.element], state.x, state.level))
    }

    /// Separation time of two base points at `epoch`, counted in steps of
    /// `T_ω`: the time of the first return after which they lie in different
    /// elements. `None` if it exceeds `cap` or one of the orbits leaves the
    /// covered part of the base before separating.
    pub fn separation_time(&self, epoch: i64, x: f64, y: f64, cap: usize) -> Result<Option<usize>, OrbitError> {
        let (mut e, mut x, mut y, mut elapsed) = (epoch, x, y, 0usize);
        loop {
            let p = self.partition(e)?;
            let (i, j) = match (p.locate(x), p.locate(y)) {
                (Some(i), Some(j)) => (i, j),
                _ => return Ok(None),
            };
            if i != j {
                return Ok(Some(elapsed));
            }
            let tau = p.elements[i].tau;
            elapsed += tau;
            if elapsed > cap {
                return Ok(None);
            }
            x = p.return_map(self.family, i, x).clamp(p.base.lo, p.base.hi);
            y = p.return_map(self.family, i, y).clamp(p.base.lo, p.base.hi);
            e += tau as i64;
        }
    }

    /// Same quantity through `ŝ_ω(x, y) = τ(x) + ŝ_{σ^τ ω}(F^τ x, F^τ y)`.
    pub fn separation_time_recursive(
        &self,
        epoch: i64,
        x: f64,
        y: f64,
        cap: usize,
    ) -> Result<Option<usize>, OrbitError> {
        let p = self.partition(epoch)?;
        let (i, j) = match (p.locate(x), p.locate(y)) {
            (Some(i), Some(j)) => (i, j),
            _ => return Ok(None),
        };
        if i != j {
            return Ok(Some(0));
        }
        let tau = p.elements[i].tau;
        if tau > cap {
            return Ok(None);
        }
        let fx = p.return_map(self.family, i, x).clamp(p.base.lo, p.base.hi);
        let fy = p.return_map(self.family, i, y).clamp(p.base.lo, p.base.hi);
        Ok(self.separation_time_recursive(epoch + tau as i64, fx, fy, cap - tau)?.map(|s| s + tau))
    }
}

/// Single step against a fixed partition, for callers that manage epochs
/// themselves. Returns the image at level 0 with `element` unresolved
/// (`usize::MAX`) when the step is a return.
pub fn tower_step<M: MapFamily + ?Sized>(
    family: &M,
    partition: &ReturnPartition,
    state: &TowerState,
) -> Result<TowerState, TowerError> {
    let e = partition
        .elements
        .get(state.element)
        .ok_or_else(|| TowerError::InvalidState(format!("no element {}", state.element)))?;
    if state.level >= e.tau || !e.interval.contains(state.x) {
        return Err(TowerError::InvalidState(format!("{state:?}")));
    }
    if state.level + 1 < e.tau {
        return Ok(TowerState { level: state.level + 1, ..*state });
    }
    let y = partition.return_map(family, state.element, state.x);
    Ok(TowerState { epoch: state.epoch + e.tau as i64, element: usize::MAX, level: 0, x: y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{value_unchecked, PowerFixture};

    fn cfg() -> TowerConfig {
        TowerConfig { n_max: 12, seed_grid: 256, ..TowerConfig::default() }
    }

    #[test]
    fn climb_then_return() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let tower = Tower::new(&f, NoiseStream::new(3, 0.01), cfg());
        let p = tower.partition(0).unwrap();
        let (i, e) = p.elements.iter().enumerate().find(|(_, e)| e.tau >= 2).unwrap();
        let s = TowerState { epoch: 0, element: i, level: 0, x: e.interval.mid() };
        let up = tower.step(&s).unwrap();
        assert_eq!((up.level, up.x, up.epoch), (1, s.x, 0));
        let top = TowerState { level: e.tau - 1, ..s };
        match tower.step(&top) {
            Ok(next) => assert_eq!((next.level, next.epoch), (0, e.tau as i64)),
            Err(TowerError::Uncovered { .. }) => {}
            Err(other) => panic!("{other}"),
        }
        assert!(matches!(tower.step(&TowerState { level: e.tau, ..s }), Err(TowerError::InvalidState(_))));
    }

    #[test]
    fn projection_follows_direct_orbit() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let stream = NoiseStream::new(3, 0.01);
        let tower = Tower::new(&f, stream, cfg());
        let p = tower.partition(0).unwrap();
        let mut state = TowerState { epoch: 0, element: 0, level: 0, x: p.elements[0].interval.mid() };
        let mut x = state.x;
        for n in 0..20 {
            assert!((tower.project(&state).unwrap() - x).abs() <= 1e-8, "step {n}");
            state = match tower.step(&state) {
                Ok(s) => s,
                Err(TowerError::Uncovered { .. }) => break,
                Err(e) => panic!("{e}"),
            };
            x = value_unchecked(&f, stream.get(n as i64), x);
        }
    }

    #[test]
    fn separation_forms_agree() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let tower = Tower::new(&f, NoiseStream::new(3, 0.01), cfg());
        let p = tower.partition(0).unwrap();
        for e in p.elements.iter().take(6) {
            let (a, b) = (e.interval.lo + 0.3 * e.interval.len(), e.interval.lo + 0.31 * e.interval.len());
            let it = tower.separation_time(0, a, b, 40).unwrap();
            let rec = tower.separation_time_recursive(0, a, b, 40).unwrap();
            assert_eq!(it, rec);
            if let Some(s) = it {
                assert!(s >= e.tau);
            }
        }
    }
}
