//! Random return partitions and the induced tower.
//!
//! The base is the interval hull of `B̃(δ′)` for the unperturbed map, so that
//! every hyperbolic return lands in it. Elements are intervals `J` on one side
//! of 0 such that `T_ω^τ` maps `J` increasingly onto the base. They are
//! collected greedily by increasing `τ`: at each level every uncovered seed
//! with a hyperbolic return at time `k` proposes the preimage of the base in
//! its `k`-cylinder, and proposals that meet earlier elements or the boundary
//! set are dropped.

mod axioms;
mod dynamics;

pub use axioms::{
    certify_axioms, AperiodicCheck, AxiomReport, CertifyOptions, DistortionCheck, ExpansionCheck,
    MarkovCheck, ReturnCheck, TailCheck,
};
pub use dynamics::{tower_step, Tower, TowerError, TowerState};

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hyperbolic::{hyperbolic_times, HyperbolicConfig};
use crate::map::{derivative_unchecked, tilde_b, value_on, MapError, MapFamily};
use crate::noise::NoiseStream;
use crate::numerics::gcd;
use crate::orbit::{BranchId, Cylinder, OrbitEngine, OrbitError, OrbitTrace};
use crate::Interval;

/// Largest endpoint residual `|T^τ(∂J) - ∂base|` an element may have.
pub const MARKOV_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowerConfig {
    pub hyperbolic: HyperbolicConfig,
    /// Largest return time considered by the greedy construction.
    pub n_max: usize,
    /// Log-spaced seeds per side of 0.
    pub seed_grid: usize,
    /// Extra seeds placed in every uncovered gap before each level.
    pub gap_seeds: usize,
    /// Distance to the boundary set below which a proposal is rejected.
    pub margin: f64,
    /// Largest return time scanned for the aperiodicity elements.
    pub aperiodic_scan: usize,
}

impl Default for TowerConfig {
    fn default() -> Self {
        TowerConfig {
            hyperbolic: HyperbolicConfig::default(),
            n_max: 25,
            seed_grid: 4096,
            gap_seeds: 3,
            margin: 1e-9,
            aperiodic_scan: 30,
        }
    }
}

impl TowerConfig {
    /// `δ′ = δ_0 / 2`.
    pub fn delta_prime(&self) -> f64 {
        0.5 * self.hyperbolic.delta0
    }
}

/// One partition element `J` with `T_ω^τ(J) = base`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub interval: Interval,
    pub tau: usize,
    pub branch: BranchId,
    /// One of the aperiodicity elements admitted before the greedy pass.
    pub seeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPartition {
    pub base: Interval,
    pub delta_prime: f64,
    /// Elements sorted by left endpoint.
    pub elements: Vec<Element>,
    /// Largest return time present or considered.
    pub horizon: usize,
    /// `|base \ ⋃ J|`.
    pub uncovered: f64,
    /// Noise `ω_0, ω_1, …` the elements were built from.
    pub noise: Vec<f64>,
}

impl ReturnPartition {
    pub fn seeded(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(|e| e.seeded)
    }

    /// `T_ω^τ` along the element's branch.
    pub fn return_map<M: MapFamily + ?Sized>(&self, family: &M, element: usize, x: f64) -> f64 {
        let e = &self.elements[element];
        self.eval_prefix(family, e, x, e.tau)
    }

    /// `T_ω^k` along the element's branch for `k <= τ`.
    pub fn eval_prefix<M: MapFamily + ?Sized>(&self, family: &M, e: &Element, x: f64, k: usize) -> f64 {
        (0..k).fold(x, |y, j| value_on(family, e.branch.side(j), self.noise[j], y))
    }

    /// Index of the element containing `x`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let i = self.elements.partition_point(|e| e.interval.hi < x);
        self.elements.get(i).filter(|e| e.interval.contains(x)).map(|_| i)
    }

    /// `|base| - Σ_{τ <= n} |J|`.
    pub fn tail_measure(&self, n: usize) -> f64 {
        let covered: f64 = self.elements.iter().filter(|e| e.tau <= n).map(|e| e.interval.len()).sum();
        (self.base.len() - covered).max(0.0)
    }

    /// `max(|T^τ(J.lo) - base.lo|, |T^τ(J.hi) - base.hi|)`.
    pub fn markov_residual<M: MapFamily + ?Sized>(&self, family: &M, element: usize) -> f64 {
        let e = &self.elements[element];
        let lo = self.return_map(family, element, e.interval.lo);
        let hi = self.return_map(family, element, e.interval.hi);
        (lo - self.base.lo).abs().max((hi - self.base.hi).abs())
    }

    /// `log DT_ω^τ(x)` along element `i`.
    pub fn log_derivative<M: MapFamily + ?Sized>(&self, family: &M, i: usize, x: f64) -> f64 {
        let e = &self.elements[i];
        let mut y = x;
        let mut acc = 0.0;
        for j in 0..e.tau {
            let t = self.noise[j];
            acc += derivative_unchecked(family, t, y).ln();
            y = value_on(family, e.branch.side(j), t, y);
        }
        acc
    }

    pub(crate) fn cylinder<M: MapFamily + ?Sized>(&self, family: &M, i: usize) -> Option<Cylinder> {
        let e = &self.elements[i];
        Cylinder::new(family, e.branch, self.noise[..e.tau].to_vec())
    }

    /// Independent re-check of element `i`: inside the base, increasing on
    /// a sample grid, and endpoints onto the base ends within `MARKOV_TOL`.
    pub fn verify_markov<M: MapFamily + ?Sized>(&self, family: &M, i: usize) -> bool {
        let j = self.elements[i].interval;
        let values: Vec<f64> = (0..=32).map(|k| self.return_map(family, i, j.lo + j.len() * k as f64 / 32.0)).collect();
        self.base.contains_interval(&j)
            && values.windows(2).all(|w| w[0] < w[1])
            && self.markov_residual(family, i) <= MARKOV_TOL
    }

    pub fn gcd_of_times(&self) -> u64 {
        self.elements.iter().fold(0, |g, e| gcd(g, e.tau as u64))
    }
}

/// Base interval: hull of `B̃(δ′)` for `T_0`.
pub fn base_interval<M: MapFamily + ?Sized>(family: &M, delta_prime: f64) -> Result<Interval, MapError> {
    let nb = tilde_b(family, 0.0, delta_prime)?;
    Ok(Interval { lo: nb.neg.lo, hi: nb.pos.hi })
}

struct Seed {
    trace: OrbitTrace,
    returns: Vec<usize>,
}

struct Builder<'a, M: MapFamily + ?Sized> {
    family: &'a M,
    cfg: TowerConfig,
    engine: OrbitEngine<'a, M>,
    base: Interval,
    noise: Vec<f64>,
    stream: NoiseStream,
    trace_len: usize,
}

impl<'a, M: MapFamily + ?Sized> Builder<'a, M> {
    fn seed(&self, x: f64) -> Option<Seed> {
        let trace = self.engine.iterate(&self.stream, x, self.trace_len).ok()?;
        let times = hyperbolic_times(&trace.depths, self.cfg.hyperbolic.c_prime);
        let returns = times.into_iter().filter(|&n| self.base.contains(trace.points[n])).collect();
        Some(Seed { trace, returns })
    }

    fn seeds(&self, xs: &[f64]) -> Vec<Seed> {
        xs.par_iter().filter_map(|&x| self.seed(x)).collect()
    }

    /// Preimage of the base in the `k`-cylinder of the seed, if the branch
    /// covers the base and the preimage stays clear of the boundary set.
    fn proposal(&self, id: BranchId) -> Option<Element> {
        let k = id.len as usize;
        let cyl = Cylinder::new(self.family, id, self.noise[..k].to_vec())?;
        if cyl.image.lo > self.base.lo || cyl.image.hi < self.base.hi {
            return None;
        }
        let j = cyl.preimage(self.family, self.base)?;
        let m = self.cfg.margin;
        let inside = j.lo >= self.base.lo + m && j.hi <= self.base.hi - m;
        let clear_of_zero = j.lo >= m || j.hi <= -m;
        if !(inside && clear_of_zero) {
            return None;
        }
        // Very short elements can miss the base endpoints by more than the
        // tolerance at float resolution; those are dropped.
        let residual = (cyl.eval(self.family, j.lo) - self.base.lo)
            .abs()
            .max((cyl.eval(self.family, j.hi) - self.base.hi).abs());
        (residual <= MARKOV_TOL).then_some(Element { interval: j, tau: k, branch: id, seeded: false })
    }

    fn proposals_at(&self, seeds: &[Seed], k: usize, admitted: &Admitted) -> Vec<Element> {
        let mut ids: Vec<BranchId> = seeds
            .iter()
            .filter(|s| s.returns.binary_search(&k).is_ok())
            .filter(|s| !admitted.covers(s.trace.x0))
            .map(|s| BranchId::from_points(&s.trace.points[..k]))
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        ids.sort();
        let mut out: Vec<Element> = ids.par_iter().filter_map(|&id| self.proposal(id)).collect();
        out.sort_by(|a, b| a.interval.lo.total_cmp(&b.interval.lo));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Admitted elements keyed by left endpoint.
#[derive(Default)]
struct Admitted(BTreeMap<Key, Element>);

impl Admitted {
    fn last_at_or_before(&self, x: f64) -> Option<&Element> {
        self.0.range(..=Key(x)).next_back().map(|(_, e)| e)
    }

    fn covers(&self, x: f64) -> bool {
        self.last_at_or_before(x).is_some_and(|e| e.interval.contains(x))
    }

    fn is_free(&self, j: &Interval) -> bool {
        let before = self.last_at_or_before(j.lo).map_or(true, |e| e.interval.hi < j.lo);
        let after = self.0.range(Key(j.lo)..).next().map_or(true, |(_, e)| j.hi < e.interval.lo);
        before && after
    }

    /// Inserts `e` if it is disjoint from everything admitted so far.
    fn admit(&mut self, e: Element) -> bool {
        let free = self.is_free(&e.interval);
        if free {
            self.0.insert(Key(e.interval.lo), e);
        }
        free
    }

    fn intervals(&self) -> impl Iterator<Item = &Interval> {
        self.0.values().map(|e| &e.interval)
    }
}

fn disjoint(admitted: &[Element], j: &Interval) -> bool {
    admitted.iter().all(|e| e.interval.hi < j.lo || j.hi < e.interval.lo)
}

/// Picks up to four pairwise disjoint elements whose return times have
/// gcd 1, preferring a consecutive pair `{t, t + 1}` with the smallest `t`.
/// Levels are produced on demand by `level(k)` for `k = 1..=scan`.
fn aperiodic_elements(scan: usize, mut level: impl FnMut(usize) -> Vec<Element>) -> Vec<Element> {
    let g = |c: &[Element]| c.iter().fold(0, |g, e| gcd(g, e.tau as u64));
    let mut levels: Vec<Vec<Element>> = vec![Vec::new()];
    let mut chosen: Vec<Element> = Vec::new();
    for k in 1..=scan {
        levels.push(level(k));
        if chosen.is_empty() && k >= 2 {
            'pair: for a in &levels[k - 1] {
                for b in &levels[k] {
                    if a.interval.hi < b.interval.lo || b.interval.hi < a.interval.lo {
                        chosen = vec![*a, *b];
                        break 'pair;
                    }
                }
            }
        }
        if chosen.is_empty() {
            continue;
        }
        for e in levels.iter().flatten() {
            if chosen.len() >= 4 {
                break;
            }
            let g0 = g(&chosen);
            let useful = g0 <= 1 || gcd(g0, e.tau as u64) < g0;
            if useful && disjoint(&chosen, &e.interval) && !chosen.iter().any(|c| c.branch == e.branch) {
                chosen.push(*e);
            }
        }
        if chosen.len() >= 4 {
            break;
        }
    }
    if chosen.is_empty() {
        // No consecutive pair: settle for whatever lowers the gcd.
        for e in levels.iter().flatten() {
            let g0 = g(&chosen);
            if chosen.len() < 4 && (g0 == 0 || gcd(g0, e.tau as u64) < g0) && disjoint(&chosen, &e.interval) {
                chosen.push(*e);
            }
        }
    }
    chosen.iter_mut().for_each(|e| e.seeded = true);
    chosen
}

/// Builds the return partition for the noise realization `stream`.
pub fn build_return_partition<M: MapFamily + ?Sized>(
    family: &M,
    stream: &NoiseStream,
    cfg: &TowerConfig,
) -> Result<ReturnPartition, OrbitError> {
    let n_max = cfg.n_max.min(63);
    let scan = cfg.aperiodic_scan.min(63);
    let trace_len = n_max.max(scan);
    let base = base_interval(family, cfg.delta_prime())?;
    let builder = Builder {
        family,
        cfg: *cfg,
        engine: OrbitEngine::new(family, cfg.hyperbolic.delta)?,
        base,
        noise: stream.window(0, trace_len),
        stream: *stream,
        trace_len,
    };

    // Log-spaced seeds over six decades on each side of 0.
    let grid = cfg.seed_grid.max(1);
    let mut xs = Vec::with_capacity(2 * grid);
    for (side, edge) in [(-1.0, -base.lo), (1.0, base.hi)] {
        for i in 0..grid {
            let u = (i as f64 + 0.5) / grid as f64;
            xs.push(side * edge * (-u * 6.0 * std::f64::consts::LN_10).exp());
        }
    }
    let mut seeds = builder.seeds(&xs);

    // Aperiodicity elements from the initial seeds.
    let mut admitted = Admitted::default();
    let empty = Admitted::default();
    for e in aperiodic_elements(scan, |k| builder.proposals_at(&seeds, k, &empty)) {
        admitted.admit(e);
    }

    for k in 1..=n_max {
        if cfg.gap_seeds > 0 && k > 1 {
            let extra = gap_points(&base, &admitted, cfg.gap_seeds, cfg.margin);
            seeds.retain(|s| !admitted.covers(s.trace.x0));
            seeds.extend(builder.seeds(&extra));
        }
        for e in builder.proposals_at(&seeds, k, &admitted) {
            admitted.admit(e);
        }
    }

    let admitted: Vec<Element> = admitted.0.into_values().collect();
    let horizon = admitted.iter().map(|e| e.tau).max().unwrap_or(0).max(n_max);
    let covered_len: f64 = admitted.iter().map(|e| e.interval.len()).sum();
    Ok(ReturnPartition {
        base,
        delta_prime: cfg.delta_prime(),
        uncovered: (base.len() - covered_len).max(0.0),
        elements: admitted,
        horizon,
        noise: builder.noise,
    })
}

/// `per_gap` evenly spaced points in every uncovered gap of the base.
fn gap_points(base: &Interval, admitted: &Admitted, per_gap: usize, margin: f64) -> Vec<f64> {
    let mut gaps = Vec::new();
    let mut cursor = base.lo;
    for j in admitted.intervals() {
        if j.lo > cursor {
            gaps.push(Interval { lo: cursor, hi: j.lo });
        }
        cursor = cursor.max(j.hi);
    }
    if cursor < base.hi {
        gaps.push(Interval { lo: cursor, hi: base.hi });
    }
    let mut out = Vec::new();
    for g in gaps {
        // Split the gap at 0 so each side gets its own seeds.
        let parts = if g.lo < 0.0 && g.hi > 0.0 {
            vec![Interval { lo: g.lo, hi: 0.0 }, Interval { lo: 0.0, hi: g.hi }]
        } else {
            vec![g]
        };
        for p in parts {
            if p.len() <= 4.0 * margin {
                continue;
            }
            for i in 0..per_gap {
                let x = p.lo + p.len() * (i as f64 + 1.0) / (per_gap as f64 + 1.0);
                if x != 0.0 {
                    out.push(x);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::PowerFixture;

    fn fixture() -> PowerFixture {
        PowerFixture::new(2.0, 0.1).unwrap()
    }

    fn small_cfg(n_max: usize) -> TowerConfig {
        TowerConfig { n_max, seed_grid: 512, ..TowerConfig::default() }
    }

    #[test]
    fn base_is_hull_of_critical_neighborhood() {
        let b = base_interval(&fixture(), 0.05).unwrap();
        // 2x² - 1 = -1 + 0.05 gives x = sqrt(0.025).
        assert!((b.hi - 0.025f64.sqrt()).abs() < 1e-12 && (b.lo + 0.025f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn elements_are_disjoint_and_markov() {
        let f = fixture();
        let p = build_return_partition(&f, &NoiseStream::new(1, 0.01), &small_cfg(12)).unwrap();
        assert!(!p.elements.is_empty());
        for w in p.elements.windows(2) {
            assert!(w[0].interval.hi < w[1].interval.lo);
        }
        for (i, e) in p.elements.iter().enumerate() {
            assert!(p.base.contains_interval(&e.interval) && e.tau >= 1);
            assert!(p.verify_markov(&f, i), "element {i}: {}", p.markov_residual(&f, i));
        }
        assert_eq!(p.gcd_of_times(), 1);
        assert!((p.tail_measure(0) - p.base.len()).abs() < 1e-15 || p.seeded().any(|e| e.tau == 0));
        assert!((p.tail_measure(p.horizon) - p.uncovered).abs() < 1e-12);
    }

    #[test]
    fn tiny_horizon_keeps_only_seeded() {
        let f = fixture();
        let p = build_return_partition(&f, &NoiseStream::new(1, 0.01), &small_cfg(0)).unwrap();
        assert!(p.elements.iter().all(|e| e.seeded));
    }
}
