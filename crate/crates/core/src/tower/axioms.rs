//! Numeric certificates for the tower axioms (C1)–(C6).
//!
//! Each check is an estimate on sampled points, not a proof. Axioms that need
//! later epochs (separation times, refinements) build further partitions
//! through a [`Tower`] seeded with the given partition at epoch 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ReturnPartition, Tower, TowerConfig, MARKOV_TOL};
use crate::map::MapFamily;
use crate::measures::{fit_exponential_points, ExpFit};
use crate::noise::{task_rng, NoiseStream};
use crate::orbit::OrbitError;
use crate::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Pairs sampled for the distortion and separation checks.
    pub pairs: usize,
    /// Points whose refinement chains are followed for (C4).
    pub refine_samples: usize,
    pub refine_depth: usize,
    /// Separation times beyond this many steps are treated as unresolved.
    pub separation_cap: usize,
    /// Quantile of the distortion values taken in each separation bin
    /// (1 is the maximum).
    pub distortion_quantile: f64,
    /// Separation bins with fewer pairs are left out of the fit.
    pub min_bin: usize,
    /// Sample points per element for the monotonicity check.
    pub monotone_points: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            pairs: 16_000,
            refine_samples: 48,
            refine_depth: 10,
            separation_cap: 80,
            distortion_quantile: 0.9,
            min_bin: 10,
            monotone_points: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnCheck {
    /// `p_0 = min τ`.
    pub p0: usize,
    pub pairs_checked: usize,
    /// Pairs where the iterative and recursive separation times agree.
    pub pairs_consistent: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovCheck {
    pub elements: usize,
    pub monotone_failures: usize,
    pub max_residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionCheck {
    pub pairs: usize,
    /// Pairs whose images separate within the cap.
    pub resolved: usize,
    /// Fitted `D` in `|DT^τ(x) / DT^τ(y) - 1| <= D β^{ŝ(F x, F y)}`.
    pub d: f64,
    pub gamma: f64,
    /// `β = e^{-γ}`.
    pub beta: f64,
    /// Largest sampled Lipschitz ratio of `log DT^τ` in the image coordinate.
    pub lipschitz: f64,
    pub fit: Option<ExpFit>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCheck {
    /// Largest diameter of an `n`-fold refinement element, `n = 1, 2, …`.
    pub diameters: Vec<f64>,
    /// Sample chains that reached each depth.
    pub chains: Vec<usize>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub fit: Option<ExpFit>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AperiodicCheck {
    pub gcd: u64,
    pub seeded_times: Vec<usize>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub c1_return: ReturnCheck,
    pub c2_markov: MarkovCheck,
    pub c3_distortion: DistortionCheck,
    pub c4_expansion: ExpansionCheck,
    pub c5_tails: TailCheck,
    pub c6_aperiodicity: AperiodicCheck,
}

impl AxiomReport {
    pub fn verdicts(&self) -> [(&'static str, bool); 6] {
        [
            ("C1", self.c1_return.pass),
            ("C2", self.c2_markov.pass),
            ("C3", self.c3_distortion.pass),
            ("C4", self.c4_expansion.pass),
            ("C5", self.c5_tails.pass),
            ("C6", self.c6_aperiodicity.pass),
        ]
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts().iter().all(|(_, p)| *p)
    }
}

/// Runs all six checks on `partition`, which must have been built for
/// `stream` with `cfg`.
pub fn certify_axioms<M: MapFamily + ?Sized + Sync>(
    family: &M,
    stream: &NoiseStream,
    partition: &ReturnPartition,
    cfg: &TowerConfig,
    opts: &CertifyOptions,
) -> Result<AxiomReport, OrbitError> {
    let tower = Tower::new(family, *stream, *cfg);
    tower.insert(0, partition.clone());
    let pairs = sample_pairs(partition, opts);
    Ok(AxiomReport {
        c1_return: check_return(&tower, partition, &pairs, opts)?,
        c2_markov: check_markov(family, partition, opts),
        c3_distortion: check_distortion(&tower, partition, &pairs, opts)?,
        c4_expansion: check_expansion(&tower, partition, opts)?,
        c5_tails: check_tails(partition),
        c6_aperiodicity: AperiodicCheck {
            gcd: partition.gcd_of_times(),
            seeded_times: partition.seeded().map(|e| e.tau).collect(),
            pass: partition.gcd_of_times() == 1,
        },
    })
}

/// Pairs `(element, x, y)` with `x, y` in the same element at separations
/// spread over ten decades of the element length.
fn sample_pairs(p: &ReturnPartition, opts: &CertifyOptions) -> Vec<(usize, f64, f64)> {
    if p.elements.is_empty() {
        return Vec::new();
    }
    let covered: f64 = p.elements.iter().map(|e| e.interval.len()).sum();
    let mut out = Vec::with_capacity(opts.pairs);
    for k in 0..opts.pairs {
        let mut rng = task_rng(opts.seed, k as u64);
        // Element chosen with probability proportional to its length.
        let mut u = rng.gen::<f64>() * covered;
        let i = p
            .elements
            .iter()
            .position(|e| {
                u -= e.interval.len();
                u <= 0.0
            })
            .unwrap_or(p.elements.len() - 1);
        let j = p.elements[i].interval;
        let x = j.lo + j.len() * rng.gen_range(0.05..0.95);
        let h = j.len() * 10f64.powf(-rng.gen_range(1.0..10.0));
        let y = if x + h < j.hi { x + h } else { x - h };
        out.push((i, x, y));
    }
    out
}

fn check_return<M: MapFamily + ?Sized + Sync>(
    tower: &Tower<M>,
    p: &ReturnPartition,
    pairs: &[(usize, f64, f64)],
    opts: &CertifyOptions,
) -> Result<ReturnCheck, OrbitError> {
    let p0 = p.elements.iter().map(|e| e.tau).min().unwrap_or(0);
    let mut consistent = 0;
    let checked = pairs.len().min(64);
    for &(_, x, y) in &pairs[..checked] {
        let a = tower.separation_time(0, x, y, opts.separation_cap)?;
        let b = tower.separation_time_recursive(0, x, y, opts.separation_cap)?;
        consistent += (a == b) as usize;
    }
    Ok(ReturnCheck { p0, pairs_checked: checked, pairs_consistent: consistent, pass: p0 >= 1 && consistent == checked })
}

fn check_markov<M: MapFamily + ?Sized>(family: &M, p: &ReturnPartition, opts: &CertifyOptions) -> MarkovCheck {
    let m = opts.monotone_points.max(2);
    let mut failures = 0;
    let mut max_residual = 0.0f64;
    for (i, e) in p.elements.iter().enumerate() {
        let j = e.interval;
        let values: Vec<f64> =
            (0..=m).map(|k| p.return_map(family, i, j.lo + j.len() * k as f64 / m as f64)).collect();
        let monotone = values.windows(2).all(|w| w[0] < w[1]) && p.base.contains_interval(&j);
        failures += (!monotone) as usize;
        max_residual = max_residual.max(p.markov_residual(family, i));
    }
    MarkovCheck {
        elements: p.elements.len(),
        monotone_failures: failures,
        max_residual,
        pass: failures == 0 && max_residual <= MARKOV_TOL,
    }
}

fn check_distortion<M: MapFamily + ?Sized + Sync>(
    tower: &Tower<M>,
    p: &ReturnPartition,
    pairs: &[(usize, f64, f64)],
    opts: &CertifyOptions,
) -> Result<DistortionCheck, OrbitError> {
    let family = tower.family();
    let mut lipschitz = 0.0f64;
    // |DT^τ(x) / DT^τ(y) - 1| grouped by the separation time of the images.
    let mut by_sep: Vec<Vec<f64>> = vec![Vec::new(); opts.separation_cap + 1];
    let mut resolved = 0;
    for &(i, x, y) in pairs {
        let tau = p.elements[i].tau;
        let (fx, fy) = (p.return_map(family, i, x), p.return_map(family, i, y));
        let dl = p.log_derivative(family, i, x) - p.log_derivative(family, i, y);
        let gap = (fx - fy).abs();
        if gap > 0.0 {
            lipschitz = lipschitz.max(dl.abs() / gap);
        }
        let (fx, fy) = (fx.clamp(p.base.lo, p.base.hi), fy.clamp(p.base.lo, p.base.hi));
        if let Some(s) = tower.separation_time(tau as i64, fx, fy, opts.separation_cap)? {
            by_sep[s].push(dl.exp_m1().abs());
            resolved += 1;
        }
    }
    let (ns, vs): (Vec<f64>, Vec<f64>) = by_sep
        .iter_mut()
        .enumerate()
        .filter(|(_, v)| v.len() >= opts.min_bin)
        .map(|(s, v)| {
            v.sort_by(f64::total_cmp);
            (s as f64, v[((v.len() - 1) as f64 * opts.distortion_quantile).round() as usize])
        })
        .unzip();
    let fit = fit_exponential_points(&ns, &vs).ok();
    let (d, gamma) = fit.map_or((f64::INFINITY, 0.0), |f| (f.c, f.b));
    Ok(DistortionCheck {
        pairs: pairs.len(),
        resolved,
        d,
        gamma,
        beta: (-gamma).exp(),
        lipschitz,
        fit,
        pass: d.is_finite() && gamma > 0.0,
    })
}

fn check_expansion<M: MapFamily + ?Sized + Sync>(
    tower: &Tower<M>,
    p: &ReturnPartition,
    opts: &CertifyOptions,
) -> Result<ExpansionCheck, OrbitError> {
    let family = tower.family();
    let depth = opts.refine_depth.max(1);
    let mut diameters = vec![0.0f64; depth];
    let mut chains = vec![0usize; depth];
    for &(_, x0, _) in &sample_pairs(p, &CertifyOptions { pairs: opts.refine_samples, ..*opts }) {
        // Follow the element chain of x0 through successive returns.
        let mut chain: Vec<(i64, usize)> = Vec::new();
        let (mut epoch, mut x) = (0i64, x0);
        while chain.len() < depth {
            let part = tower.partition(epoch)?;
            let Some(i) = part.locate(x) else { break };
            chain.push((epoch, i));
            x = part.return_map(family, i, x).clamp(part.base.lo, part.base.hi);
            epoch += part.elements[i].tau as i64;
        }
        for n in 1..=chain.len() {
            let (e_last, i_last) = chain[n - 1];
            let mut set: Option<Interval> = Some(tower.partition(e_last)?.elements[i_last].interval);
            for &(e, i) in chain[..n - 1].iter().rev() {
                let part = tower.partition(e)?;
                set = set.and_then(|s| part.cylinder(family, i).and_then(|c| c.preimage(family, s)));
            }
            if let Some(s) = set {
                diameters[n - 1] = diameters[n - 1].max(s.len());
                chains[n - 1] += 1;
            }
        }
    }
    let reached = chains.iter().take_while(|&&c| c > 0).count();
    diameters.truncate(reached);
    chains.truncate(reached);
    let pass = reached >= 2 && diameters.windows(2).all(|w| w[1] < w[0]);
    Ok(ExpansionCheck { diameters, chains, pass })
}

fn check_tails(p: &ReturnPartition) -> TailCheck {
    let ns: Vec<f64> = (1..p.horizon).map(|n| n as f64).collect();
    let masses: Vec<f64> = (1..p.horizon)
        .map(|n| p.elements.iter().filter(|e| e.tau > n).map(|e| e.interval.len()).sum())
        .collect();
    let fit = fit_exponential_points(&ns, &masses).ok();
    TailCheck { fit, pass: fit.is_some_and(|f| f.b > 0.0 && f.r2 >= 0.85) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::PowerFixture;
    use crate::tower::{build_return_partition, Element};

    fn cfg() -> TowerConfig {
        TowerConfig { n_max: 12, seed_grid: 256, ..TowerConfig::default() }
    }

    fn with_elements(p: &ReturnPartition, keep: impl Fn(&Element) -> bool) -> ReturnPartition {
        let mut q = p.clone();
        q.elements.retain(|e| keep(e));
        q
    }

    #[test]
    fn aperiodicity_of_seeded_and_single_element() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let stream = NoiseStream::new(1, 0.01);
        let p = build_return_partition(&f, &stream, &cfg()).unwrap();
        let opts = CertifyOptions { pairs: 8, refine_samples: 4, refine_depth: 2, ..CertifyOptions::default() };
        let seeded = with_elements(&p, |e| e.seeded);
        assert!(certify_axioms(&f, &stream, &seeded, &cfg(), &opts).unwrap().c6_aperiodicity.pass);
        let single = with_elements(&p, |e| e.seeded && e.tau > 1);
        let single = ReturnPartition { elements: single.elements[..1].to_vec(), ..single };
        let r = certify_axioms(&f, &stream, &single, &cfg(), &opts).unwrap();
        assert!(!r.c6_aperiodicity.pass);
        assert_eq!(r.c6_aperiodicity.gcd, single.elements[0].tau as u64);
    }

    #[test]
    fn markov_check_catches_a_shifted_element() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let stream = NoiseStream::new(1, 0.01);
        let mut p = build_return_partition(&f, &stream, &cfg()).unwrap();
        let opts = CertifyOptions::default();
        assert!(check_markov(&f, &p, &opts).pass);
        p.elements[0].interval.hi -= 1e-6 * p.elements[0].interval.len();
        assert!(!check_markov(&f, &p, &opts).pass);
    }
}
