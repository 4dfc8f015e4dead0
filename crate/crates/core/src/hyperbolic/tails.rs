//! Ensemble statistics over `(ω, x) ~ P_ε × Leb`.
//!
//! Each sample draws `x_0` uniformly from `I` and its own noise stream from
//! the master seed, so results do not depend on the number of workers.
//! Counts are reduced with integer sums, which are order independent.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{hyperbolic_times, HyperbolicAnalyzer, HyperbolicConfig};
use crate::map::{tilde_b, MapError, MapFamily};
use crate::measures::{fit_exponential_points, ExpFit, FitError};
use crate::noise::{derive_seed, task_rng, NoiseStream};
use crate::orbit::{OrbitEngine, OrbitError, OrbitTrace};

/// Salt separating noise seeds from initial-point seeds.
const NOISE_SALT: u64 = 0x6e6f_6973_6521;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub samples: usize,
    pub n_max: usize,
    pub seed: u64,
    pub eps: f64,
}

impl EnsembleSpec {
    /// Initial point and noise realization of sample `i`.
    pub fn sample(&self, i: usize) -> (f64, NoiseStream) {
        let mut rng = task_rng(self.seed, i as u64);
        let mut x0 = 0.0;
        while x0 == 0.0 {
            x0 = rng.gen_range(-1.0..1.0);
        }
        (
            x0,
            NoiseStream::new(derive_seed(self.seed ^ NOISE_SALT, i as u64), self.eps),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    /// `P(E_n)`.
    BadSet,
    /// `P(h > n)`.
    FirstHyperbolic,
    /// `P(h* > n)`.
    FirstHyperbolicReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub n: usize,
    pub count: u64,
    pub total: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailTable {
    pub kind: TailKind,
    pub rows: Vec<TailRow>,
}

impl TailTable {
    fn from_counts(kind: TailKind, counts: &[u64], total: u64) -> Self {
        let rows = counts
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, &count)| TailRow {
                n,
                count,
                total,
                fraction: if total == 0 {
                    0.0
                } else {
                    count as f64 / total as f64
                },
            })
            .collect();
        TailTable { kind, rows }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub spec: EnsembleSpec,
    pub config: HyperbolicConfig,
    pub valid: u64,
    pub singular: u64,
    pub bad_set: TailTable,
    pub first_hyperbolic: TailTable,
    pub first_return: TailTable,
}

#[derive(Debug, Clone)]
struct Counts {
    bad: Vec<u64>,
    h: Vec<u64>,
    h_star: Vec<u64>,
    valid: u64,
    singular: u64,
}

impl Counts {
    fn new(n_max: usize) -> Self {
        Counts {
            bad: vec![0; n_max + 1],
            h: vec![0; n_max + 1],
            h_star: vec![0; n_max + 1],
            valid: 0,
            singular: 0,
        }
    }

    fn merge(mut self, other: Counts) -> Counts {
        for (a, b) in [
            (&mut self.bad, &other.bad),
            (&mut self.h, &other.h),
            (&mut self.h_star, &other.h_star),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.valid += other.valid;
        self.singular += other.singular;
        self
    }

    fn add(&mut self, trace: &OrbitTrace, analyzer: &HyperbolicAnalyzer) {
        let n_max = trace.len();
        self.valid += 1;
        let mut s: u64 = 0;
        for n in 1..=n_max {
            s += trace.depths[n - 1] as u64;
            if s as f64 >= analyzer.cfg.c * n as f64 {
                self.bad[n] += 1;
            }
        }
        let report = analyzer.report(trace);
        let h = report.first.unwrap_or(usize::MAX);
        let hs = report.first_return.unwrap_or(usize::MAX);
        for n in 1..=n_max {
            if h > n {
                self.h[n] += 1;
            }
            if hs > n {
                self.h_star[n] += 1;
            }
        }
    }
}

/// Runs the ensemble and tabulates the three tails for `n = 1..=n_max`.
pub fn run_ensemble<M: MapFamily + ?Sized>(
    family: &M,
    cfg: &HyperbolicConfig,
    spec: &EnsembleSpec,
) -> Result<EnsembleSummary, OrbitError> {
    let engine = OrbitEngine::new(family, cfg.delta)?;
    let analyzer = HyperbolicAnalyzer::new(family, *cfg)?;
    let counts = (0..spec.samples)
        .into_par_iter()
        .try_fold(
            || Counts::new(spec.n_max),
            |mut acc, i| {
                let (x0, stream) = spec.sample(i);
                match engine.iterate(&stream, x0, spec.n_max) {
                    Ok(trace) => acc.add(&trace, &analyzer),
                    Err(OrbitError::SingularHit { .. }) => acc.singular += 1,
                    Err(e) => return Err(e),
                }
                Ok(acc)
            },
        )
        .try_reduce(|| Counts::new(spec.n_max), |a, b| Ok(a.merge(b)))?;
    Ok(EnsembleSummary {
        spec: *spec,
        config: *cfg,
        valid: counts.valid,
        singular: counts.singular,
        bad_set: TailTable::from_counts(TailKind::BadSet, &counts.bad, counts.valid),
        first_hyperbolic: TailTable::from_counts(
            TailKind::FirstHyperbolic,
            &counts.h,
            counts.valid,
        ),
        first_return: TailTable::from_counts(
            TailKind::FirstHyperbolicReturn,
            &counts.h_star,
            counts.valid,
        ),
    })
}

/// Log-linear fit of a tail over the rows with at least `min_count` survivors.
pub fn fit_survival(table: &TailTable, min_count: u64) -> Result<ExpFit, FitError> {
    let (ns, ys): (Vec<f64>, Vec<f64>) = table
        .rows
        .iter()
        .filter(|r| r.count >= min_count)
        .map(|r| (r.n as f64, r.fraction))
        .unzip();
    fit_exponential_points(&ns, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaFit {
    pub kappa: f64,
    pub percentile: f64,
    pub segments: usize,
    pub min_length: usize,
}

/// Fits `κ` as a low percentile of `(1/n) log DT_ω^n(x)` over escape
/// segments: `x, …, T^{n-1}x ∉ B̃(δ)` and `T^n x ∈ B̃(2δ)`.
///
/// Segments start at the first iterate and right after each visit to
/// `B̃(2δ)`; only segments of length at least `min_length` count.
pub fn fit_kappa<M: MapFamily + ?Sized>(
    family: &M,
    delta: f64,
    spec: &EnsembleSpec,
    percentile: f64,
    min_length: usize,
) -> Result<KappaFit, MapError> {
    let engine = OrbitEngine::new(family, delta)?;
    let wide = tilde_b(family, 0.0, 2.0 * delta)?;
    let rates: Vec<Vec<f64>> = (0..spec.samples)
        .into_par_iter()
        .map(|i| {
            let (x0, stream) = spec.sample(i);
            let Ok(trace) = engine.iterate(&stream, x0, spec.n_max) else {
                return Vec::new();
            };
            let inside: Vec<bool> = trace.points.iter().map(|&x| wide.contains(x)).collect();
            let mut out = Vec::new();
            let mut start = 0usize;
            while start < trace.points.len() {
                if trace.visits[start] || inside[start] {
                    start += 1;
                    continue;
                }
                let Some(len) = inside[start + 1..].iter().position(|&b| b).map(|p| p + 1) else {
                    break;
                };
                if len >= min_length {
                    out.push(trace.log_derivative(start, start + len) / len as f64);
                }
                start += len + 1;
            }
            out
        })
        .collect();
    let mut all: Vec<f64> = rates.into_iter().flatten().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let kappa = if all.is_empty() {
        f64::NAN
    } else {
        let idx = ((percentile * all.len() as f64).floor() as usize).min(all.len() - 1);
        all[idx]
    };
    Ok(KappaFit {
        kappa,
        percentile,
        segments: all.len(),
        min_length,
    })
}

/// Hyperbolic times of each sample; used by tests and the CLI for raw output.
pub fn sample_first_times<M: MapFamily + ?Sized>(
    family: &M,
    cfg: &HyperbolicConfig,
    spec: &EnsembleSpec,
) -> Result<Vec<Option<usize>>, OrbitError> {
    let engine = OrbitEngine::new(family, cfg.delta)?;
    (0..spec.samples)
        .into_par_iter()
        .map(|i| {
            let (x0, stream) = spec.sample(i);
            match engine.iterate(&stream, x0, spec.n_max) {
                Ok(trace) => Ok(hyperbolic_times(&trace.depths, cfg.c_prime)
                    .first()
                    .copied()),
                Err(OrbitError::SingularHit { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::PowerFixture;

    #[test]
    fn ensemble_is_deterministic_across_pools() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let cfg = HyperbolicConfig::default();
        let spec = EnsembleSpec {
            samples: 500,
            n_max: 40,
            seed: 3,
            eps: 0.05,
        };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let three = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let a = one.install(|| run_ensemble(&f, &cfg, &spec)).unwrap();
        let b = three.install(|| run_ensemble(&f, &cfg, &spec)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.valid + a.singular, 500);
    }

    #[test]
    fn tails_are_monotone_for_first_times() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let spec = EnsembleSpec {
            samples: 300,
            n_max: 30,
            seed: 1,
            eps: 0.05,
        };
        let s = run_ensemble(&f, &HyperbolicConfig::default(), &spec).unwrap();
        for t in [&s.first_hyperbolic, &s.first_return] {
            assert!(t.rows.windows(2).all(|w| w[1].count <= w[0].count));
        }
        // h* >= h, so its tail dominates.
        for (a, b) in s.first_hyperbolic.rows.iter().zip(&s.first_return.rows) {
            assert!(b.count >= a.count);
        }
    }
}
