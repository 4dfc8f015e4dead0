//! Quenched correlations along a fixed noise realization.
//!
//! Forward: `C_n = |∫(φ∘T_ω^n) ψ dμ_ω - ∫φ dμ_{σ^n ω} ∫ψ dμ_ω|`.
//!
//! Backward: `C_n = |∫(φ∘T_{σ^{-n}ω}^n) ψ dμ_{σ^{-n}ω} - ∫φ dμ_ω ∫ψ dμ_{σ^{-n}ω}|`.
//!
//! With Ulam densities, `∫(φ∘T^n) ψ h = ∫ φ L^n(ψ h)`. The Monte Carlo method
//! replaces `μ` by an ensemble started uniformly far in the past.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_exponential, DensityVector, ExpFit, Grid, Observable, OperatorCache};
use crate::map::{value_unchecked, MapFamily};
use crate::noise::{task_rng, NoiseStream};

/// Samples per Monte Carlo chunk; fixed so the summation order never depends
/// on the worker count.
const MC_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ulam,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationParams {
    pub grid: Grid,
    pub m_past: usize,
    pub n_max: usize,
    /// First `n` used by the fit.
    pub burn_in: usize,
    /// Monte Carlo ensemble size (rounded up to even for antithetic pairs).
    pub samples: usize,
    /// Seed of the Monte Carlo starting points.
    pub sample_seed: u64,
}

impl Default for CorrelationParams {
    fn default() -> Self {
        CorrelationParams {
            grid: Grid { m: 2048 },
            m_past: 200,
            n_max: 40,
            burn_in: 5,
            samples: 100_000,
            sample_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub direction: Direction,
    pub method: Method,
    /// `C_n` for `n = 0..=n_max`.
    pub values: Vec<f64>,
    pub burn_in: usize,
    pub fit: Option<ExpFit>,
}

pub fn quenched_correlation<M: MapFamily + ?Sized>(
    family: &M,
    stream: &NoiseStream,
    phi: &Observable,
    psi: &Observable,
    direction: Direction,
    method: Method,
    params: &CorrelationParams,
) -> CorrelationSeries {
    let values = match (method, direction) {
        (Method::Ulam, Direction::Forward) => ulam_forward(family, stream, phi, psi, params),
        (Method::Ulam, Direction::Backward) => ulam_backward(family, stream, phi, psi, params),
        (Method::MonteCarlo, d) => monte_carlo(family, stream, phi, psi, d, params),
    };
    let fit = fit_exponential(&values, params.burn_in).ok();
    CorrelationSeries {
        direction,
        method,
        values,
        burn_in: params.burn_in,
        fit,
    }
}

fn weighted(density: &DensityVector, f: &[f64]) -> Vec<f64> {
    density.weights.iter().zip(f).map(|(w, v)| w * v).collect()
}

fn integrate(values: &[f64], f: &[f64], width: f64) -> f64 {
    values.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() * width
}

fn ulam_forward<M: MapFamily + ?Sized>(
    family: &M,
    stream: &NoiseStream,
    phi: &Observable,
    psi: &Observable,
    p: &CorrelationParams,
) -> Vec<f64> {
    let grid = p.grid;
    let w = grid.width();
    let (phi_c, psi_c) = (phi.cell_averages(grid.m), psi.cell_averages(grid.m));
    let past = -(p.m_past as i64);
    let cache = OperatorCache::build(family, stream, grid, past, p.n_max as i64);
    let h0 = cache.push(&DensityVector::uniform(grid), past, 0);
    let int_psi = h0.integrate(&psi_c);
    let mut g = weighted(&h0, &psi_c);
    let mut h = h0.weights.clone();
    let mut out = Vec::with_capacity(p.n_max + 1);
    for n in 0..=p.n_max {
        out.push((integrate(&g, &phi_c, w) - integrate(&h, &phi_c, w) * int_psi).abs());
        if n < p.n_max {
            let op = cache.at(n as i64);
            g = op.push_values(&g);
            h = op.push_values(&h);
        }
    }
    out
}

fn ulam_backward<M: MapFamily + ?Sized>(
    family: &M,
    stream: &NoiseStream,
    phi: &Observable,
    psi: &Observable,
    p: &CorrelationParams,
) -> Vec<f64> {
    let grid = p.grid;
    let w = grid.width();
    let (phi_c, psi_c) = (phi.cell_averages(grid.m), psi.cell_averages(grid.m));
    let n_max = p.n_max as i64;
    let start = -n_max - p.m_past as i64;
    let cache = OperatorCache::build(family, stream, grid, start, 0);
    // hs[k] = density at time -n_max + k.
    let mut hs = Vec::with_capacity(p.n_max + 1);
    hs.push(cache.push(&DensityVector::uniform(grid), start, -n_max));
    for time in -n_max..0 {
        let next = cache.at(time).push(hs.last().unwrap());
        hs.push(next);
    }
    let h0 = &hs[p.n_max];
    let int_phi = h0.integrate(&phi_c);
    (0..=p.n_max)
        .map(|n| {
            let hn = &hs[p.n_max - n];
            let mut g = weighted(hn, &psi_c);
            for time in -(n as i64)..0 {
                g = cache.at(time).push_values(&g);
            }
            (integrate(&g, &phi_c, w) - int_phi * hn.integrate(&psi_c)).abs()
        })
        .collect()
}

/// Per-chunk sums `(Σ φψ, Σ φ, Σ ψ)` for each `n`.
type Sums = (Vec<f64>, Vec<f64>, Vec<f64>);

fn monte_carlo<M: MapFamily + ?Sized>(
    family: &M,
    stream: &NoiseStream,
    phi: &Observable,
    psi: &Observable,
    direction: Direction,
    p: &CorrelationParams,
) -> Vec<f64> {
    let n_max = p.n_max;
    let pairs = p.samples.div_ceil(2);
    let total = 2 * pairs;
    let (start, len) = match direction {
        Direction::Forward => (-(p.m_past as i64), p.m_past + n_max),
        Direction::Backward => (-((p.m_past + n_max) as i64), p.m_past + n_max),
    };
    let omega = stream.window(start, len);
    let chunks: Vec<Sums> = (0..pairs.div_ceil(MC_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s: Sums = (
                vec![0.0; n_max + 1],
                vec![0.0; n_max + 1],
                vec![0.0; n_max + 1],
            );
            let mut path = vec![0.0; n_max + 1];
            for pair in c * MC_CHUNK..((c + 1) * MC_CHUNK).min(pairs) {
                let u: f64 = task_rng(p.sample_seed, pair as u64).gen_range(-1.0..1.0);
                for x0 in [u, -u] {
                    let mut x = x0;
                    for &t in &omega[..p.m_past] {
                        x = value_unchecked(family, t, x);
                    }
                    // path[k] = point at time start + m_past + k.
                    path[0] = x;
                    for (k, &t) in omega[p.m_past..].iter().enumerate() {
                        x = value_unchecked(family, t, x);
                        path[k + 1] = x;
                    }
                    for n in 0..=n_max {
                        let (a, b) = match direction {
                            Direction::Forward => (phi.eval(path[n]), psi.eval(path[0])),
                            Direction::Backward => {
                                (phi.eval(path[n_max]), psi.eval(path[n_max - n]))
                            }
                        };
                        s.0[n] += a * b;
                        s.1[n] += a;
                        s.2[n] += b;
                    }
                }
            }
            s
        })
        .collect();
    let mut acc: Sums = (
        vec![0.0; n_max + 1],
        vec![0.0; n_max + 1],
        vec![0.0; n_max + 1],
    );
    for s in chunks {
        for n in 0..=n_max {
            acc.0[n] += s.0[n];
            acc.1[n] += s.1[n];
            acc.2[n] += s.2[n];
        }
    }
    let k = total as f64;
    (0..=n_max)
        .map(|n| (acc.0[n] / k - (acc.1[n] / k) * (acc.2[n] / k)).abs())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::PowerFixture;
    use crate::measures::ObservableKind;

    fn small() -> CorrelationParams {
        CorrelationParams {
            grid: Grid::new(128),
            m_past: 30,
            n_max: 10,
            burn_in: 2,
            samples: 4000,
            sample_seed: 5,
        }
    }

    #[test]
    fn constants_cancel() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let s = NoiseStream::new(1, 0.01);
        let c = Observable::new(ObservableKind::Constant { value: 2.5 });
        let x = Observable::new(ObservableKind::Identity);
        for method in [Method::Ulam, Method::MonteCarlo] {
            for dir in [Direction::Forward, Direction::Backward] {
                for (a, b) in [(&c, &x), (&x, &c)] {
                    let r = quenched_correlation(&f, &s, a, b, dir, method, &small());
                    assert!(
                        r.values.iter().all(|&v| v <= 1e-10),
                        "{method:?} {dir:?} {:?}",
                        r.values
                    );
                }
            }
        }
    }

    #[test]
    fn monte_carlo_is_worker_independent() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let s = NoiseStream::new(1, 0.01);
        let x = Observable::new(ObservableKind::Identity);
        let sg = Observable::new(ObservableKind::Sign);
        let p = CorrelationParams {
            samples: 5000,
            ..small()
        };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| {
            quenched_correlation(&f, &s, &x, &sg, Direction::Forward, Method::MonteCarlo, &p)
        });
        let b = four.install(|| {
            quenched_correlation(&f, &s, &x, &sg, Direction::Forward, Method::MonteCarlo, &p)
        });
        assert_eq!(a, b);
    }
}
