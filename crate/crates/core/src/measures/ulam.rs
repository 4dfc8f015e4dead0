//! Ulam discretisation of the transfer operators `L_t`.
//!
//! Row `i` of the matrix holds the fractions of cell `i` that `T_t` sends
//! into each cell `j`. Since `T_t` is increasing on every cell (cells never
//! straddle the singularity), those fractions come from the preimages of the
//! cell boundaries inside the image of cell `i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DensityVector, Grid};
use crate::map::{value_on, MapFamily, Side};
use crate::noise::NoiseStream;
use crate::numerics::bisect_monotone;

/// Sparse row-stochastic matrix; each row is a contiguous band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlamOperator {
    pub grid: Grid,
    pub t: f64,
    /// `(first column, fractions)`.
    pub rows: Vec<(u32, Vec<f64>)>,
}

impl UlamOperator {
    pub fn new<M: MapFamily + ?Sized>(family: &M, t: f64, grid: Grid) -> UlamOperator {
        let rows = (0..grid.m)
            .into_par_iter()
            .map(|i| row(family, t, grid, i))
            .collect();
        UlamOperator { grid, t, rows }
    }

    /// Largest `|Σ_j P_ij - 1|`.
    pub fn stochasticity_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|(_, r)| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Push-forward of a density.
    pub fn push(&self, density: &DensityVector) -> DensityVector {
        assert_eq!(density.grid, self.grid);
        let mut out = vec![0.0; self.grid.m];
        for ((start, fr), &w) in self.rows.iter().zip(&density.weights) {
            if w == 0.0 {
                continue;
            }
            for (k, p) in fr.iter().enumerate() {
                out[*start as usize + k] += w * p;
            }
        }
        DensityVector {
            grid: self.grid,
            weights: out,
        }
    }

    /// Push-forward of a signed cell function (same linear map).
    pub fn push_values(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.m];
        for ((start, fr), &w) in self.rows.iter().zip(values) {
            for (k, p) in fr.iter().enumerate() {
                out[*start as usize + k] += w * p;
            }
        }
        out
    }
}

fn row<M: MapFamily + ?Sized>(family: &M, t: f64, grid: Grid, i: usize) -> (u32, Vec<f64>) {
    let (a, b) = (grid.left(i), grid.right(i));
    let side = if b <= 0.0 { Side::Neg } else { Side::Pos };
    let f = |x: f64| value_on(family, side, t, x);
    let (fa, fb) = (f(a), f(b));
    let j0 = grid.cell(fa);
    let mut j1 = grid.cell(fb);
    if j1 > j0 && grid.left(j1) >= fb {
        j1 -= 1;
    }
    let mut cuts = Vec::with_capacity(j1 - j0 + 2);
    cuts.push(a);
    for j in j0 + 1..=j1 {
        let c = grid.left(j);
        cuts.push(bisect_monotone(f, a, b, c, true, 0.0).clamp(*cuts.last().unwrap(), b));
    }
    cuts.push(b);
    let mut fr: Vec<f64> = cuts.windows(2).map(|w| (w[1] - w[0]) / (b - a)).collect();
    let total: f64 = fr.iter().sum();
    fr.iter_mut().for_each(|p| *p /= total);
    (j0 as u32, fr)
}

/// Operators for the times `start..end` of a noise realization.
#[derive(Debug, Clone)]
pub struct OperatorCache {
    pub start: i64,
    pub ops: Vec<UlamOperator>,
}

impl OperatorCache {
    pub fn build<M: MapFamily + ?Sized>(
        family: &M,
        stream: &NoiseStream,
        grid: Grid,
        start: i64,
        end: i64,
    ) -> Self {
        let ts = stream.window(start, (end - start).max(0) as usize);
        let ops = ts
            .iter()
            .map(|&t| UlamOperator::new(family, t, grid))
            .collect();
        OperatorCache { start, ops }
    }

    pub fn end(&self) -> i64 {
        self.start + self.ops.len() as i64
    }

    /// Operator of `T_{ω_time}`.
    pub fn at(&self, time: i64) -> &UlamOperator {
        &self.ops[(time - self.start) as usize]
    }

    /// Pushes `density` from time `from` to time `to`.
    pub fn push(&self, density: &DensityVector, from: i64, to: i64) -> DensityVector {
        (from..to).fold(density.clone(), |d, time| self.at(time).push(&d))
    }
}

/// Uniform density pushed through `T_{ω_{-m_past}}, …, T_{ω_{-1}}`.
pub fn equivariant_density<M: MapFamily + ?Sized>(
    family: &M,
    stream: &NoiseStream,
    m_past: usize,
    grid: Grid,
) -> DensityVector {
    let cache = OperatorCache::build(family, stream, grid, -(m_past as i64), 0);
    let mut d = cache.push(&DensityVector::uniform(grid), -(m_past as i64), 0);
    d.normalize();
    d
}

/// Result of the adaptive pullback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pullback {
    pub density: DensityVector,
    pub m_past: usize,
    /// L1 distance between the last two depths.
    pub residual: f64,
}

/// Doubles the pullback depth from `m_start` until consecutive densities are
/// within `tol` in L1, or `m_cap` is reached.
pub fn pullback_density<M: MapFamily + ?Sized>(
    family: &M,
    stream: &NoiseStream,
    grid: Grid,
    m_start: usize,
    m_cap: usize,
    tol: f64,
) -> Pullback {
    let mut m = m_start.max(1);
    let mut prev = equivariant_density(family, stream, m, grid);
    loop {
        let next = equivariant_density(family, stream, 2 * m, grid);
        let residual = prev.l1_distance(&next);
        m *= 2;
        if residual < tol || m >= m_cap {
            return Pullback {
                density: next,
                m_past: m,
                residual,
            };
        }
        prev = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::PowerFixture;

    #[test]
    fn rows_are_stochastic() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        for t in [-0.1, 0.0, 0.037] {
            let op = UlamOperator::new(&f, t, Grid::new(256));
            assert!(op.stochasticity_error() < 1e-12);
            assert!(op.rows.iter().all(|(_, r)| r.iter().all(|&p| p >= 0.0)));
        }
    }

    #[test]
    fn row_matches_closed_form() {
        // T(x) = 2x² - 1 on the right; cell [0.5, 0.625] maps onto [-0.5, -0.21875].
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let g = Grid::new(16);
        let op = UlamOperator::new(&f, 0.0, g);
        let (start, fr) = &op.rows[12];
        assert_eq!(*start as usize, g.cell(-0.5));
        // Preimage of -0.375 is sqrt(0.3125).
        let p = 0.3125f64.sqrt();
        assert!((fr[0] - (p - 0.5) / 0.125).abs() < 1e-12);
    }

    #[test]
    fn zero_past_is_uniform() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let d = equivariant_density(&f, &NoiseStream::new(1, 0.01), 0, Grid::new(32));
        assert_eq!(d, DensityVector::uniform(Grid::new(32)));
    }

    #[test]
    fn zero_noise_density_is_seed_independent() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let g = Grid::new(64);
        let a = equivariant_density(&f, &NoiseStream::new(1, 0.0), 20, g);
        let b = equivariant_density(&f, &NoiseStream::new(2, 0.0), 20, g);
        assert_eq!(a, b);
        assert!((a.mass() - 1.0).abs() < 1e-12);
    }
}
