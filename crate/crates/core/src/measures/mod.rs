//! Sample measures `μ_ω` and quenched correlations.
//!
//! Densities live on a uniform grid of `m` cells over `I`. The transfer
//! operator of each `T_t` is discretised by Ulam's method, and `μ_ω` is
//! approximated by pushing the uniform density through a finite stretch of
//! the past, `T_{ω_{-1}} ∘ … ∘ T_{ω_{-m}}`.

mod correlation;
mod observable;
mod ulam;

pub use correlation::{
    quenched_correlation, CorrelationParams, CorrelationSeries, Direction, Method,
};
pub use observable::{Observable, ObservableKind};
pub use ulam::{equivariant_density, pullback_density, OperatorCache, Pullback, UlamOperator};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::linear_fit;

/// Values at or below this floor are dropped before a log-linear fit.
pub const FIT_FLOOR: f64 = 1e-14;

/// `m` equal cells over `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub m: usize,
}

impl Grid {
    pub fn new(m: usize) -> Self {
        assert!(
            m >= 16 && m % 2 == 0,
            "grid needs an even number of cells, at least 16"
        );
        Grid { m }
    }

    pub fn width(&self) -> f64 {
        2.0 / self.m as f64
    }

    pub fn left(&self, i: usize) -> f64 {
        -1.0 + 2.0 * i as f64 / self.m as f64
    }

    pub fn right(&self, i: usize) -> f64 {
        self.left(i + 1)
    }

    /// Cell containing `x`; the right end of `I` belongs to the last cell.
    pub fn cell(&self, x: f64) -> usize {
        (((x + 1.0) * 0.5 * self.m as f64).floor() as usize).min(self.m - 1)
    }
}

/// Piecewise constant density on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityVector {
    pub grid: Grid,
    /// Density value on each cell.
    pub weights: Vec<f64>,
}

impl DensityVector {
    pub fn uniform(grid: Grid) -> Self {
        DensityVector {
            grid,
            weights: vec![0.5; grid.m],
        }
    }

    /// `∫ h dx`.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.grid.width()
    }

    pub fn normalize(&mut self) {
        let mass = self.mass();
        if mass > 0.0 {
            self.weights.iter_mut().for_each(|w| *w /= mass);
        }
    }

    /// `∫ f h dx` with `f` given by its cell averages.
    pub fn integrate(&self, cell_averages: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(cell_averages)
            .map(|(w, f)| w * f)
            .sum::<f64>()
            * self.grid.width()
    }

    pub fn l1_distance(&self, other: &DensityVector) -> f64 {
        assert_eq!(self.grid, other.grid);
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.width()
    }

    /// Restriction to a grid with `m / factor` cells by averaging.
    pub fn coarsen(&self, factor: usize) -> DensityVector {
        assert!(self.grid.m % factor == 0);
        let grid = Grid {
            m: self.grid.m / factor,
        };
        let weights = self
            .weights
            .chunks(factor)
            .map(|c| c.iter().sum::<f64>() / factor as f64)
            .collect();
        DensityVector { grid, weights }
    }
}

/// `C e^{-b n}` fitted to a positive series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub c: f64,
    pub b: f64,
    pub r2: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least 5 points above the floor after burn-in, got {0}")]
    InsufficientData(usize),
}

/// Least squares on `(n, log y)` over points with `y > FIT_FLOOR`.
///
/// A series with no variation fits `b = 0` with `r² = 0`.
pub fn fit_exponential_points(ns: &[f64], values: &[f64]) -> Result<ExpFit, FitError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > FIT_FLOOR)
        .map(|(&n, &v)| (n, v.ln()))
        .unzip();
    if xs.len() < 5 {
        return Err(FitError::InsufficientData(xs.len()));
    }
    if ys.iter().all(|&y| y == ys[0]) {
        return Ok(ExpFit {
            c: ys[0].exp(),
            b: 0.0,
            r2: 0.0,
            points: xs.len(),
        });
    }
    let (a, slope, r2) = linear_fit(&xs, &ys);
    Ok(ExpFit {
        c: a.exp(),
        b: -slope,
        r2,
        points: xs.len(),
    })
}

/// Fits `values[n]` for `n >= burn_in`.
pub fn fit_exponential(values: &[f64], burn_in: usize) -> Result<ExpFit, FitError> {
    let ns: Vec<f64> = (burn_in..values.len()).map(|n| n as f64).collect();
    fit_exponential_points(&ns, values.get(burn_in..).unwrap_or(&[]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential() {
        let v: Vec<f64> = (0..30).map(|n| 3.0 * (-0.2 * n as f64).exp()).collect();
        let f = fit_exponential(&v, 0).unwrap();
        assert!((f.c - 3.0).abs() < 1e-9 && (f.b - 0.2).abs() < 1e-9 && (f.r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_series() {
        let f = fit_exponential(&[0.7; 12], 2).unwrap();
        assert_eq!((f.b, f.r2), (0.0, 0.0));
    }

    #[test]
    fn floor_and_burn_in() {
        let mut v = vec![1.0, 0.5, 0.25, 0.125, 1e-20, 0.0, 0.03];
        assert!(matches!(
            fit_exponential(&v, 1),
            Err(FitError::InsufficientData(4))
        ));
        v.push(0.01);
        assert!(fit_exponential(&v, 0).is_ok());
    }

    #[test]
    fn grid_cells() {
        let g = Grid::new(16);
        assert_eq!(g.cell(-1.0), 0);
        assert_eq!(g.cell(1.0), 15);
        assert_eq!(g.cell(0.0), 8);
        assert!((g.right(7) - 0.0).abs() < 1e-15);
        let d = DensityVector::uniform(g);
        assert!((d.mass() - 1.0).abs() < 1e-15);
        assert_eq!(d.coarsen(4).weights, vec![0.5; 4]);
    }
}
