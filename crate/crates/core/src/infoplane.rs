//! Shannon entropy power and Fisher information of a KDE, by trapezoidal
//! quadrature on a uniform grid.
//!
//! Entropy uses the usual sign convention, `H = -∫ f log f`, so that
//! `N = exp(2H) / (2 pi e)` equals the variance for a Gaussian and
//! `N * I >= 1` with equality only in the Gaussian case.
//!
//! Both integrands are set to zero where `f < 1e-12 * max f`.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::density::{make_grid, DensityModel, EvalGrid, DEFAULT_GRID_POINTS};
use crate::error::{Error, Result};
use crate::sum::compensated_sum;

/// Relative density floor below which integrands are dropped.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Slack allowed on `N * I >= 1` for quadrature error.
pub const ISOPERIMETRIC_SLACK: f64 = 1e-6;

/// One series placed on the Fisher-Shannon plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsPoint {
    pub id: String,
    pub sep: f64,
    pub fim: f64,
    pub product: f64,
    pub bandwidth: f64,
    pub n: usize,
    pub fallback_bandwidth_used: bool,
}

fn trapezoid(values: &[f64], dx: f64) -> f64 {
    let m = values.len();
    let inner = compensated_sum(values.iter().copied());
    dx * (inner - 0.5 * (values[0] + values[m - 1]))
}

fn floor_of(f: &[f64]) -> f64 {
    DENSITY_FLOOR * f.iter().copied().fold(0.0, f64::max)
}

fn entropy_from(f: &[f64], dx: f64) -> Result<f64> {
    let tau = floor_of(f);
    let integrand: Vec<f64> = f
        .iter()
        .map(|&v| if v < tau || v <= 0.0 { 0.0 } else { -v * v.ln() })
        .collect();
    let h = trapezoid(&integrand, dx);
    if !h.is_finite() {
        return Err(Error::QuadratureFailure(format!("entropy integral is {h}")));
    }
    Ok(h)
}

fn fisher_from(f: &[f64], df: &[f64], dx: f64) -> Result<f64> {
    let tau = floor_of(f);
    let integrand: Vec<f64> = f
        .iter()
        .zip(df)
        .map(|(&v, &d)| if v < tau || v <= 0.0 { 0.0 } else { d * d / v })
        .collect();
    let i = trapezoid(&integrand, dx);
    if !(i.is_finite() && i > 0.0) {
        return Err(Error::QuadratureFailure(format!("Fisher information integral is {i}")));
    }
    Ok(i)
}

fn sep_from_entropy(h: f64) -> Result<f64> {
    let n = (2.0 * h).exp() / (2.0 * PI * E);
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::QuadratureFailure(format!("entropy power is {n}")));
    }
    Ok(n)
}

pub fn differential_entropy(model: &DensityModel, grid: &EvalGrid) -> Result<f64> {
    let (f, _) = model.eval_grid(grid);
    entropy_from(&f, grid.spacing())
}

/// Shannon entropy power, `exp(2H) / (2 pi e)`.
pub fn sep(model: &DensityModel, grid: &EvalGrid) -> Result<f64> {
    sep_from_entropy(differential_entropy(model, grid)?)
}

/// Fisher information, `∫ f'^2 / f`.
pub fn fim(model: &DensityModel, grid: &EvalGrid) -> Result<f64> {
    let (f, df) = model.eval_grid(grid);
    fisher_from(&f, &df, grid.spacing())
}

/// `(sep, fim)` from a single grid evaluation.
pub fn sep_and_fim(model: &DensityModel, grid: &EvalGrid) -> Result<(f64, f64)> {
    let (f, df) = model.eval_grid(grid);
    let dx = grid.spacing();
    Ok((sep_from_entropy(entropy_from(&f, dx)?)?, fisher_from(&f, &df, dx)?))
}

pub fn fs_point(id: &str, remainder: &[f64]) -> Result<FsPoint> {
    fs_point_with_grid(id, remainder, DEFAULT_GRID_POINTS)
}

pub fn fs_point_with_grid(id: &str, remainder: &[f64], grid_points: usize) -> Result<FsPoint> {
    let model = DensityModel::fit(remainder)?;
    fs_point_from_model(id, &model, grid_points)
}

pub fn fs_point_from_model(id: &str, model: &DensityModel, grid_points: usize) -> Result<FsPoint> {
    let grid = make_grid(model, grid_points)?;
    let (sep, fim) = sep_and_fim(model, &grid)?;
    let product = sep * fim;
    if product < 1.0 - ISOPERIMETRIC_SLACK {
        return Err(Error::IsoperimetricViolation {
            id: id.to_owned(),
            product,
        });
    }
    let bw = model.bandwidth_info();
    Ok(FsPoint {
        id: id.to_owned(),
        sep,
        fim,
        product,
        bandwidth: bw.h,
        n: model.n(),
        fallback_bandwidth_used: bw.fallback,
    })
}
