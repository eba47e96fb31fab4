//! Gaussian kernel density estimation with a Sheather-Jones bandwidth.
//!
//! The estimate is
//!
//! ```text
//! f(x)  =  1 / (n h sqrt(2 pi)) * sum_i exp(-((x - x_i) / h)^2 / 2)
//! f'(x) = -1 / (n h^3 sqrt(2 pi)) * sum_i (x - x_i) exp(-((x - x_i) / h)^2 / 2)
//! ```
//!
//! Kernel terms further than [`CUTOFF`] bandwidths from `x` underflow to zero
//! in double precision and are skipped, which lets evaluation walk a sorted
//! copy of the sample.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::{compensated_sum, par_block_sum, KahanSum};

/// exp(-u^2/2) is exactly 0.0 in f64 once |u| > ~38.6.
const CUTOFF: f64 = 40.0;

/// Grid padding, in bandwidths, on each side of the sample range.
pub const GRID_PAD: f64 = 8.0;

pub const DEFAULT_GRID_POINTS: usize = 4096;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A bandwidth together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub h: f64,
    /// True if the plug-in recursion failed and Silverman's rule was used.
    pub fallback: bool,
}

/// A fitted Gaussian KDE. Immutable once built.
#[derive(Debug, Clone)]
pub struct DensityModel {
    sorted: Vec<f64>,
    bandwidth: Bandwidth,
}

impl DensityModel {
    /// Fit with the Sheather-Jones bandwidth, falling back to Silverman's
    /// rule when the plug-in recursion breaks down.
    pub fn fit(sample: &[f64]) -> Result<Self> {
        let bandwidth = select_bandwidth(sample)?;
        Self::build(sample, bandwidth)
    }

    /// Use a caller-supplied bandwidth.
    pub fn with_bandwidth(sample: &[f64], h: f64) -> Result<Self> {
        Self::build(sample, Bandwidth { h, fallback: false })
    }

    fn build(sample: &[f64], bandwidth: Bandwidth) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::DegenerateSample("empty sample".into()));
        }
        if let Some(i) = sample.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateSample(format!("non-finite value at index {i}")));
        }
        if !(bandwidth.h > 0.0 && bandwidth.h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive and finite, got {}",
                bandwidth.h
            )));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(DensityModel { sorted, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth.h
    }

    pub fn bandwidth_info(&self) -> Bandwidth {
        self.bandwidth
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    /// The sample in ascending order.
    pub fn sorted_sample(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// Indices of sample points within the kernel cutoff of `x`.
    fn window(&self, x: f64) -> std::ops::Range<usize> {
        let reach = CUTOFF * self.bandwidth.h;
        let lo = self.sorted.partition_point(|&v| v < x - reach);
        let hi = self.sorted.partition_point(|&v| v <= x + reach);
        lo..hi
    }

    /// Kernel sums `(sum exp(-u^2/2), sum u exp(-u^2/2))` with u = (x - x_i)/h.
    fn kernel_sums(&self, x: f64) -> (f64, f64) {
        let h = self.bandwidth.h;
        let mut s0 = KahanSum::default();
        let mut s1 = KahanSum::default();
        for &xi in &self.sorted[self.window(x)] {
            let u = (x - xi) / h;
            let e = (-0.5 * u * u).exp();
            s0.add(e);
            s1.add(u * e);
        }
        (s0.total(), s1.total())
    }

    fn pdf_norm(&self) -> f64 {
        INV_SQRT_2PI / (self.sorted.len() as f64 * self.bandwidth.h)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.kernel_sums(x).0 * self.pdf_norm()
    }

    pub fn pdf_deriv(&self, x: f64) -> f64 {
        -self.kernel_sums(x).1 * self.pdf_norm() / self.bandwidth.h
    }

    /// Density and derivative at every grid point.
    pub fn eval_grid(&self, grid: &EvalGrid) -> (Vec<f64>, Vec<f64>) {
        let norm = self.pdf_norm();
        let h = self.bandwidth.h;
        let pairs: Vec<(f64, f64)> = (0..grid.m)
            .into_par_iter()
            .map(|k| {
                let (s0, s1) = self.kernel_sums(grid.point(k));
                (s0 * norm, -s1 * norm / h)
            })
            .collect();
        pairs.into_iter().unzip()
    }
}

/// Uniform evaluation grid `lo, lo + spacing, ..., hi` with `m` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub lo: f64,
    pub hi: f64,
    pub m: usize,
}

impl EvalGrid {
    pub fn new(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!("grid needs m >= 2 points, got {m}")));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("grid needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(EvalGrid { lo, hi, m })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.m - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        if k + 1 == self.m {
            self.hi
        } else {
            self.lo + k as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(|k| self.point(k))
    }
}

pub fn kde_pdf(model: &DensityModel, x: f64) -> f64 {
    model.pdf(x)
}

pub fn kde_pdf_deriv(model: &DensityModel, x: f64) -> f64 {
    model.pdf_deriv(x)
}

/// Grid spanning the sample padded by [`GRID_PAD`] bandwidths on each side.
pub fn make_grid(model: &DensityModel, m: usize) -> Result<EvalGrid> {
    let pad = GRID_PAD * model.bandwidth();
    EvalGrid::new(model.min() - pad, model.max() + pad, m)
}

/// Type-7 (linear interpolation) quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn std_dev(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let mean = compensated_sum(sample.iter().copied()) / n;
    let ss = compensated_sum(sample.iter().map(|x| (x - mean) * (x - mean)));
    (ss / (n - 1.0)).sqrt()
}

/// Robust scale: min(sd, IQR / 1.349), or sd alone if the IQR is zero.
fn robust_scale(sample: &[f64]) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let sd = std_dev(sample);
    if iqr > 0.0 {
        sd.min(iqr / 1.349)
    } else {
        sd
    }
}

fn check_sample(sample: &[f64]) -> Result<()> {
    if sample.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "need at least 2 points, got {}",
            sample.len()
        )));
    }
    if let Some(i) = sample.iter().position(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample(format!("non-finite value at index {i}")));
    }
    let first = sample[0];
    if sample.iter().all(|&v| v == first) {
        return Err(Error::DegenerateSample("sample has zero variance".into()));
    }
    Ok(())
}

/// Sixth and fourth derivatives of the standard normal density.
#[inline]
fn phi6(u: f64) -> f64 {
    let u2 = u * u;
    (((u2 - 15.0) * u2 + 45.0) * u2 - 15.0) * INV_SQRT_2PI * (-0.5 * u2).exp()
}

#[inline]
fn phi4(u: f64) -> f64 {
    let u2 = u * u;
    ((u2 - 6.0) * u2 + 3.0) * INV_SQRT_2PI * (-0.5 * u2).exp()
}

/// Kernel estimate of the density functional psi_r at pilot bandwidth `g`:
/// `1 / (n^2 g^(r+1)) * sum_i sum_j K^(r)((x_i - x_j) / g)`, summed exactly
/// over all pairs.
fn psi_hat(sample: &[f64], g: f64, r: i32, kernel: fn(f64) -> f64) -> f64 {
    let n = sample.len();
    let off_diag = par_block_sum(n, 32, |i| {
        let xi = sample[i];
        compensated_sum(sample[i + 1..].iter().map(|&xj| kernel((xi - xj) / g)))
    });
    let total = n as f64 * kernel(0.0) + 2.0 * off_diag;
    total / ((n as f64).powi(2) * g.powi(r + 1))
}

/// Two-stage direct plug-in bandwidth (Sheather & Jones, 1991).
///
/// Fails with [`Error::BandwidthFailure`] when an intermediate quantity is
/// not finite or has the wrong sign. With exact pair sums the signs are
/// guaranteed, so in practice this means the data scale over- or underflows
/// `scale^9`. See [`select_bandwidth`] for the fallback.
pub fn sj_bandwidth(sample: &[f64]) -> Result<f64> {
    check_sample(sample)?;
    let n = sample.len() as f64;
    let scale = robust_scale(sample);
    if !(scale > 0.0) {
        return Err(Error::DegenerateSample("sample scale is zero".into()));
    }

    let psi8 = 105.0 / (32.0 * PI.sqrt() * scale.powi(9));
    // K^(6)(0) = -15/sqrt(2 pi), K^(4)(0) = 3/sqrt(2 pi).
    let g6 = (2.0 * 15.0 * INV_SQRT_2PI / (psi8 * n)).powf(1.0 / 9.0);
    let psi6 = psi_hat(sample, g6, 6, phi6);
    if !(psi6 < 0.0 && psi6.is_finite()) {
        return Err(Error::BandwidthFailure(format!("psi6 = {psi6} is not negative")));
    }
    let g4 = (-2.0 * 3.0 * INV_SQRT_2PI / (psi6 * n)).powf(1.0 / 7.0);
    let psi4 = psi_hat(sample, g4, 4, phi4);
    if !(psi4 > 0.0 && psi4.is_finite()) {
        return Err(Error::BandwidthFailure(format!("psi4 = {psi4} is not positive")));
    }
    // R(K) = 1/(2 sqrt(pi)), mu2(K) = 1.
    let h = (1.0 / (2.0 * PI.sqrt() * psi4 * n)).powf(0.2);
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::BandwidthFailure(format!("bandwidth {h} is not positive")));
    }
    Ok(h)
}

/// Silverman's rule of thumb, 0.9 * scale * n^(-1/5).
pub fn silverman_bandwidth(sample: &[f64]) -> Result<f64> {
    check_sample(sample)?;
    Ok(0.9 * robust_scale(sample) * (sample.len() as f64).powf(-0.2))
}

/// [`sj_bandwidth`], falling back to [`silverman_bandwidth`] on
/// `BandwidthFailure`. Degenerate samples are still rejected.
pub fn select_bandwidth(sample: &[f64]) -> Result<Bandwidth> {
    match sj_bandwidth(sample) {
        Ok(h) => Ok(Bandwidth { h, fallback: false }),
        Err(Error::BandwidthFailure(_)) => Ok(Bandwidth {
            h: silverman_bandwidth(sample)?,
            fallback: true,
        }),
        Err(e) => Err(e),
    }
}
