//! Seasonal-trend decomposition by loess (STL), additive model.
//!
//! The inner loop follows Cleveland et al. (1990): detrend, smooth each
//! cycle-subseries (extended by one period at both ends), low-pass filter the
//! result with moving averages of lengths `period`, `period` and 3 followed
//! by a loess pass, subtract to get the seasonal component, then fit the
//! trend to the deseasonalized series. Optional outer iterations reweight
//! points by a bisquare of the remainder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeasonalWindow {
    /// Cycle-subseries are replaced by their means, so the seasonal
    /// component repeats exactly every period.
    Periodic(PeriodicTag),
    Span(usize),
}

/// Serializes as the string `"periodic"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodicTag {
    Periodic,
}

impl SeasonalWindow {
    pub const PERIODIC: SeasonalWindow = SeasonalWindow::Periodic(PeriodicTag::Periodic);

    pub fn is_periodic(&self) -> bool {
        matches!(self, SeasonalWindow::Periodic(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StlParams {
    pub period: usize,
    pub seasonal_window: SeasonalWindow,
    pub trend_window: usize,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
}

pub(crate) fn next_odd(x: f64) -> usize {
    let n = x.ceil() as usize;
    if n.is_multiple_of(2) {
        n + 1
    } else {
        n
    }
}

impl StlParams {
    /// Defaults for a fixed cycle of `period` samples.
    pub fn for_period(period: usize) -> Self {
        StlParams {
            period,
            seasonal_window: SeasonalWindow::PERIODIC,
            trend_window: next_odd(1.5 * period as f64).max(3),
            inner_iterations: 2,
            outer_iterations: 0,
        }
    }

    pub fn low_pass_window(&self) -> usize {
        next_odd(self.period as f64).max(3)
    }

    pub fn validate(&self) -> Result<()> {
        let odd = |name: &str, w: usize| {
            if w < 3 || w.is_multiple_of(2) {
                Err(Error::InvalidParameter(format!(
                    "{name} must be odd and >= 3, got {w}"
                )))
            } else {
                Ok(())
            }
        };
        if self.period < 2 {
            return Err(Error::InvalidParameter(format!(
                "period must be >= 2, got {}",
                self.period
            )));
        }
        if let SeasonalWindow::Span(w) = self.seasonal_window {
            odd("seasonal_window", w)?;
        }
        odd("trend_window", self.trend_window)?;
        if self.inner_iterations < 1 {
            return Err(Error::InvalidParameter("inner_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for StlParams {
    fn default() -> Self {
        Self::for_period(24)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StlDecomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub remainder: Vec<f64>,
    pub period: usize,
}

impl StlDecomposition {
    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }
}

#[inline]
fn tricube(r: f64, h: f64) -> f64 {
    if r <= 0.001 * h {
        1.0
    } else if r <= 0.999 * h {
        let u = r / h;
        let t = 1.0 - u * u * u;
        t * t * t
    } else {
        0.0
    }
}

/// Weighted least-squares polynomial fit of `y[lo..=hi]` (abscissae are the
/// indices) evaluated at `x`. Returns `None` if every weight is zero.
///
/// If the local design is rank deficient at the requested degree the degree
/// is lowered until the fit is well posed.
fn local_fit(
    y: &[f64],
    x: f64,
    lo: usize,
    hi: usize,
    h: f64,
    degree: usize,
    rw: Option<&[f64]>,
) -> Option<f64> {
    let mut w = Vec::with_capacity(hi - lo + 1);
    let mut wsum = 0.0;
    for j in lo..=hi {
        let mut wj = tricube((j as f64 - x).abs(), h);
        if let Some(rw) = rw {
            wj *= rw[j];
        }
        w.push(wj);
        wsum += wj;
    }
    if wsum <= 0.0 {
        return None;
    }
    // Centre and scale the abscissa on the evaluation point.
    let scale = h.max(1.0);
    let mut deg = degree.min(2);
    loop {
        let p = deg + 1;
        let mut ata = [[0.0f64; 3]; 3];
        let mut aty = [0.0f64; 3];
        for (k, &wj) in w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            let u = ((lo + k) as f64 - x) / scale;
            let basis = [1.0, u, u * u];
            for r in 0..p {
                aty[r] += wj * basis[r] * y[lo + k];
                for c in 0..p {
                    ata[r][c] += wj * basis[r] * basis[c];
                }
            }
        }
        if let Some(coef) = solve_small(&mut ata, &mut aty, p) {
            // Evaluating at u = 0 leaves only the intercept.
            return Some(coef);
        }
        if deg == 0 {
            return None;
        }
        deg -= 1;
    }
}

/// Solve the `p x p` normal equations by Gaussian elimination with partial
/// pivoting and return the first coefficient, or `None` when singular.
fn solve_small(a: &mut [[f64; 3]; 3], b: &mut [f64; 3], p: usize) -> Option<f64> {
    let norm = (0..p).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    if norm == 0.0 {
        return None;
    }
    let tol = 1e-10 * norm;
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= tol {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..p {
            let f = a[row][col] / a[col][col];
            for c in col..p {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..p).rev() {
        let mut s = b[row];
        for c in row + 1..p {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x[0])
}

/// Loess fit at a (possibly out-of-range) position `x` using the `span`
/// nearest indices of `y`.
fn loess_at(y: &[f64], x: f64, span: usize, degree: usize, rw: Option<&[f64]>) -> Option<f64> {
    let n = y.len();
    let (lo, hi) = if span >= n {
        (0, n - 1)
    } else {
        let half = (span - 1) / 2;
        let centre = x.round().clamp(0.0, (n - 1) as f64) as usize;
        let lo = centre.saturating_sub(half).min(n - span);
        (lo, lo + span - 1)
    };
    let mut h = (x - lo as f64).max(hi as f64 - x);
    if span > n {
        h += ((span - n) / 2) as f64;
    }
    local_fit(y, x, lo, hi, h, degree, rw)
}

/// Locally weighted polynomial smoothing of an equally spaced sequence.
///
/// Each output point is the value at that index of a weighted least-squares
/// polynomial of `degree` fitted to the `span` nearest points, with tricube
/// distance weights multiplied by the optional `weights`. A span of at least
/// `y.len()` uses every point, which is a global fit.
pub fn loess_smooth(
    y: &[f64],
    span: usize,
    degree: usize,
    weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if span < 3 || span.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "loess span must be odd and >= 3, got {span}"
        )));
    }
    if degree > 2 {
        return Err(Error::InvalidParameter(format!(
            "loess degree must be 0, 1 or 2, got {degree}"
        )));
    }
    if let Some(w) = weights {
        if w.len() != y.len() {
            return Err(Error::LengthMismatch(y.len(), w.len()));
        }
        if w.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidParameter("loess weights must be non-negative".into()));
        }
    }
    if y.is_empty() {
        return Ok(Vec::new());
    }
    Ok(loess_fill(y, span, degree, weights))
}

fn loess_fill(y: &[f64], span: usize, degree: usize, rw: Option<&[f64]>) -> Vec<f64> {
    (0..y.len())
        .map(|i| loess_at(y, i as f64, span, degree, rw).unwrap_or(y[i]))
        .collect()
}

fn moving_average(x: &[f64], len: usize) -> Vec<f64> {
    let m = x.len() + 1 - len;
    let mut out = Vec::with_capacity(m);
    let mut s: f64 = x[..len].iter().sum();
    out.push(s / len as f64);
    for i in 1..m {
        s += x[i + len - 1] - x[i - 1];
        out.push(s / len as f64);
    }
    out
}

struct Stl<'a> {
    y: &'a [f64],
    params: &'a StlParams,
    low_pass: usize,
}

const SEASONAL_DEGREE: usize = 0;
const TREND_DEGREE: usize = 1;
const LOW_PASS_DEGREE: usize = 1;

impl Stl<'_> {
    /// Smooth every cycle-subseries of `w`, extrapolating one value before and
    /// after. Returns a buffer of length `n + 2 * period`.
    fn cycle_subseries(&self, w: &[f64], rw: Option<&[f64]>) -> Vec<f64> {
        let n = w.len();
        let np = self.params.period;
        let mut c = vec![0.0; n + 2 * np];
        for phase in 0..np {
            let sub: Vec<f64> = w[phase..].iter().step_by(np).copied().collect();
            let sub_rw: Option<Vec<f64>> =
                rw.map(|r| r[phase..].iter().step_by(np).copied().collect());
            let k = sub.len();
            let fitted: Vec<f64> = match self.params.seasonal_window {
                SeasonalWindow::Periodic(_) => {
                    let mean = weighted_mean(&sub, sub_rw.as_deref());
                    vec![mean; k + 2]
                }
                SeasonalWindow::Span(span) => {
                    let rws = sub_rw.as_deref();
                    let mut f = Vec::with_capacity(k + 2);
                    let edge = |x: f64, fallback: f64| {
                        loess_at(&sub, x, span, SEASONAL_DEGREE, rws).unwrap_or(fallback)
                    };
                    f.push(edge(-1.0, sub[0]));
                    f.extend(loess_fill(&sub, span, SEASONAL_DEGREE, rws));
                    f.push(edge(k as f64, sub[k - 1]));
                    f
                }
            };
            for (m, v) in fitted.into_iter().enumerate() {
                c[phase + m * np] = v;
            }
        }
        c
    }

    fn low_pass(&self, c: &[f64]) -> Vec<f64> {
        let np = self.params.period;
        let a = moving_average(c, np);
        let b = moving_average(&a, np);
        let d = moving_average(&b, 3);
        loess_fill(&d, self.low_pass, LOW_PASS_DEGREE, None)
    }

    fn inner(&self, trend: &mut [f64], seasonal: &mut [f64], rw: Option<&[f64]>) {
        let n = self.y.len();
        let np = self.params.period;
        for _ in 0..self.params.inner_iterations {
            let detrended: Vec<f64> = self.y.iter().zip(trend.iter()).map(|(y, t)| y - t).collect();
            let c = self.cycle_subseries(&detrended, rw);
            let l = self.low_pass(&c);
            for i in 0..n {
                seasonal[i] = c[np + i] - l[i];
            }
            let deseason: Vec<f64> = self.y.iter().zip(seasonal.iter()).map(|(y, s)| y - s).collect();
            let t = loess_fill(&deseason, self.params.trend_window, TREND_DEGREE, rw);
            trend.copy_from_slice(&t);
        }
    }
}

fn weighted_mean(x: &[f64], w: Option<&[f64]>) -> f64 {
    match w {
        Some(w) => {
            let ws: f64 = w.iter().sum();
            if ws > 0.0 {
                x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / ws
            } else {
                x.iter().sum::<f64>() / x.len() as f64
            }
        }
        None => x.iter().sum::<f64>() / x.len() as f64,
    }
}

fn robustness_weights(resid: &[f64]) -> Vec<f64> {
    let mut abs: Vec<f64> = resid.iter().map(|r| r.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    let median = if n % 2 == 1 {
        abs[n / 2]
    } else {
        0.5 * (abs[n / 2 - 1] + abs[n / 2])
    };
    let cmad = 6.0 * median;
    resid
        .iter()
        .map(|r| {
            let r = r.abs();
            if r <= 0.001 * cmad {
                1.0
            } else if r <= 0.999 * cmad {
                let u = r / cmad;
                (1.0 - u * u).powi(2)
            } else {
                0.0
            }
        })
        .collect()
}

/// Decompose a gap-free series into trend, seasonal and remainder.
pub fn stl_decompose(ts: &TimeSeries, params: &StlParams) -> Result<StlDecomposition> {
    if !ts.is_complete() {
        return Err(Error::InvalidParameter(format!(
            "series {} has {} missing values; fill gaps first",
            ts.id(),
            ts.n_missing()
        )));
    }
    stl_decompose_values(ts.values(), params)
}

pub fn stl_decompose_values(y: &[f64], params: &StlParams) -> Result<StlDecomposition> {
    params.validate()?;
    let n = y.len();
    let np = params.period;
    if n < 2 * np {
        return Err(Error::SeriesTooShort {
            needed: 2 * np,
            got: n,
        });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::MalformedInput(format!("non-finite value at index {i}")));
    }
    let stl = Stl {
        y,
        params,
        low_pass: params.low_pass_window(),
    };
    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut rw: Option<Vec<f64>> = None;
    for outer in 0..=params.outer_iterations {
        stl.inner(&mut trend, &mut seasonal, rw.as_deref());
        if outer == params.outer_iterations {
            break;
        }
        let resid: Vec<f64> = (0..n).map(|i| y[i] - trend[i] - seasonal[i]).collect();
        rw = Some(robustness_weights(&resid));
    }
    if params.seasonal_window.is_periodic() {
        let mut sums = vec![0.0; np];
        let mut counts = vec![0usize; np];
        for (i, s) in seasonal.iter().enumerate() {
            sums[i % np] += s;
            counts[i % np] += 1;
        }
        for (i, s) in seasonal.iter_mut().enumerate() {
            *s = sums[i % np] / counts[i % np] as f64;
        }
    }
    let remainder = (0..n).map(|i| y[i] - seasonal[i] - trend[i]).collect();
    Ok(StlDecomposition {
        trend,
        seasonal,
        remainder,
        period: np,
    })
}
