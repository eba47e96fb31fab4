//! Python bindings for `fscid_core`.
//!
//! Errors surface as `fscid.FscidError` whose message starts with the error
//! kind, e.g. `DegenerateComplexity: ...`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use fscid_core::cluster::{self, CidMode};
use fscid_core::decompose::{self as stl, SeasonalWindow, StlParams};
use fscid_core::density::{self, DEFAULT_GRID_POINTS};
use fscid_core::infoplane;
use fscid_core::ingest::{self, IngestConfig};
use fscid_core::pipeline;
use fscid_core::Error;

create_exception!(fscid, FscidError, PyValueError);

fn err(e: Error) -> PyErr {
    FscidError::new_err(format!("{}: {e}", e.kind()))
}

fn mode(lenient: bool) -> CidMode {
    if lenient {
        CidMode::Lenient
    } else {
        CidMode::Strict
    }
}

#[pyclass(frozen, get_all, name = "TimeSeries")]
struct PyTimeSeries {
    id: String,
    /// ISO 8601 UTC timestamp of the first sample.
    origin: String,
    step_seconds: i64,
    /// Missing entries are NaN.
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl PyTimeSeries {
    fn from_core(ts: &ingest::TimeSeries) -> Self {
        PyTimeSeries {
            id: ts.id().to_owned(),
            origin: ts.origin().format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            step_seconds: ts.step_seconds(),
            values: ts.values().to_vec(),
            missing: ts.missing_mask().to_vec(),
        }
    }

    fn to_core(&self) -> PyResult<ingest::TimeSeries> {
        let origin = chrono_origin(&self.origin)?;
        ingest::TimeSeries::new(&self.id, origin, self.step_seconds, self.values.clone(), self.missing.clone())
            .map_err(err)
    }
}

fn chrono_origin(s: &str) -> PyResult<chrono::DateTime<chrono::Utc>> {
    chrono::DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&chrono::Utc))
        .map_err(|e| FscidError::new_err(format!("MalformedInput: origin `{s}`: {e}")))
}

#[pymethods]
impl PyTimeSeries {
    fn __len__(&self) -> usize {
        self.values.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TimeSeries(id={:?}, origin={}, step_seconds={}, len={})",
            self.id,
            self.origin,
            self.step_seconds,
            self.values.len()
        )
    }
}

/// Read a CSV whose first column is `timestamp` and whose other columns are series.
#[pyfunction]
fn parse_csv(path: PathBuf) -> PyResult<Vec<PyTimeSeries>> {
    let series = ingest::parse_csv(&path, &IngestConfig::default()).map_err(err)?;
    Ok(series.iter().map(PyTimeSeries::from_core).collect())
}

#[pyfunction]
#[pyo3(signature = (series, max_gap = 6))]
fn fill_gaps(series: &PyTimeSeries, max_gap: usize) -> PyResult<PyTimeSeries> {
    let ts = series.to_core()?;
    ingest::fill_gaps(&ts, max_gap).map(|t| PyTimeSeries::from_core(&t)).map_err(err)
}

#[pyfunction]
fn align(series: Vec<PyRef<'_, PyTimeSeries>>) -> PyResult<Vec<PyTimeSeries>> {
    let core: Vec<ingest::TimeSeries> = series.iter().map(|s| s.to_core()).collect::<PyResult<_>>()?;
    let out = ingest::align(&core).map_err(err)?;
    Ok(out.iter().map(PyTimeSeries::from_core).collect())
}

#[pyclass(frozen, get_all, name = "StlDecomposition")]
struct PyStl {
    trend: Vec<f64>,
    seasonal: Vec<f64>,
    remainder: Vec<f64>,
    period: usize,
}

/// STL of a gap-free series. `seasonal_window=None` means periodic.
#[pyfunction]
#[pyo3(signature = (values, period = 24, seasonal_window = None, trend_window = None, inner_iterations = 2, outer_iterations = 0))]
fn stl_decompose(
    values: Vec<f64>,
    period: usize,
    seasonal_window: Option<usize>,
    trend_window: Option<usize>,
    inner_iterations: usize,
    outer_iterations: usize,
) -> PyResult<PyStl> {
    let mut p = StlParams::for_period(period);
    if let Some(s) = seasonal_window {
        p.seasonal_window = SeasonalWindow::Span(s);
    }
    if let Some(t) = trend_window {
        p.trend_window = t;
    }
    p.inner_iterations = inner_iterations;
    p.outer_iterations = outer_iterations;
    let d = stl::stl_decompose_values(&values, &p).map_err(err)?;
    Ok(PyStl {
        trend: d.trend,
        seasonal: d.seasonal,
        remainder: d.remainder,
        period: d.period,
    })
}

#[pyfunction]
#[pyo3(signature = (y, span, degree = 1, weights = None))]
fn loess_smooth(y: Vec<f64>, span: usize, degree: usize, weights: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    stl::loess_smooth(&y, span, degree, weights.as_deref()).map_err(err)
}

#[pyfunction]
fn sj_bandwidth(sample: Vec<f64>) -> PyResult<f64> {
    density::sj_bandwidth(&sample).map_err(err)
}

/// Gaussian KDE. The bandwidth defaults to Sheather-Jones.
#[pyclass(frozen, name = "DensityModel")]
struct PyDensityModel(density::DensityModel);

#[pymethods]
impl PyDensityModel {
    #[new]
    #[pyo3(signature = (sample, bandwidth = None))]
    fn new(sample: Vec<f64>, bandwidth: Option<f64>) -> PyResult<Self> {
        let m = match bandwidth {
            Some(h) => density::DensityModel::with_bandwidth(&sample, h),
            None => density::DensityModel::fit(&sample),
        };
        m.map(PyDensityModel).map_err(err)
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.0.bandwidth()
    }

    /// True if Sheather-Jones failed and Silverman's rule was used.
    #[getter]
    fn fallback(&self) -> bool {
        self.0.bandwidth_info().fallback
    }

    fn pdf(&self, x: f64) -> f64 {
        self.0.pdf(x)
    }

    fn pdf_deriv(&self, x: f64) -> f64 {
        self.0.pdf_deriv(x)
    }

    /// `(x, f, f')` on the default evaluation grid with `m` points.
    #[pyo3(signature = (m = DEFAULT_GRID_POINTS))]
    fn grid(&self, m: usize) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let g = density::make_grid(&self.0, m).map_err(err)?;
        let (f, df) = self.0.eval_grid(&g);
        Ok((g.points().collect(), f, df))
    }

    /// Shannon entropy power and Fisher information on an `m`-point grid.
    #[pyo3(signature = (m = DEFAULT_GRID_POINTS))]
    fn sep_fim(&self, m: usize) -> PyResult<(f64, f64)> {
        let g = density::make_grid(&self.0, m).map_err(err)?;
        infoplane::sep_and_fim(&self.0, &g).map_err(err)
    }
}

#[pyclass(frozen, get_all, name = "FsPoint")]
struct PyFsPoint {
    id: String,
    sep: f64,
    fim: f64,
    product: f64,
    bandwidth: f64,
    n: usize,
    fallback_bandwidth_used: bool,
}

#[pymethods]
impl PyFsPoint {
    fn __repr__(&self) -> String {
        format!("FsPoint(id={:?}, sep={}, fim={}, product={})", self.id, self.sep, self.fim, self.product)
    }
}

#[pyfunction]
#[pyo3(signature = (id, remainder, grid_points = DEFAULT_GRID_POINTS))]
fn fs_point(id: &str, remainder: Vec<f64>, grid_points: usize) -> PyResult<PyFsPoint> {
    let p = infoplane::fs_point_with_grid(id, &remainder, grid_points).map_err(err)?;
    Ok(PyFsPoint {
        id: p.id,
        sep: p.sep,
        fim: p.fim,
        product: p.product,
        bandwidth: p.bandwidth,
        n: p.n,
        fallback_bandwidth_used: p.fallback_bandwidth_used,
    })
}

#[pyfunction]
fn complexity_estimate(x: Vec<f64>) -> PyResult<f64> {
    cluster::complexity_estimate(&x).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x, y, lenient = false))]
fn cid(x: Vec<f64>, y: Vec<f64>, lenient: bool) -> PyResult<f64> {
    cluster::cid_with_mode(&x, &y, mode(lenient)).map(|(d, _)| d).map_err(err)
}

#[pyclass(frozen, name = "DistanceMatrix")]
struct PyDistanceMatrix(cluster::DistanceMatrix);

#[pymethods]
impl PyDistanceMatrix {
    #[new]
    #[pyo3(signature = (rows, ids = None))]
    fn new(rows: Vec<Vec<f64>>, ids: Option<Vec<String>>) -> PyResult<Self> {
        let m = rows.len();
        let ids = ids.unwrap_or_else(|| (0..m).map(|i| i.to_string()).collect());
        let d = rows.into_iter().flatten().collect();
        cluster::DistanceMatrix::from_full(ids, d).map(PyDistanceMatrix).map_err(err)
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.0.ids().to_vec()
    }

    /// Pairs where the lenient zero-complexity guard was applied.
    #[getter]
    fn flagged(&self) -> Vec<(usize, usize)> {
        self.0.flagged.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        let m = self.0.len();
        if i >= m || j >= m {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!("({i}, {j}) out of range for {m}")));
        }
        Ok(self.0.get(i, j))
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        (0..self.0.len()).map(|i| self.0.row(i).to_vec()).collect()
    }
}

#[pyfunction]
#[pyo3(signature = (series, ids = None, lenient = false))]
fn distance_matrix(series: Vec<Vec<f64>>, ids: Option<Vec<String>>, lenient: bool) -> PyResult<PyDistanceMatrix> {
    let ids = ids.unwrap_or_else(|| (0..series.len()).map(|i| i.to_string()).collect());
    cluster::distance_matrix(&series, &ids, mode(lenient))
        .map(PyDistanceMatrix)
        .map_err(err)
}

#[pyclass(frozen, get_all, name = "Clustering")]
struct PyClustering {
    k: usize,
    labels: Vec<usize>,
    medoids: Vec<usize>,
    silhouettes: Vec<f64>,
    avg_silhouette: f64,
    cost: f64,
}

impl From<cluster::Clustering> for PyClustering {
    fn from(c: cluster::Clustering) -> Self {
        PyClustering {
            k: c.k,
            labels: c.labels,
            medoids: c.medoids,
            silhouettes: c.silhouettes,
            avg_silhouette: c.avg_silhouette,
            cost: c.cost,
        }
    }
}

#[pymethods]
impl PyClustering {
    fn __repr__(&self) -> String {
        format!("Clustering(k={}, avg_silhouette={}, cost={})", self.k, self.avg_silhouette, self.cost)
    }
}

#[pyfunction]
#[pyo3(signature = (dm, k, seed = 0, restarts = 20))]
fn partition_medoids(dm: &PyDistanceMatrix, k: usize, seed: u64, restarts: usize) -> PyResult<PyClustering> {
    cluster::partition_medoids(&dm.0, k, seed, restarts).map(Into::into).map_err(err)
}

#[pyfunction]
fn silhouette(dm: &PyDistanceMatrix, labels: Vec<usize>) -> PyResult<(Vec<f64>, f64)> {
    cluster::silhouette(&dm.0, &labels).map_err(err)
}

/// Best clustering by average silhouette and the `(k, avg)` curve.
#[pyfunction]
#[pyo3(signature = (dm, k_min = 2, k_max = 10, seed = 0, restarts = 20))]
fn select_k(
    dm: &PyDistanceMatrix,
    k_min: usize,
    k_max: usize,
    seed: u64,
    restarts: usize,
) -> PyResult<(PyClustering, Vec<(usize, f64)>)> {
    let sel = cluster::select_k(&dm.0, k_min, k_max, seed, restarts).map_err(err)?;
    Ok((sel.best.into(), sel.curve))
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    if a.len() != b.len() {
        return Err(err(Error::LengthMismatch(a.len(), b.len())));
    }
    Ok(cluster::adjusted_rand_index(&a, &b))
}

/// Run the full pipeline from a config file. Returns `(success, manifest_path)`.
#[pyfunction]
#[pyo3(signature = (config, output_dir = None, workers = None))]
fn run_pipeline(py: Python<'_>, config: PathBuf, output_dir: Option<PathBuf>, workers: Option<usize>) -> PyResult<(bool, String)> {
    let mut cfg = fscid_core::validate_config(&config).map_err(err)?;
    if let Some(o) = output_dir {
        cfg.output_dir = o;
    }
    cfg.workers = workers.unwrap_or_else(|| pipeline::resolve_workers(cfg.workers));
    let summary = py.detach(|| pipeline::run_pipeline(&cfg)).map_err(err)?;
    Ok((summary.success(), summary.manifest.display().to_string()))
}

#[pymodule]
fn fscid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FscidError", m.py().get_type::<FscidError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyTimeSeries>()?;
    m.add_class::<PyStl>()?;
    m.add_class::<PyDensityModel>()?;
    m.add_class::<PyFsPoint>()?;
    m.add_class::<PyDistanceMatrix>()?;
    m.add_class::<PyClustering>()?;
    m.add_function(wrap_pyfunction!(parse_csv, m)?)?;
    m.add_function(wrap_pyfunction!(fill_gaps, m)?)?;
    m.add_function(wrap_pyfunction!(align, m)?)?;
    m.add_function(wrap_pyfunction!(stl_decompose, m)?)?;
    m.add_function(wrap_pyfunction!(loess_smooth, m)?)?;
    m.add_function(wrap_pyfunction!(sj_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(fs_point, m)?)?;
    m.add_function(wrap_pyfunction!(complexity_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(cid, m)?)?;
    m.add_function(wrap_pyfunction!(distance_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(partition_medoids, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
