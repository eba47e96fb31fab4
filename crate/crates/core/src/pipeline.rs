//! End-to-end analysis: ingest, STL, Fisher-Shannon plane, CID clustering.
//!
//! Each configured input (one variable, e.g. a pollutant, measured by several
//! stations) is processed independently; a failure in one does not stop the
//! others. Output layout under `output_dir`:
//!
//! ```text
//! manifest.json
//! silhouette.svg                 all variables, average silhouette vs k
//! <name>/fs_points.json
//! <name>/distance_matrix.csv
//! <name>/clustering.json
//! <name>/fs_plane.svg
//! <name>/silhouette.svg
//! <name>/components/<id>.csv    with emit_components
//! <name>/density/<id>.csv       with emit_density
//! ```
//!
//! All artifacts are a deterministic function of the config: no wall-clock
//! times are recorded and parallel reductions use a fixed split.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::{distance_matrix, select_k, CidMode, DistanceMatrix, KSelection};
use crate::config::RunConfig;
use crate::decompose::{stl_decompose, StlDecomposition, StlParams};
use crate::density::{make_grid, DensityModel, GRID_PAD};
use crate::error::{Error, Result};
use crate::infoplane::{fs_point_from_model, FsPoint, DENSITY_FLOOR};
use crate::ingest::{align, fill_gaps, format_timestamp, parse_csv, IngestConfig, TimeSeries};
use crate::svg;

/// Env var overriding the worker count.
pub const WORKERS_ENV: &str = "FSCID_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dropped {
    pub id: String,
    pub kind: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flag {
    pub id: String,
    pub reason: String,
}

/// Aligned, gap-free series ready for decomposition.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub series: Vec<TimeSeries>,
    pub dropped: Vec<Dropped>,
}

/// Parse a CSV, trim missing ends, align to the common interval and fill
/// short gaps. Series that cannot be used are dropped with a reason; it is
/// an error if none survive.
pub fn prepare_series(path: &Path, max_gap: usize) -> Result<Prepared> {
    let raw = parse_csv(path, &IngestConfig::default())?;
    let mut dropped = Vec::new();
    let mut trimmed = Vec::new();
    for s in raw {
        match s.trim_missing() {
            Some(t) => trimmed.push(t),
            None => dropped.push(Dropped {
                id: s.id().to_owned(),
                kind: "SeriesTooShort".into(),
                reason: "fewer than two observed values".into(),
            }),
        }
    }
    let aligned = align(&trimmed)?;
    let mut series = Vec::new();
    for s in &aligned {
        match fill_gaps(s, max_gap) {
            Ok(f) => series.push(f),
            Err(e @ Error::GapTooLarge { .. }) => dropped.push(Dropped {
                id: s.id().to_owned(),
                kind: e.kind().into(),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if series.is_empty() {
        return Err(Error::MalformedInput(format!(
            "{}: no usable series after gap filling",
            path.display()
        )));
    }
    Ok(Prepared { series, dropped })
}

/// Zero mean, unit sample variance; constant input is returned unchanged.
pub fn standardized(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd > 0.0 {
        x.iter().map(|v| (v - mean) / sd).collect()
    } else {
        x.to_vec()
    }
}

/// Everything computed for one input file.
#[derive(Debug, Clone)]
pub struct VariableAnalysis {
    pub name: String,
    pub series: Vec<TimeSeries>,
    pub dropped: Vec<Dropped>,
    pub decompositions: Vec<StlDecomposition>,
    /// Samples the KDE was fitted to (remainders, standardized if asked).
    pub analyzed: Vec<Vec<f64>>,
    pub fs_points: Vec<FsPoint>,
    pub distances: DistanceMatrix,
    pub selection: Option<KSelection>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub stl: StlParams,
    pub grid_points: usize,
    pub standardize: bool,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub restarts: usize,
    pub cid_mode: CidMode,
    /// When false, the input columns are taken as remainders and STL is skipped.
    pub decompose: bool,
}

impl From<&RunConfig> for AnalysisOptions {
    fn from(c: &RunConfig) -> Self {
        AnalysisOptions {
            stl: c.stl.clone(),
            grid_points: c.grid_points,
            standardize: c.standardize,
            k_min: c.k_min,
            k_max: c.k_max,
            seed: c.seed,
            restarts: c.restarts,
            cid_mode: c.cid_mode,
            decompose: true,
        }
    }
}

/// Decompose each series and keep the remainders.
pub fn decompose_all(series: &[TimeSeries], stl: &StlParams) -> Result<Vec<StlDecomposition>> {
    series.par_iter().map(|s| stl_decompose(s, stl)).collect()
}

/// Identity "decomposition": zero trend and seasonal, the values as remainder.
fn passthrough(series: &[TimeSeries], period: usize) -> Vec<StlDecomposition> {
    series
        .iter()
        .map(|s| StlDecomposition {
            trend: vec![0.0; s.len()],
            seasonal: vec![0.0; s.len()],
            remainder: s.values().to_vec(),
            period,
        })
        .collect()
}

pub fn fs_points_for(ids: &[String], samples: &[Vec<f64>], grid_points: usize) -> Result<Vec<FsPoint>> {
    ids.par_iter()
        .zip(samples.par_iter())
        .map(|(id, x)| {
            let model = DensityModel::fit(x).map_err(|e| with_series(id, e))?;
            fs_point_from_model(id, &model, grid_points).map_err(|e| with_series(id, e))
        })
        .collect()
}

fn with_series(id: &str, e: Error) -> Error {
    match e {
        Error::DegenerateSample(m) => Error::DegenerateSample(format!("series {id}: {m}")),
        Error::QuadratureFailure(m) => Error::QuadratureFailure(format!("series {id}: {m}")),
        other => other,
    }
}

/// Pick k by silhouette if there are enough series; otherwise explain why not.
pub fn cluster_for(dm: &DistanceMatrix, opts: &AnalysisOptions) -> Result<(Option<KSelection>, Option<String>)> {
    let m = dm.len();
    let k_max = opts.k_max.min(m.saturating_sub(1));
    if k_max < opts.k_min {
        return Ok((
            None,
            Some(format!(
                "clustering skipped: {m} series cannot be split into k >= {} clusters",
                opts.k_min
            )),
        ));
    }
    let sel = select_k(dm, opts.k_min, k_max, opts.seed, opts.restarts)?;
    Ok((Some(sel), None))
}

pub fn analyze_variable(name: &str, path: &Path, max_gap: usize, opts: &AnalysisOptions) -> Result<VariableAnalysis> {
    let Prepared { series, dropped } = prepare_series(path, max_gap)?;
    let decompositions = if opts.decompose {
        decompose_all(&series, &opts.stl)?
    } else {
        passthrough(&series, opts.stl.period)
    };
    let analyzed: Vec<Vec<f64>> = decompositions
        .iter()
        .map(|d| {
            if opts.standardize {
                standardized(&d.remainder)
            } else {
                d.remainder.clone()
            }
        })
        .collect();
    let ids: Vec<String> = series.iter().map(|s| s.id().to_owned()).collect();
    let fs_points = fs_points_for(&ids, &analyzed, opts.grid_points)?;
    let remainders: Vec<&[f64]> = decompositions.iter().map(|d| d.remainder.as_slice()).collect();
    let distances = distance_matrix(&remainders, &ids, opts.cid_mode)?;
    let (selection, note) = cluster_for(&distances, opts)?;
    Ok(VariableAnalysis {
        name: name.to_owned(),
        series,
        dropped,
        decompositions,
        analyzed,
        fs_points,
        distances,
        selection,
        notes: note.into_iter().collect(),
    })
}

#[derive(Debug, Serialize)]
struct CurvePoint {
    k: usize,
    avg_silhouette: f64,
}

#[derive(Debug, Serialize)]
struct ClusteringReport<'a> {
    variable: &'a str,
    k: usize,
    labels: BTreeMap<&'a str, usize>,
    medoids: Vec<&'a str>,
    silhouettes: BTreeMap<&'a str, f64>,
    avg_silhouette: f64,
    total_medoid_distance: f64,
    per_k_silhouette_curve: Vec<CurvePoint>,
    seed: u64,
    restarts: usize,
}

/// Clustering JSON: labels and silhouettes keyed by series id.
pub fn clustering_json(name: &str, ids: &[String], sel: &KSelection, seed: u64, restarts: usize) -> Result<String> {
    let c = &sel.best;
    let report = ClusteringReport {
        variable: name,
        k: c.k,
        labels: ids.iter().map(String::as_str).zip(c.labels.iter().copied()).collect(),
        medoids: c.medoids.iter().map(|&i| ids[i].as_str()).collect(),
        silhouettes: ids.iter().map(String::as_str).zip(c.silhouettes.iter().copied()).collect(),
        avg_silhouette: c.avg_silhouette,
        total_medoid_distance: c.cost,
        per_k_silhouette_curve: sel
            .curve
            .iter()
            .map(|&(k, avg_silhouette)| CurvePoint { k, avg_silhouette })
            .collect(),
        seed,
        restarts,
    };
    Ok(serde_json::to_string_pretty(&report)? + "\n")
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Safe file stem for a series id.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

pub fn components_csv<W: Write>(ts: &TimeSeries, d: &StlDecomposition, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["timestamp", "trend", "seasonal", "remainder"])?;
    for i in 0..d.len() {
        w.write_record([
            format_timestamp(ts.timestamp(i)),
            format!("{}", d.trend[i]),
            format!("{}", d.seasonal[i]),
            format!("{}", d.remainder[i]),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))
}

pub fn density_csv<W: Write>(sample: &[f64], bandwidth: f64, grid_points: usize, w: W) -> Result<()> {
    let model = DensityModel::with_bandwidth(sample, bandwidth)?;
    let grid = make_grid(&model, grid_points)?;
    let (f, df) = model.eval_grid(&grid);
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["x", "pdf", "pdf_deriv"])?;
    for (k, x) in grid.points().enumerate() {
        w.write_record([format!("{x}"), format!("{}", f[k]), format!("{}", df[k])])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))
}

/// Write one variable's artifacts; returns their paths relative to `root`.
fn write_variable(root: &Path, a: &VariableAnalysis, cfg: &RunConfig) -> Result<Vec<String>> {
    let dir_name = file_stem(&a.name);
    let dir = root.join(&dir_name);
    create_dir(&dir)?;
    let mut written = Vec::new();
    let mut put = |rel: String, bytes: &[u8]| -> Result<()> {
        write_file(&root.join(&rel), bytes)?;
        written.push(rel);
        Ok(())
    };

    put(
        format!("{dir_name}/fs_points.json"),
        (serde_json::to_string_pretty(&a.fs_points)? + "\n").as_bytes(),
    )?;
    let mut buf = Vec::new();
    a.distances.write_csv(&mut buf)?;
    put(format!("{dir_name}/distance_matrix.csv"), &buf)?;

    let ids: Vec<String> = a.series.iter().map(|s| s.id().to_owned()).collect();
    if let Some(sel) = &a.selection {
        put(
            format!("{dir_name}/clustering.json"),
            clustering_json(&a.name, &ids, sel, cfg.seed, cfg.restarts)?.as_bytes(),
        )?;
    }
    if cfg.emit_svg {
        let labels = a.selection.as_ref().map(|s| s.best.labels.as_slice());
        let plane = svg::fs_plane(&format!("{}: Fisher-Shannon plane", a.name), &a.fs_points, labels);
        put(format!("{dir_name}/fs_plane.svg"), plane.as_bytes())?;
        if let Some(sel) = &a.selection {
            let curve = svg::silhouette_curves(
                &format!("{}: average silhouette width", a.name),
                &[(a.name.clone(), sel.curve.clone())],
            );
            put(format!("{dir_name}/silhouette.svg"), curve.as_bytes())?;
        }
    }
    if cfg.emit_components {
        create_dir(&dir.join("components"))?;
        for (ts, d) in a.series.iter().zip(&a.decompositions) {
            let mut buf = Vec::new();
            components_csv(ts, d, &mut buf)?;
            put(format!("{dir_name}/components/{}.csv", file_stem(ts.id())), &buf)?;
        }
    }
    if cfg.emit_density {
        create_dir(&dir.join("density"))?;
        for (p, x) in a.fs_points.iter().zip(&a.analyzed) {
            let mut buf = Vec::new();
            density_csv(x, p.bandwidth, cfg.grid_points, &mut buf)?;
            put(format!("{dir_name}/density/{}.csv", file_stem(&p.id)), &buf)?;
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        ErrorReport {
            kind: e.kind().to_owned(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VariableReport {
    pub name: String,
    pub input: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_seconds: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    pub series: Vec<String>,
    pub dropped: Vec<Dropped>,
    pub flagged: Vec<Flag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chosen_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub silhouette_curve: Option<Vec<(usize, f64)>>,
    pub notes: Vec<String>,
    pub artifacts: Vec<String>,
}

impl VariableReport {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Fixed methodological choices, echoed into the manifest.
#[derive(Debug, Serialize)]
struct Conventions {
    entropy: &'static str,
    kernel: &'static str,
    bandwidth: &'static str,
    bandwidth_fallback: &'static str,
    grid_padding_bandwidths: f64,
    density_floor_relative: f64,
    quadrature: &'static str,
    stl_degrees: &'static str,
    stl_low_pass_window: usize,
    gap_policy: &'static str,
    cid_degenerate: &'static str,
    partitioning: &'static str,
    silhouette_singletons: &'static str,
    k_selection: &'static str,
}

fn conventions(cfg: &RunConfig) -> Conventions {
    Conventions {
        entropy: "H = -integral f log f; N = exp(2H)/(2 pi e)",
        kernel: "Gaussian, f(x) = 1/(n h sqrt(2 pi)) sum exp(-((x-x_i)/h)^2/2)",
        bandwidth: "Sheather-Jones two-stage direct plug-in, scale = min(sd, IQR/1.349), exact pairwise sums",
        bandwidth_fallback: "Silverman 0.9 * scale * n^(-1/5) when the plug-in is not finite or has the wrong sign",
        grid_padding_bandwidths: GRID_PAD,
        density_floor_relative: DENSITY_FLOOR,
        quadrature: "trapezoid on uniform grid",
        stl_degrees: "seasonal 0, trend 1, low-pass 1; periodic window uses cycle-subseries means",
        stl_low_pass_window: cfg.stl.low_pass_window(),
        gap_policy: "masked ends trimmed, series aligned to common interval, interior gaps <= max_gap linearly interpolated, otherwise series dropped",
        cid_degenerate: "both CE = 0 -> CF = 1; one CE = 0 -> error (strict) or CF = max/(1e-12 max) (lenient, flagged)",
        partitioning: "k-medoids: nearest-medoid / medoid-update alternation then best-swap refinement; best of seeded restarts by total distance; ties -> lowest index",
        silhouette_singletons: "s = 0",
        k_selection: "max average silhouette over k in [k_min, min(k_max, m-1)]; ties -> smaller k",
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    conventions: Conventions,
    variables: &'a [VariableReport],
}

#[derive(Debug)]
pub struct RunSummary {
    pub variables: Vec<VariableReport>,
    pub manifest: PathBuf,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        self.variables.iter().all(VariableReport::ok)
    }
}

fn process_variable(cfg: &RunConfig, name: &str, path: &Path, raw: &str, opts: &AnalysisOptions) -> VariableReport {
    let mut report = VariableReport {
        name: name.to_owned(),
        input: raw.to_owned(),
        status: "ok",
        error: None,
        origin: None,
        step_seconds: None,
        n_samples: None,
        series: Vec::new(),
        dropped: Vec::new(),
        flagged: Vec::new(),
        chosen_k: None,
        silhouette_curve: None,
        notes: Vec::new(),
        artifacts: Vec::new(),
    };
    let result = analyze_variable(name, path, cfg.max_gap, opts)
        .and_then(|a| write_variable(&cfg.output_dir, &a, cfg).map(|w| (a, w)));
    match result {
        Ok((a, written)) => {
            let first = &a.series[0];
            report.origin = Some(format_timestamp(first.origin()));
            report.step_seconds = Some(first.step_seconds());
            report.n_samples = Some(first.len());
            report.series = a.series.iter().map(|s| s.id().to_owned()).collect();
            report.dropped = a.dropped;
            for p in a.fs_points.iter().filter(|p| p.fallback_bandwidth_used) {
                report.flagged.push(Flag {
                    id: p.id.clone(),
                    reason: "Sheather-Jones failed; Silverman bandwidth used".into(),
                });
            }
            for &(i, j) in &a.distances.flagged {
                let ids = a.distances.ids();
                report.flagged.push(Flag {
                    id: format!("{}|{}", ids[i], ids[j]),
                    reason: "lenient CID guard applied (one series has zero complexity)".into(),
                });
            }
            if let Some(sel) = &a.selection {
                report.chosen_k = Some(sel.best.k);
                report.silhouette_curve = Some(sel.curve.clone());
            }
            report.notes = a.notes;
            report.artifacts = written;
        }
        Err(e) => {
            report.status = "error";
            report.error = Some(ErrorReport::from(&e));
        }
    }
    report
}

/// Worker count: the env override wins, then the config, then all cores.
pub fn resolve_workers(config_workers: usize) -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(config_workers)
}

/// Run every configured input. Per-variable failures are recorded in the
/// returned summary and in the manifest; only failures to create the output
/// directory or write the manifest surface as `Err`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    create_dir(&cfg.output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let opts = AnalysisOptions::from(cfg);
    let variables: Vec<VariableReport> = pool.install(|| {
        cfg.inputs
            .par_iter()
            .map(|inp| process_variable(cfg, &inp.name, &inp.path, &inp.raw, &opts))
            .collect()
    });

    if cfg.emit_svg {
        let curves: Vec<(String, Vec<(usize, f64)>)> = variables
            .iter()
            .filter_map(|v| v.silhouette_curve.clone().map(|c| (v.name.clone(), c)))
            .collect();
        if !curves.is_empty() {
            let svg = svg::silhouette_curves("Average silhouette width", &curves);
            write_file(&cfg.output_dir.join("silhouette.svg"), svg.as_bytes())?;
        }
    }
    let manifest = Manifest {
        tool: "fscid",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        conventions: conventions(cfg),
        variables: &variables,
    };
    let path = cfg.output_dir.join("manifest.json");
    write_file(&path, (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())?;
    Ok(RunSummary {
        variables,
        manifest: path,
    })
}
