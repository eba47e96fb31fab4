//! Fisher-Shannon information plane and complexity-invariant clustering for
//! collections of equally sampled time series.
//!
//! The pipeline runs per variable (e.g. one pollutant measured at several
//! stations):
//!
//! 1. [`ingest`]: read CSV, fill short gaps, align to a common interval.
//! 2. [`decompose`]: strip the daily cycle and trend with STL; the remainder
//!    is what gets analyzed.
//! 3. [`density`] + [`infoplane`]: Gaussian KDE with a Sheather-Jones
//!    bandwidth, then Shannon entropy power and Fisher information by
//!    quadrature.
//! 4. [`cluster`]: complexity-invariant distance matrix, k-medoids, and
//!    silhouette-driven choice of k.
//!
//! [`config`] and [`pipeline`] glue these together for the `fscid` binary.

pub mod cluster;
pub mod config;
pub mod decompose;
pub mod density;
pub mod error;
pub mod infoplane;
pub mod ingest;
pub mod pipeline;
mod sum;
mod svg;

pub use cluster::{
    cid, complexity_estimate, distance_matrix, partition_medoids, select_k, silhouette, CidMode,
    Clustering, DistanceMatrix, KSelection,
};
pub use config::{validate_config, RunConfig};
pub use decompose::{loess_smooth, stl_decompose, SeasonalWindow, StlDecomposition, StlParams};
pub use density::{kde_pdf, kde_pdf_deriv, make_grid, sj_bandwidth, Bandwidth, DensityModel, EvalGrid};
pub use error::{Error, Result};
pub use infoplane::{differential_entropy, fim, fs_point, sep, FsPoint};
pub use ingest::{align, fill_gaps, parse_csv, write_csv, IngestConfig, TimeSeries};
