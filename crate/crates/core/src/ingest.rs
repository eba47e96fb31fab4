//! CSV ingestion, gap filling and alignment.
//!
//! Input files have a header row whose first column is `timestamp`
//! (ISO 8601) and whose remaining columns each hold one series. Empty cells
//! and `NaN` mark missing values. Timestamps that fall inside the covered
//! range but have no row are treated as missing as well.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled real-valued series.
///
/// Sample `i` sits at `origin + i * step`. Masked (missing) samples hold
/// `NaN` in `values`.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    id: String,
    origin: DateTime<Utc>,
    step: i64,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl TimeSeries {
    pub fn new(
        id: impl Into<String>,
        origin: DateTime<Utc>,
        step_seconds: i64,
        values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let id = id.into();
        if values.len() != missing.len() {
            return Err(Error::LengthMismatch(values.len(), missing.len()));
        }
        if values.len() < 2 {
            return Err(Error::SeriesTooShort {
                needed: 2,
                got: values.len(),
            });
        }
        if step_seconds <= 0 {
            return Err(Error::InvalidParameter(format!(
                "step must be positive, got {step_seconds}s"
            )));
        }
        let mut values = values;
        for (i, (v, &m)) in values.iter_mut().zip(&missing).enumerate() {
            if m {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::MalformedInput(format!(
                    "series {id}: non-finite unmasked value at index {i}"
                )));
            }
        }
        Ok(TimeSeries {
            id,
            origin,
            step: step_seconds,
            values,
            missing,
        })
    }

    /// A series with no missing values.
    pub fn complete(
        id: impl Into<String>,
        origin: DateTime<Utc>,
        step_seconds: i64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let missing = vec![false; values.len()];
        Self::new(id, origin, step_seconds, values, missing)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn origin(&self) -> DateTime<Utc> {
        self.origin
    }

    pub fn step_seconds(&self) -> i64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        !self.missing.iter().any(|&m| m)
    }

    pub fn n_missing(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.origin + TimeDelta::seconds(self.step * i as i64)
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.len() - 1)
    }

    /// Drop masked samples at both ends. `None` if fewer than two remain.
    pub fn trim_missing(&self) -> Option<TimeSeries> {
        let first = self.missing.iter().position(|&m| !m)?;
        let last = self.missing.iter().rposition(|&m| !m)?;
        if last == first {
            return None;
        }
        Some(TimeSeries {
            id: self.id.clone(),
            origin: self.timestamp(first),
            step: self.step,
            values: self.values[first..=last].to_vec(),
            missing: self.missing[first..=last].to_vec(),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

impl PartialEq for TimeSeries {
    /// Masked entries compare equal regardless of payload.
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.origin == other.origin
            && self.step == other.step
            && self.missing == other.missing
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.missing)
                .all(|((a, b), &m)| m || a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    pub delimiter: u8,
    /// Longest run of missing samples that [`fill_gaps`] will interpolate.
    pub max_gap: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            delimiter: b',',
            max_gap: 6,
        }
    }
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%:z", "%Y-%m-%d %H:%M:%S%.f%:z", "%Y-%m-%d %H:%M%:z"] {
        if let Ok(t) = DateTime::parse_from_str(s, fmt) {
            return Some(t.with_timezone(&Utc));
        }
    }
    // Naive timestamps, with or without trailing `Z`, are taken as UTC.
    let s = s.strip_suffix('Z').unwrap_or(s);
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

fn parse_cell(cell: &str, row: usize, col: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::MalformedInput(format!(
            "row {row}, column `{col}`: cannot parse `{cell}` as a finite number"
        ))),
    }
}

/// Smallest of the most frequent spacings.
fn modal_step(diffs: &[i64]) -> i64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &d in diffs {
        *counts.entry(d).or_default() += 1;
    }
    let mut best = (0, 0usize);
    for (&d, &c) in &counts {
        if c > best.1 {
            best = (d, c);
        }
    }
    best.0
}

pub fn parse_csv(path: impl AsRef<Path>, config: &IngestConfig) -> Result<Vec<TimeSeries>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_reader(file, config)
}

pub fn parse_csv_reader<R: Read>(reader: R, config: &IngestConfig) -> Result<Vec<TimeSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let malformed = |e: csv::Error| Error::MalformedInput(e.to_string());

    let headers = rdr.headers().map_err(malformed)?.clone();
    match headers.get(0) {
        Some(h) if h.trim_start_matches('\u{feff}').eq_ignore_ascii_case("timestamp") => {}
        other => {
            return Err(Error::MalformedInput(format!(
                "first column must be `timestamp`, found {other:?}"
            )))
        }
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    if names.is_empty() {
        return Err(Error::MalformedInput("no data columns".into()));
    }
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() || names[..i].contains(name) {
            return Err(Error::MalformedInput(format!("empty or duplicate column name `{name}`")));
        }
    }

    let mut times: Vec<DateTime<Utc>> = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(malformed)?;
        let line = row + 2;
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| {
            Error::MalformedInput(format!("row {line}: bad timestamp `{}`", &rec[0]))
        })?;
        if ts.timestamp_subsec_nanos() != 0 {
            return Err(Error::MalformedInput(format!(
                "row {line}: sub-second timestamps are not supported"
            )));
        }
        if let Some(prev) = times.last() {
            if ts <= *prev {
                return Err(Error::MalformedInput(format!(
                    "row {line}: timestamp {ts} is not after {prev}"
                )));
            }
        }
        times.push(ts);
        for (c, name) in names.iter().enumerate() {
            cells[c].push(parse_cell(&rec[c + 1], line, name)?);
        }
    }
    if times.len() < 2 {
        return Err(Error::MalformedInput(format!(
            "need at least 2 rows, found {}",
            times.len()
        )));
    }

    let diffs: Vec<i64> = times.windows(2).map(|w| (w[1] - w[0]).num_seconds()).collect();
    let step = modal_step(&diffs);
    if let Some((i, d)) = diffs.iter().enumerate().find(|(_, &d)| d % step != 0) {
        return Err(Error::IrregularSampling(format!(
            "spacing of {d}s after row {} is not a multiple of the {step}s step",
            i + 2
        )));
    }
    let origin = times[0];
    let n = ((*times.last().unwrap() - origin).num_seconds() / step) as usize + 1;
    let slots: Vec<usize> = times
        .iter()
        .map(|t| ((*t - origin).num_seconds() / step) as usize)
        .collect();

    names
        .into_iter()
        .zip(cells)
        .map(|(name, col)| {
            let mut values = vec![f64::NAN; n];
            let mut missing = vec![true; n];
            for (&slot, cell) in slots.iter().zip(col) {
                if let Some(v) = cell {
                    values[slot] = v;
                    missing[slot] = false;
                }
            }
            TimeSeries::new(name, origin, step, values, missing)
        })
        .collect()
}

/// Write series sharing origin, step and length as one CSV table.
pub fn write_csv(series: &[TimeSeries], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_writer(series, file)
}

pub fn write_csv_writer<W: Write>(series: &[TimeSeries], writer: W) -> Result<()> {
    let first = series
        .first()
        .ok_or_else(|| Error::InvalidParameter("no series to write".into()))?;
    for s in series {
        if s.origin != first.origin || s.step != first.step || s.len() != first.len() {
            return Err(Error::InvalidParameter(format!(
                "series {} is not aligned with {}",
                s.id, first.id
            )));
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_owned()];
    header.extend(series.iter().map(|s| s.id.clone()));
    w.write_record(&header)?;
    for i in 0..first.len() {
        let mut rec = vec![format_timestamp(first.timestamp(i))];
        rec.extend(series.iter().map(|s| {
            if s.missing[i] {
                String::new()
            } else {
                format!("{}", s.values[i])
            }
        }));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub(crate) fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Linearly interpolate every masked run of at most `max_gap` samples.
pub fn fill_gaps(ts: &TimeSeries, max_gap: usize) -> Result<TimeSeries> {
    let n = ts.len();
    let mut values = ts.values.clone();
    let mut i = 0;
    while i < n {
        if !ts.missing[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && ts.missing[i] {
            i += 1;
        }
        let len = i - start;
        if start == 0 || i == n || len > max_gap {
            return Err(Error::GapTooLarge {
                id: ts.id.clone(),
                start,
                len,
            });
        }
        let (left, right) = (values[start - 1], values[i]);
        let span = (len + 1) as f64;
        for (k, v) in values[start..i].iter_mut().enumerate() {
            let t = (k + 1) as f64 / span;
            *v = left + (right - left) * t;
        }
    }
    TimeSeries::complete(ts.id.clone(), ts.origin, ts.step, values)
}

/// Truncate every series to the common time interval.
pub fn align(series: &[TimeSeries]) -> Result<Vec<TimeSeries>> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    let step = first.step;
    for s in series {
        if s.step != step {
            return Err(Error::IrregularSampling(format!(
                "series {} has step {}s, series {} has {}s",
                s.id, s.step, first.id, step
            )));
        }
        if (s.origin - first.origin).num_seconds() % step != 0 {
            return Err(Error::IrregularSampling(format!(
                "series {} is sampled off the grid of series {}",
                s.id, first.id
            )));
        }
    }
    let start = series.iter().map(|s| s.origin).max().unwrap();
    let end = series.iter().map(TimeSeries::end).min().unwrap();
    if start > end {
        return Err(Error::NoOverlap);
    }
    let n = ((end - start).num_seconds() / step) as usize + 1;
    series
        .iter()
        .map(|s| {
            let off = ((start - s.origin).num_seconds() / step) as usize;
            TimeSeries::new(
                s.id.clone(),
                start,
                step,
                s.values[off..off + n].to_vec(),
                s.missing[off..off + n].to_vec(),
            )
        })
        .collect()
}
