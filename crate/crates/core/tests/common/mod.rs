#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use fscid_core::ingest::{write_csv, TimeSeries};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

/// Copy the bundled two-regime fixture (config + CSVs) into `dir`.
pub fn copy_fixture(dir: &Path) -> PathBuf {
    for f in ["no2.csv", "o3.csv", "synthetic.toml"] {
        fs::copy(data_dir().join(f), dir.join(f)).unwrap();
    }
    dir.join("synthetic.toml")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let d = Normal::new(0.0, sigma).unwrap();
    let mut r = rng(seed);
    (0..n).map(|_| d.sample(&mut r)).collect()
}

pub fn ar1(n: usize, phi: f64, sd: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    let e = Normal::new(0.0, sd).unwrap();
    let mut x = Vec::with_capacity(n);
    let mut prev = 0.0;
    for _ in 0..n {
        prev = phi * prev + e.sample(r);
        x.push(prev);
    }
    x
}

/// Hourly multi-station CSV: daily cycle plus trend plus either a smooth
/// AR(1) or a white-noise remainder, with a few short gaps. Smooth stations
/// are named `Snn`, rough ones `Rnn`.
pub fn write_stations(path: &Path, start: (i32, u32, u32), hours: usize, smooth: &[bool], seed: u64) {
    let mut r = rng(seed);
    let origin = Utc.with_ymd_and_hms(start.0, start.1, start.2, 0, 0, 0).unwrap();
    let white = Normal::new(0.0, 3.0).unwrap();
    let series: Vec<TimeSeries> = smooth
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let rem = if s {
                ar1(hours, 0.95, 0.3, &mut r)
            } else {
                (0..hours).map(|_| white.sample(&mut r)).collect()
            };
            let level = 20.0 + 4.0 * j as f64;
            let mut values: Vec<f64> = (0..hours)
                .map(|t| {
                    let phase = 2.0 * std::f64::consts::PI * (t % 24) as f64 / 24.0;
                    level + 8.0 * phase.sin() + 1e-3 * t as f64 + rem[t]
                })
                .collect();
            let mut missing = vec![false; hours];
            for _ in 0..hours / 500 {
                let at = r.random_range(48..hours - 48);
                let len = r.random_range(1..=4);
                for m in &mut missing[at..at + len] {
                    *m = true;
                }
            }
            for (v, m) in values.iter_mut().zip(&missing) {
                if *m {
                    *v = f64::NAN;
                }
            }
            let id = format!("{}{:02}", if s { "S" } else { "R" }, j);
            TimeSeries::new(id, origin, 3600, values, missing).unwrap()
        })
        .collect();
    write_csv(&series, path).unwrap();
}

/// Every file under `root`, keyed by relative path.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}
