//! Complexity-invariant distance (CID), k-medoids partitioning and
//! silhouette-based choice of the number of clusters.
//!
//! CID scales the Euclidean distance between two equal-length series by the
//! ratio of their complexity estimates, `max(CE) / min(CE)`, where
//! `CE(x) = sqrt(sum (x_i - x_{i+1})^2)`.
//!
//! Clustering works on the precomputed distance matrix, so cluster centres
//! are medoids rather than means. Ties are broken by lowest index
//! throughout.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::compensated_sum;

/// What to do when exactly one of two series has zero complexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CidMode {
    #[default]
    Strict,
    /// Replace the zero complexity by `1e-12 * max(CE)` and flag the pair.
    Lenient,
}

const LENIENT_EPS: f64 = 1e-12;

pub fn complexity_estimate(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            got: x.len(),
        });
    }
    Ok(compensated_sum(x.windows(2).map(|w| (w[0] - w[1]) * (w[0] - w[1]))).sqrt())
}

fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    compensated_sum(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b))).sqrt()
}

/// Correction factor from two complexity estimates. The flag is set when
/// the lenient epsilon guard was used.
fn correction_factor(ce_x: f64, ce_y: f64, mode: CidMode) -> Result<(f64, bool)> {
    let (lo, hi) = if ce_x <= ce_y { (ce_x, ce_y) } else { (ce_y, ce_x) };
    if hi == 0.0 {
        return Ok((1.0, false));
    }
    if lo == 0.0 {
        return match mode {
            CidMode::Strict => Err(Error::DegenerateComplexity(
                "one series is constant and the other is not".into(),
            )),
            CidMode::Lenient => Ok((hi / (LENIENT_EPS * hi), true)),
        };
    }
    Ok((hi / lo, false))
}

/// Complexity-invariant distance in strict mode.
pub fn cid(x: &[f64], y: &[f64]) -> Result<f64> {
    cid_with_mode(x, y, CidMode::Strict).map(|(d, _)| d)
}

/// CID and whether the pair needed the lenient epsilon guard.
pub fn cid_with_mode(x: &[f64], y: &[f64], mode: CidMode) -> Result<(f64, bool)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let (cf, flagged) = correction_factor(complexity_estimate(x)?, complexity_estimate(y)?, mode)?;
    Ok((cf * euclidean(x, y), flagged))
}

/// Symmetric matrix of pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    d: Vec<f64>,
    /// Pairs for which the lenient CID guard was applied.
    #[serde(default)]
    pub flagged: Vec<(usize, usize)>,
}

impl DistanceMatrix {
    /// Build from a full row-major matrix, checking symmetry and sign.
    pub fn from_full(ids: Vec<String>, d: Vec<f64>) -> Result<Self> {
        let m = ids.len();
        if d.len() != m * m {
            return Err(Error::LengthMismatch(d.len(), m * m));
        }
        for i in 0..m {
            if d[i * m + i] != 0.0 {
                return Err(Error::InvalidParameter(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..m {
                let v = d[i * m + j];
                if !(v.is_finite() && v >= 0.0) || v != d[j * m + i] {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({i}, {j}) = {v} breaks symmetry or non-negativity"
                    )));
                }
            }
        }
        Ok(DistanceMatrix {
            ids,
            d,
            flagged: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.ids.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.ids.len();
        &self.d[i * m..(i + 1) * m]
    }

    /// Reorder rows and columns: new index `a` is old index `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> DistanceMatrix {
        let m = self.len();
        let mut d = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                d[a * m + b] = self.get(perm[a], perm[b]);
            }
        }
        DistanceMatrix {
            ids: perm.iter().map(|&p| self.ids[p].clone()).collect(),
            d,
            flagged: Vec::new(),
        }
    }

    /// CSV with an `id` column followed by one column per series.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_owned()];
        header.extend(self.ids.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Pairwise CID matrix. Only the upper triangle is computed.
pub fn distance_matrix<S: AsRef<[f64]> + Sync>(
    series: &[S],
    ids: &[String],
    mode: CidMode,
) -> Result<DistanceMatrix> {
    let m = series.len();
    if ids.len() != m {
        return Err(Error::LengthMismatch(series.len(), ids.len()));
    }
    let pair_err = |i: usize, j: usize, e: Error| Error::Pair {
        a: ids[i].clone(),
        b: ids[j].clone(),
        source: Box::new(e),
    };
    let ce: Vec<f64> = series
        .iter()
        .enumerate()
        .map(|(i, s)| complexity_estimate(s.as_ref()).map_err(|e| pair_err(i, i, e)))
        .collect::<Result<_>>()?;
    if let Some(first) = series.first() {
        let n = first.as_ref().len();
        if let Some(j) = series.iter().position(|s| s.as_ref().len() != n) {
            return Err(pair_err(0, j, Error::LengthMismatch(n, series[j].as_ref().len())));
        }
    }
    let pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let values: Vec<(f64, bool)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (cf, flag) = correction_factor(ce[i], ce[j], mode).map_err(|e| pair_err(i, j, e))?;
            Ok((cf * euclidean(series[i].as_ref(), series[j].as_ref()), flag))
        })
        .collect::<Result<_>>()?;
    let mut d = vec![0.0; m * m];
    let mut flagged = Vec::new();
    for (&(i, j), &(v, flag)) in pairs.iter().zip(&values) {
        d[i * m + j] = v;
        d[j * m + i] = v;
        if flag {
            flagged.push((i, j));
        }
    }
    Ok(DistanceMatrix {
        ids: ids.to_vec(),
        d,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    /// Cluster index per series. Clusters are numbered by ascending medoid.
    pub labels: Vec<usize>,
    /// Series index of each cluster's medoid, ascending.
    pub medoids: Vec<usize>,
    pub silhouettes: Vec<f64>,
    pub avg_silhouette: f64,
    /// Sum of distances from each series to its medoid.
    pub cost: f64,
}

fn check_k(k: usize, m: usize) -> Result<()> {
    if k < 2 || k + 1 > m {
        return Err(Error::InvalidK(format!("k = {k} outside [2, {}]", m.saturating_sub(1))));
    }
    Ok(())
}

/// Nearest-medoid assignment; a medoid always belongs to its own cluster.
/// `medoids` must be ascending so index order equals medoid order.
fn assign(dm: &DistanceMatrix, medoids: &[usize]) -> (Vec<usize>, f64) {
    let m = dm.len();
    let mut labels = vec![0; m];
    let mut cost = Vec::with_capacity(m);
    for (i, label) in labels.iter_mut().enumerate() {
        if let Some(c) = medoids.iter().position(|&md| md == i) {
            *label = c;
            cost.push(0.0);
            continue;
        }
        let mut best = (0, dm.get(i, medoids[0]));
        for (c, &md) in medoids.iter().enumerate().skip(1) {
            let v = dm.get(i, md);
            if v < best.1 {
                best = (c, v);
            }
        }
        *label = best.0;
        cost.push(best.1);
    }
    (labels, compensated_sum(cost))
}

fn total_cost(dm: &DistanceMatrix, medoids: &[usize]) -> f64 {
    assign(dm, medoids).1
}

/// Each cluster's member with the smallest distance sum to its co-members.
fn update_medoids(dm: &DistanceMatrix, labels: &[usize], k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let mut best = (members[0], f64::INFINITY);
        for &cand in &members {
            let s = compensated_sum(members.iter().map(|&j| dm.get(cand, j)));
            if s < best.1 {
                best = (cand, s);
            }
        }
        out.push(best.0);
    }
    out.sort_unstable();
    out
}

/// Best single medoid/non-medoid swap, if it strictly lowers the cost.
fn best_swap(dm: &DistanceMatrix, medoids: &[usize], cost: f64) -> Option<(Vec<usize>, f64)> {
    let m = dm.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for slot in 0..medoids.len() {
        for cand in 0..m {
            if medoids.contains(&cand) {
                continue;
            }
            let mut trial = medoids.to_vec();
            trial[slot] = cand;
            trial.sort_unstable();
            let c = total_cost(dm, &trial);
            let bound = best.as_ref().map_or(cost, |b| b.1);
            if c < bound {
                best = Some((trial, c));
            }
        }
    }
    best
}

/// One restart from `medoids`: alternate assignment and medoid update to a
/// fixed point, then apply improving swaps until none remain. Every
/// intermediate cost is pushed onto `trace`.
fn refine(dm: &DistanceMatrix, mut medoids: Vec<usize>, trace: &mut Vec<f64>) -> (Vec<usize>, f64) {
    let k = medoids.len();
    medoids.sort_unstable();
    let mut cost = total_cost(dm, &medoids);
    trace.push(cost);
    loop {
        loop {
            let (labels, _) = assign(dm, &medoids);
            let next = update_medoids(dm, &labels, k);
            if next == medoids {
                break;
            }
            let next_cost = total_cost(dm, &next);
            // Equal cost means a tie between medoid sets; stop to avoid cycling.
            if next_cost >= cost {
                break;
            }
            medoids = next;
            cost = next_cost;
            trace.push(cost);
        }
        match best_swap(dm, &medoids, cost) {
            Some((next, c)) => {
                medoids = next;
                cost = c;
                trace.push(cost);
            }
            None => return (medoids, cost),
        }
    }
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

pub(crate) fn partition_traced(
    dm: &DistanceMatrix,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<(Clustering, Vec<Vec<f64>>)> {
    let m = dm.len();
    check_k(k, m)?;
    let restarts = restarts.max(1);
    let runs: Vec<(Vec<usize>, f64, Vec<f64>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(seed, r);
            let init = sample(&mut rng, m, k).into_vec();
            let mut trace = Vec::new();
            let (medoids, cost) = refine(dm, init, &mut trace);
            (medoids, cost, trace)
        })
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.1 < runs[best].1 {
            best = r;
        }
    }
    let medoids = runs[best].0.clone();
    let (labels, cost) = assign(dm, &medoids);
    let (silhouettes, avg_silhouette) = silhouette(dm, &labels)?;
    let traces = runs.into_iter().map(|r| r.2).collect();
    Ok((
        Clustering {
            k,
            labels,
            medoids,
            silhouettes,
            avg_silhouette,
            cost,
        },
        traces,
    ))
}

/// k-medoids over a distance matrix, best of `restarts` seeded random
/// initialisations by total within-cluster distance.
pub fn partition_medoids(
    dm: &DistanceMatrix,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<Clustering> {
    partition_traced(dm, k, seed, restarts).map(|(c, _)| c)
}

/// Per-point silhouette widths and their mean. Points alone in their
/// cluster get 0.
pub fn silhouette(dm: &DistanceMatrix, labels: &[usize]) -> Result<(Vec<f64>, f64)> {
    let m = dm.len();
    if labels.len() != m {
        return Err(Error::LengthMismatch(labels.len(), m));
    }
    let k = labels.iter().max().map_or(0, |&l| l + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if k < 2 {
        return Err(Error::InvalidK(format!("silhouette needs at least 2 clusters, got {k}")));
    }
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidParameter(format!("cluster {c} is empty")));
    }
    let s: Vec<f64> = (0..m)
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..m {
                if j != i {
                    sums[labels[j]] += dm.get(i, j);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    let avg = compensated_sum(s.iter().copied()) / m as f64;
    Ok((s, avg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub best: Clustering,
    /// `(k, average silhouette)` for every k tried.
    pub curve: Vec<(usize, f64)>,
}

/// Cluster for each k in `k_min..=k_max` and keep the highest average
/// silhouette; ties go to the smaller k.
pub fn select_k(
    dm: &DistanceMatrix,
    k_min: usize,
    k_max: usize,
    seed: u64,
    restarts: usize,
) -> Result<KSelection> {
    let m = dm.len();
    if k_min < 2 || k_min > k_max || k_max + 1 > m {
        return Err(Error::InvalidK(format!(
            "need 2 <= k_min ({k_min}) <= k_max ({k_max}) <= {}",
            m.saturating_sub(1)
        )));
    }
    let mut best: Option<Clustering> = None;
    let mut curve = Vec::new();
    for k in k_min..=k_max {
        let c = partition_medoids(dm, k, seed, restarts)?;
        curve.push((k, c.avg_silhouette));
        if best.as_ref().is_none_or(|b| c.avg_silhouette > b.avg_silhouette) {
            best = Some(c);
        }
    }
    Ok(KSelection {
        best: best.expect("k range is non-empty"),
        curve,
    })
}

/// Relabel clusters in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |&x| x + 1);
    let kb = b.iter().max().map_or(0, |&x| x + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let sum_a: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(n as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}
