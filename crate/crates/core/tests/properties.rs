mod common;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use fscid_core::cluster::{canonical_labels, cid, distance_matrix, select_k, silhouette, CidMode, DistanceMatrix};
use fscid_core::decompose::{stl_decompose_values, SeasonalWindow, StlParams};
use fscid_core::density::{kde_pdf, kde_pdf_deriv, sj_bandwidth, DensityModel};
use fscid_core::infoplane::fs_point_with_grid;
use fscid_core::ingest::{align, fill_gaps, parse_csv_reader, write_csv_writer, IngestConfig, TimeSeries};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn masked_series(id: &str, values: Vec<f64>, mask: Vec<bool>, start_hour: i64) -> TimeSeries {
    let origin = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::hours(start_hour);
    TimeSeries::new(id, origin, 3600, values, mask).unwrap()
}

fn series_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (3usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(-1e6f64..1e6, n),
            prop::collection::vec(prop::bool::weighted(0.15), n),
        )
            .prop_map(|(v, mut m)| {
                let last = m.len() - 1;
                m[0] = false;
                m[last] = false;
                (v, m)
            })
    })
}

fn sample_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 10..200).prop_filter("non-constant", |x| {
        x.iter().any(|v| *v != x[0])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn csv_round_trip((v1, m1) in series_strategy(), seed in 0u64..1000) {
        let n = v1.len();
        let v2: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37 + seed as f64).sin()).collect();
        let a = masked_series("a", v1, m1, 0);
        let b = masked_series("b", v2, vec![false; n], 0);
        let mut buf = Vec::new();
        write_csv_writer(&[a.clone(), b.clone()], &mut buf).unwrap();
        let back = parse_csv_reader(buf.as_slice(), &IngestConfig::default()).unwrap();
        prop_assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn fill_gaps_keeps_observed_values((v, m) in series_strategy()) {
        let ts = masked_series("s", v, m.clone(), 0);
        let filled = fill_gaps(&ts, usize::MAX).unwrap();
        prop_assert!(filled.is_complete());
        let (orig, out) = (ts.values(), filled.values());
        for i in 0..m.len() {
            if !m[i] {
                prop_assert_eq!(orig[i], out[i]);
            } else {
                let l = (0..i).rev().find(|&j| !m[j]).unwrap();
                let r = (i + 1..m.len()).find(|&j| !m[j]).unwrap();
                let (lo, hi) = (orig[l].min(orig[r]), orig[l].max(orig[r]));
                prop_assert!(out[i] >= lo - 1e-9 * hi.abs().max(1.0) && out[i] <= hi + 1e-9 * hi.abs().max(1.0));
            }
        }
    }

    #[test]
    fn align_gives_common_interval(starts in prop::collection::vec(0i64..20, 2..5), len in 25usize..40) {
        let series: Vec<TimeSeries> = starts
            .iter()
            .enumerate()
            .map(|(i, &s)| masked_series(&format!("s{i}"), (0..len).map(|t| t as f64).collect(), vec![false; len], s))
            .collect();
        let out = align(&series).unwrap();
        let n = out[0].len();
        prop_assert!(out.iter().all(|s| s.len() == n && s.origin() == out[0].origin()));
        let max_start = *starts.iter().max().unwrap();
        let min_start = *starts.iter().min().unwrap();
        prop_assert_eq!(n as i64, len as i64 - (max_start - min_start));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn stl_additive_periodic_and_shift(period in 3usize..13, cycles in 3usize..8, seed in 0u64..500, shift in -1e3f64..1e3) {
        let n = period * cycles + seed as usize % period;
        let noise = common::normal(n, 1.0, seed);
        let y: Vec<f64> = (0..n)
            .map(|i| 3.0 * (2.0 * std::f64::consts::PI * i as f64 / period as f64).sin() + 0.05 * i as f64 + noise[i])
            .collect();
        let params = StlParams::for_period(period);
        let d = stl_decompose_values(&y, &params).unwrap();
        for i in 0..n {
            prop_assert!((y[i] - d.trend[i] - d.seasonal[i] - d.remainder[i]).abs() <= 1e-9);
            if i >= period {
                prop_assert!((d.seasonal[i] - d.seasonal[i - period]).abs() <= 1e-9);
            }
        }
        let ys: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let s = stl_decompose_values(&ys, &params).unwrap();
        let tol = 1e-9 * (1.0 + shift.abs());
        for i in 0..n {
            prop_assert!((s.trend[i] - d.trend[i] - shift).abs() <= tol);
            prop_assert!((s.seasonal[i] - d.seasonal[i]).abs() <= tol);
            prop_assert!((s.remainder[i] - d.remainder[i]).abs() <= tol);
        }

        let mut windowed = params.clone();
        windowed.seasonal_window = SeasonalWindow::Span(7);
        windowed.outer_iterations = 1;
        let w = stl_decompose_values(&y, &windowed).unwrap();
        for i in 0..n {
            prop_assert!((y[i] - w.trend[i] - w.seasonal[i] - w.remainder[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn kde_nonnegative_and_derivative_consistent(x in sample_strategy(), probes in prop::collection::vec(-150.0f64..150.0, 10)) {
        let m = DensityModel::fit(&x).unwrap();
        let h = m.bandwidth();
        for &t in &probes {
            let f = kde_pdf(&m, t);
            prop_assert!(f >= 0.0 && f.is_finite());
            let d = 1e-2 * h;
            let cd = |d: f64| (kde_pdf(&m, t + d) - kde_pdf(&m, t - d)) / (2.0 * d);
            let fd = (4.0 * cd(d / 2.0) - cd(d)) / 3.0;
            let exact = kde_pdf_deriv(&m, t);
            let scale = exact.abs().max(f / h).max(1e-300);
            prop_assert!((fd - exact).abs() <= 1e-6 * scale, "t={} fd={} exact={}", t, fd, exact);
        }
    }

    #[test]
    fn bandwidth_equivariant(x in sample_strategy(), a in 0.01f64..100.0, b in -1e3f64..1e3) {
        let h = sj_bandwidth(&x).unwrap();
        let y: Vec<f64> = x.iter().map(|v| a * v).collect();
        prop_assert!(close(sj_bandwidth(&y).unwrap(), a * h, 1e-12));
        let z: Vec<f64> = x.iter().map(|v| v + b).collect();
        prop_assert!(close(sj_bandwidth(&z).unwrap(), h, 1e-9));
    }

    #[test]
    fn fs_point_invariances(seed in 0u64..1000, a in 0.1f64..10.0, b in -100.0f64..100.0) {
        let x = common::normal(400, 1.0, seed);
        let p = fs_point_with_grid("x", &x, 4096).unwrap();
        prop_assert!(p.product >= 1.0 - 1e-6);
        let shifted: Vec<f64> = x.iter().map(|v| v + b).collect();
        let q = fs_point_with_grid("x", &shifted, 4096).unwrap();
        prop_assert!(close(q.sep, p.sep, 1e-8) && close(q.fim, p.fim, 1e-8));
        let scaled: Vec<f64> = x.iter().map(|v| a * v).collect();
        let s = fs_point_with_grid("x", &scaled, 4096).unwrap();
        prop_assert!(close(s.sep, a * a * p.sep, 1e-8));
        prop_assert!(close(s.fim, p.fim / (a * a), 1e-8));
        prop_assert!(close(s.product, p.product, 1e-8));
        let fine = fs_point_with_grid("x", &x, 8192).unwrap();
        prop_assert!(close(fine.sep, p.sep, 1e-6) && close(fine.fim, p.fim, 1e-6));
    }

    #[test]
    fn cid_symmetric_and_shift_invariant(
        x in prop::collection::vec(-50.0f64..50.0, 20),
        y in prop::collection::vec(-50.0f64..50.0, 20),
        c in -1e3f64..1e3,
    ) {
        let d = cid(&x, &y).unwrap();
        prop_assert_eq!(d, cid(&y, &x).unwrap());
        prop_assert_eq!(cid(&x, &x).unwrap(), 0.0);
        let ed = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(d >= ed * (1.0 - 1e-12));
        let xs: Vec<f64> = x.iter().map(|v| v + c).collect();
        let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
        prop_assert!(close(cid(&xs, &ys).unwrap(), d, 1e-9));
    }

    #[test]
    fn silhouettes_bounded(seed in 0u64..1000, m in 3usize..12, k in 2usize..4) {
        prop_assume!(k < m);
        let x: Vec<Vec<f64>> = (0..m).map(|i| common::normal(30, 1.0 + i as f64, seed + i as u64)).collect();
        let ids: Vec<String> = (0..m).map(|i| format!("s{i}")).collect();
        let dm = distance_matrix(&x, &ids, CidMode::Strict).unwrap();
        let labels: Vec<usize> = (0..m).map(|i| if i < k { i } else { (i * 7 + seed as usize) % k }).collect();
        let (s, avg) = silhouette(&dm, &labels).unwrap();
        prop_assert!(s.iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert!((-1.0..=1.0).contains(&avg));
    }

    #[test]
    fn select_k_permutation_invariant(seed in 0u64..1000, perm_seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        let m = 8;
        let mut r = common::rng(seed);
        let pts: Vec<(f64, f64)> = (0..m)
            .map(|i| {
                use rand::Rng;
                let c = (i % 3) as f64 * 10.0;
                (c + r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
            })
            .collect();
        let mut d = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                d[i * m + j] = ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
            }
        }
        let ids: Vec<String> = (0..m).map(|i| format!("s{i}")).collect();
        let dm = DistanceMatrix::from_full(ids, d).unwrap();
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut common::rng(perm_seed));
        let pm = dm.permuted(&perm);
        let a = select_k(&dm, 2, 5, 1, 20).unwrap();
        let b = select_k(&pm, 2, 5, 1, 20).unwrap();
        prop_assert_eq!(a.best.k, b.best.k);
        // b's label for original series perm[i] sits at position i.
        let mut back = vec![0; m];
        for (i, &p) in perm.iter().enumerate() {
            back[p] = b.best.labels[i];
        }
        prop_assert_eq!(canonical_labels(&a.best.labels), canonical_labels(&back));
        for ((ka, sa), (kb, sb)) in a.curve.iter().zip(&b.curve) {
            prop_assert_eq!(ka, kb);
            prop_assert!(close(*sa, *sb, 1e-9));
        }
    }
}
