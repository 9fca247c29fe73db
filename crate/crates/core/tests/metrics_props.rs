use proptest::prelude::*;
use skillstream::metrics::{compute_lifelong_metrics, NbtConvention, SuccessMatrix};

/// Straight transcription of the formulas with explicit loops over a dense
/// square array.
fn oracle(r: &[Vec<f64>]) -> (f64, f64, f64) {
    let m = r.len();
    let mut fwt = 0.0;
    let mut nbt = 0.0;
    let mut auc = 0.0;
    for k in 0..m {
        fwt += r[k][k];
        if k + 1 < m {
            let mut s = 0.0;
            for q in k + 1..m {
                s += r[k][k] - r[q][k];
            }
            nbt += s / (m - k - 1) as f64;
        }
        let mut s = r[k][k];
        for q in k + 1..m {
            s += r[q][k];
        }
        auc += s / (m - k) as f64;
    }
    (fwt / m as f64, nbt / m as f64, auc / m as f64)
}

fn lower_triangle() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=20).prop_flat_map(|m| {
        (1..=m)
            .map(|i| proptest::collection::vec(0.0f64..=1.0, i))
            .collect::<Vec<_>>()
    })
}

fn dense(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = rows.len();
    rows.iter()
        .map(|row| {
            let mut d = row.clone();
            d.resize(m, f64::NAN);
            d
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn agrees_with_double_loop(rows in lower_triangle()) {
        let (fwt, nbt, auc) = oracle(&dense(&rows));
        let got = compute_lifelong_metrics(&SuccessMatrix::from_rows(rows, 20), NbtConvention::IncludeLast).unwrap();
        prop_assert!((got.fwt - fwt).abs() < 1e-12);
        prop_assert!((got.nbt - nbt).abs() < 1e-12);
        prop_assert!((got.auc - auc).abs() < 1e-12);
    }

    #[test]
    fn values_stay_in_range(rows in lower_triangle()) {
        let got = compute_lifelong_metrics(&SuccessMatrix::from_rows(rows, 20), NbtConvention::IncludeLast).unwrap();
        prop_assert!((0.0..=1.0).contains(&got.fwt));
        prop_assert!((0.0..=1.0).contains(&got.auc));
        prop_assert!((-1.0..=1.0).contains(&got.nbt));
    }

    #[test]
    fn raising_a_diagonal_cell_never_hurts(rows in lower_triangle(), pick in any::<proptest::sample::Index>(), bump in 0.0f64..=1.0) {
        let base = compute_lifelong_metrics(&SuccessMatrix::from_rows(rows.clone(), 1), NbtConvention::IncludeLast).unwrap();
        let k = pick.index(rows.len());
        let mut raised = rows;
        raised[k][k] = (raised[k][k] + bump).min(1.0);
        let after = compute_lifelong_metrics(&SuccessMatrix::from_rows(raised, 1), NbtConvention::IncludeLast).unwrap();
        prop_assert!(after.fwt >= base.fwt - 1e-15);
        prop_assert!(after.auc >= base.auc - 1e-15);
    }

    #[test]
    fn constant_columns_mean_no_forgetting(diag in proptest::collection::vec(0.0f64..=1.0, 1..=20)) {
        let m = diag.len();
        let rows: Vec<Vec<f64>> = (0..m).map(|i| diag[..=i].to_vec()).collect();
        let got = compute_lifelong_metrics(&SuccessMatrix::from_rows(rows, 1), NbtConvention::IncludeLast).unwrap();
        prop_assert_eq!(got.nbt, 0.0);
    }

    #[test]
    fn any_drop_shows_up_as_forgetting(rows in lower_triangle().prop_filter("needs two tasks", |r| r.len() >= 2)) {
        let m = rows.len();
        let mut r = rows;
        // pin later evaluations to at most the diagonal, then force one strict drop
        for q in 1..m {
            for k in 0..q {
                r[q][k] = r[q][k].min(r[k][k]);
            }
        }
        r[0][0] = 1.0;
        r[m - 1][0] = 0.0;
        let got = compute_lifelong_metrics(&SuccessMatrix::from_rows(r, 1), NbtConvention::IncludeLast).unwrap();
        prop_assert!(got.nbt > 0.0);
    }
}

#[test]
fn worked_example() {
    let r = SuccessMatrix::from_rows(vec![vec![0.8], vec![0.6, 0.7], vec![0.5, 0.7, 0.9]], 20);
    let got = compute_lifelong_metrics(&r, NbtConvention::IncludeLast).unwrap();
    assert!((got.fwt - 0.8).abs() < 1e-12);
    assert!((got.nbt - 0.083_333_333_333_333_33).abs() < 1e-12);
    assert!((got.auc - 0.744_444_444_444_444_4).abs() < 1e-12);
    let auc_m = [0.633_333_333_333_333_3, 0.7, 0.9];
    for (a, b) in got.auc_m.iter().zip(auc_m) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(got.nbt_m.len(), 3);
    assert!((got.nbt_m[0] - 0.25).abs() < 1e-12);
}

#[test]
fn matrix_round_trips_through_json() {
    let r = SuccessMatrix::from_rows(vec![vec![0.1], vec![0.2, 0.3]], 5);
    let text = serde_json::to_string(&r).unwrap();
    assert_eq!(serde_json::from_str::<SuccessMatrix>(&text).unwrap(), r);
}
