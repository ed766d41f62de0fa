use std::collections::HashMap;

use nalgebra::DMatrix;
use proptest::prelude::*;

use lowfreq::factor::principal_components;
use lowfreq::filters::{mw_decompose, HpSmoother};
use lowfreq::ingest::{
    parse_records, read_long_csv, write_long_csv, write_records, Layout, NclimdivRecord,
};
use lowfreq::panel::{estimate, Heterogeneity, PanelSpec};
use lowfreq::series::weighted_aggregate;
use lowfreq::{Panel, TimeSeries};

fn series(values: Vec<f64>) -> TimeSeries {
    TimeSeries::from_values("u", 1900, values).unwrap()
}

fn panel(n: usize, t: usize, values: Vec<f64>) -> Panel {
    Panel::new(
        (0..n).map(|i| format!("u{i}")).collect(),
        (0..t as i32).map(|y| 1950 + y).collect(),
        DMatrix::from_row_slice(n, t, &values),
    )
    .unwrap()
}

fn values(t: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, t)
}

fn second_diff_adjoint_product(tau: &[f64]) -> Vec<f64> {
    // K'K tau with K the (T-2) x T second-difference operator
    let t = tau.len();
    let d: Vec<f64> = (0..t - 2)
        .map(|s| tau[s] - 2.0 * tau[s + 1] + tau[s + 2])
        .collect();
    let mut out = vec![0.0; t];
    for (s, v) in d.iter().enumerate() {
        out[s] += v;
        out[s + 1] -= 2.0 * v;
        out[s + 2] += v;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mw_is_linear(a in values(50), b in values(50), c in -3.0..3.0f64) {
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| c * x + y).collect();
        let la = mw_decompose(&series(a), 6).unwrap().low.values;
        let lb = mw_decompose(&series(b), 6).unwrap().low.values;
        let ls = mw_decompose(&series(sum), 6).unwrap().low.values;
        for s in 0..50 {
            prop_assert!((ls[s] - c * la[s] - lb[s]).abs() < 1e-9);
        }
    }

    #[test]
    fn mw_high_is_orthogonal_to_low(z in values(60), q in 1usize..20) {
        let d = mw_decompose(&series(z.clone()), q).unwrap();
        let mean = z.iter().sum::<f64>() / 60.0;
        let inner: f64 = d.low.values.iter().zip(&d.high.values).map(|(l, h)| (l - mean) * h).sum();
        prop_assert!(inner.abs() < 1e-8);
        prop_assert!(d.high.values.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn mw_commutes_with_weighted_aggregation(raw in values(5 * 40), w in prop::collection::vec(0.1..5.0f64, 5)) {
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| v / total).collect();
        let p = panel(5, 40, raw).with_weights(w.clone()).unwrap();
        let agg_then_filter = mw_decompose(&weighted_aggregate(&p).unwrap(), 4).unwrap().low.values;
        let lows: Vec<Vec<f64>> = (0..5).map(|i| mw_decompose(&p.series(i), 4).unwrap().low.values).collect();
        for s in 0..40 {
            let filter_then_agg: f64 = (0..5).map(|i| w[i] * lows[i][s]).sum();
            prop_assert!((filter_then_agg - agg_then_filter[s]).abs() < 1e-10);
        }
    }

    #[test]
    fn hp_trend_solves_first_order_conditions(z in values(40), log_lambda in -1.0..8.0f64) {
        let lambda = log_lambda.exp();
        let tau = HpSmoother::new(40, lambda).unwrap().trend(&z);
        let ktk = second_diff_adjoint_product(&tau);
        let scale = 1.0 + z.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for s in 0..40 {
            prop_assert!((z[s] - tau[s] - lambda * ktk[s]).abs() < 1e-8 * scale * (1.0 + lambda));
        }
    }

    #[test]
    fn loadings_scale_with_the_data(raw in values(6 * 30), c in 0.1..10.0f64) {
        let x = DMatrix::from_row_slice(6, 30, &raw);
        let a = principal_components(&x, 1).unwrap();
        let b = principal_components(&(&x * c), 1).unwrap();
        for i in 0..6 {
            prop_assert!((b.loading(i) - c * a.loading(i)).abs() < 1e-7 * (1.0 + c * a.loading(i).abs()));
        }
    }

    #[test]
    fn afe_ignores_additive_effects(
        raw_y in values(6 * 8),
        raw_x in values(6 * 8),
        unit in prop::collection::vec(-5.0..5.0f64, 6),
        year in prop::collection::vec(-5.0..5.0f64, 8),
    ) {
        let y = panel(6, 8, raw_y);
        let x = panel(6, 8, raw_x);
        let shifted = y.with_values(DMatrix::from_fn(6, 8, |i, s| y.values[(i, s)] + unit[i] + year[s]));
        let a = estimate(&PanelSpec::static_model(&y, &x, None, Heterogeneity::Afe).unwrap()).unwrap();
        let b = estimate(&PanelSpec::static_model(&shifted, &x, None, Heterogeneity::Afe).unwrap()).unwrap();
        prop_assert!((a.coefficients[0] - b.coefficients[0]).abs() < 1e-9 * (1.0 + a.coefficients[0].abs()));
    }

    #[test]
    fn weighted_aggregate_is_linear(a in values(4 * 10), b in values(4 * 10), c in -3.0..3.0f64) {
        let w = vec![0.1, 0.2, 0.3, 0.4];
        let pa = panel(4, 10, a).with_weights(w.clone()).unwrap();
        let pb = panel(4, 10, b).with_weights(w.clone()).unwrap();
        let pc = pa.with_values(&pa.values * c + &pb.values);
        let (ga, gb, gc) = (
            weighted_aggregate(&pa).unwrap(),
            weighted_aggregate(&pb).unwrap(),
            weighted_aggregate(&pc).unwrap(),
        );
        for s in 0..10 {
            prop_assert!((gc.values[s] - c * ga.values[s] - gb.values[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn nclimdiv_records_round_trip(
        cents in prop::collection::vec(-5000i32..12000, 12),
        state in 1u8..49,
        area in 1u16..10,
        year in 1895i32..2024,
    ) {
        let rec = NclimdivRecord {
            layout: Layout::Division,
            state,
            area,
            element: 2,
            year,
            months: std::array::from_fn(|m| Some(cents[m] as f64 / 100.0)),
        };
        let text = write_records(std::slice::from_ref(&rec));
        let back = parse_records(&text).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(write_records(&back), text);
        for m in 0..12 {
            prop_assert!((back[0].months[m].unwrap() - rec.months[m].unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn long_csv_round_trip(raw in values(3 * 7)) {
        let p = panel(3, 7, raw);
        let mut buf = Vec::new();
        write_long_csv(&p, &mut buf).unwrap();
        let back = read_long_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(&back.unit_ids, &p.unit_ids);
        prop_assert_eq!(&back.years, &p.years);
        prop_assert!((&back.values - &p.values).amax() == 0.0);
    }
}

#[test]
fn weights_file_feeds_state_aggregation() {
    let text = "0101021990  10.00  10.00  10.00  10.00  10.00  10.00  10.00  10.00  10.00  10.00  10.00  10.00\n\
                0102021990  20.00  20.00  20.00  20.00  20.00  20.00  20.00  20.00  20.00  20.00  20.00  20.00\n";
    let w: HashMap<String, f64> = [("0101".to_string(), 3.0), ("0102".to_string(), 1.0)].into();
    let (p, _) = lowfreq::ingest::parse_nclimdiv(text.as_bytes(), Some(&w)).unwrap();
    assert!((p.values[(0, 0)] - 12.5).abs() < 1e-12);
}
