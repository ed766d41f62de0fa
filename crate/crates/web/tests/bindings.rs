use lowfreq_web::{correlogram_json, decompose_json, sample_series_json, uc_vs_hp_json};
use serde_json::Value;

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

#[test]
fn every_method_returns_an_additive_split() {
    let s: Value = serde_json::from_str(&sample_series_json(1895, 3).unwrap()).unwrap();
    let values = floats(&s["values"]);
    assert_eq!(values.len(), 129);
    let first = s["first_year"].as_i64().unwrap() as i32;
    for (method, param) in [("mw", 8.0), ("hp", 6.25), ("bhp", 0.0), ("jh", 2.0)] {
        let d: Value =
            serde_json::from_str(&decompose_json(&values, first, method, param).unwrap()).unwrap();
        let (z, l, h) = (floats(&d["value"]), floats(&d["low"]), floats(&d["high"]));
        assert_eq!(z.len(), l.len());
        assert_eq!(d["years"].as_array().unwrap().len(), l.len());
        for k in 0..z.len() {
            assert!((l[k] + h[k] - z[k]).abs() < 1e-10, "{method}");
        }
    }
}

#[test]
fn model_based_filter_beats_hp_on_its_own_model() {
    let mut wins = 0;
    for seed in 0..10 {
        let c: Value =
            serde_json::from_str(&uc_vs_hp_json(1.0, 1.0, 0.2, 120, 100.0, seed).unwrap()).unwrap();
        let (uc, hp) = (
            c["rmse_uc"].as_f64().unwrap(),
            c["rmse_hp"].as_f64().unwrap(),
        );
        assert!(uc.is_finite() && hp.is_finite());
        wins += (uc <= hp) as usize;
    }
    assert!(wins >= 8, "{wins}");
}

#[test]
fn white_noise_correlogram_mostly_inside_band() {
    let c: Value =
        serde_json::from_str(&uc_vs_hp_json(0.0, 1.0, 0.0, 400, 100.0, 3).unwrap()).unwrap();
    let z = floats(&c["observed"]);
    let r: Value = serde_json::from_str(&correlogram_json(&z, 20).unwrap()).unwrap();
    let band = r["band"].as_f64().unwrap();
    let outside = floats(&r["acf"])
        .iter()
        .filter(|a| a.abs() > 2.0 * band)
        .count();
    assert!(outside <= 3, "{outside}");
}

#[test]
fn invalid_parameters_surface_as_errors() {
    assert!(uc_vs_hp_json(1.0, -1.0, 0.2, 100, 100.0, 0).is_err());
    assert!(uc_vs_hp_json(1.0, 1.0, 1.5, 100, 100.0, 0).is_err());
    assert!(decompose_json(&[1.0, 2.0], 2000, "mw", 8.0).is_err());
    assert!(correlogram_json(&[], 3).is_err());
}
