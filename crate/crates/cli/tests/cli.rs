use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lowfreq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lowfreq"))
        .arg("--output-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lowfreq(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synthetic() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--seed", "11"]);
    dir
}

fn data_args(dir: &Path) -> Vec<String> {
    let p = |f: &str| dir.join(f).display().to_string();
    vec![
        "--temperature".into(),
        p("temperature.csv"),
        "--levels".into(),
        p("output_levels.csv"),
        "--weights".into(),
        p("weights.csv"),
    ]
}

#[test]
fn panel_json_is_reproducible_for_a_fixed_seed() {
    let dir = synthetic();
    let data = data_args(dir.path());
    let mut args: Vec<&str> = vec!["panel"];
    args.extend(data.iter().map(String::as_str));
    args.extend([
        "--model",
        "ife",
        "--dynamic",
        "--boot",
        "199",
        "--seed",
        "7",
    ]);
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    ok(first.path(), &args);
    ok(
        second.path(),
        &["--threads", "2"]
            .iter()
            .chain(&args)
            .copied()
            .collect::<Vec<_>>(),
    );
    let a = std::fs::read(first.path().join("panel.json")).unwrap();
    let b = std::fs::read(second.path().join("panel.json")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);

    let doc: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(doc["metadata"]["seed"], 7);
    assert_eq!(doc["metadata"]["command"], "panel");
    let rows = doc["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1]["name"], "b_L");
}

#[test]
fn decomposition_output_is_additive() {
    let dir = synthetic();
    let input = dir.path().join("temperature.csv").display().to_string();
    for method in ["mw", "hp", "bhp", "jh"] {
        let out = format!("{method}.csv");
        ok(
            dir.path(),
            &[
                "decompose",
                "--input",
                &input,
                "--method",
                method,
                "--output",
                &out,
            ],
        );
        let mut rdr = csv::Reader::from_path(dir.path().join(&out)).unwrap();
        let mut n = 0;
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let v: Vec<f64> = (2..5).map(|k| rec[k].parse().unwrap()).collect();
            assert!((v[1] + v[2] - v[0]).abs() < 1e-10, "{method}: {rec:?}");
            n += 1;
        }
        assert!(n > 48 * 100, "{method}: {n} rows");
    }
}

#[test]
fn bad_input_exits_with_code_two() {
    let dir = synthetic();
    let input = dir.path().join("temperature.csv").display().to_string();
    let missing = lowfreq(
        dir.path(),
        &["decompose", "--input", "/nonexistent/file.csv"],
    );
    assert_eq!(missing.status.code(), Some(2));

    let too_many = lowfreq(
        dir.path(),
        &[
            "decompose",
            "--input",
            &input,
            "--method",
            "mw",
            "--q",
            "100",
        ],
    );
    assert_eq!(too_many.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&too_many.stderr).is_empty());

    std::fs::write(
        dir.path().join("broken.csv"),
        "unit,year,value\nAL,1990,abc\n",
    )
    .unwrap();
    let broken = dir.path().join("broken.csv").display().to_string();
    let parse = lowfreq(dir.path(), &["decompose", "--input", &broken]);
    assert_eq!(parse.status.code(), Some(2));

    let data = data_args(dir.path());
    let mut args: Vec<&str> = vec!["panel"];
    args.extend(data.iter().map(String::as_str));
    args.extend(["--ci", "150"]);
    assert_eq!(lowfreq(dir.path(), &args).status.code(), Some(2));
}

#[test]
fn ingest_reads_nclimdiv_and_builds_growth() {
    let dir = synthetic();
    let p = |f: &str| dir.path().join(f).display().to_string();
    ok(
        dir.path(),
        &[
            "ingest",
            "--source",
            "nclimdiv",
            "--input",
            &p("nclimdiv_state.txt"),
            "--output",
            "t.csv",
        ],
    );
    let a = std::fs::read_to_string(p("t.csv")).unwrap();
    let b = std::fs::read_to_string(p("temperature.csv")).unwrap();
    assert_eq!(a.lines().count(), b.lines().count());
    ok(
        dir.path(),
        &[
            "ingest",
            "--source",
            "csv",
            "--input",
            &p("output_levels.csv"),
            "--growth",
            "--output",
            "g.csv",
        ],
    );
    let out = ok(
        dir.path(),
        &[
            "ts-reg",
            "--temperature",
            &p("t.csv"),
            "--growth",
            &p("g.csv"),
            "--unit",
            "CA",
        ],
    );
    assert!(out.contains("beta_L"));
}

#[test]
fn remaining_subcommands_write_their_artifacts() {
    let dir = synthetic();
    let data = data_args(dir.path());
    let with = |cmd: &str, extra: &[&str]| {
        let mut args: Vec<&str> = vec![cmd];
        args.extend(data.iter().map(String::as_str));
        args.extend(extra);
        ok(dir.path(), &args);
    };
    with("factors", &[]);
    with("density", &[]);
    with("panel", &["--model", "afe", "--interact"]);
    ok(
        dir.path(),
        &[
            "uc-fit",
            "--input",
            &dir.path().join("temperature.csv").display().to_string(),
            "--units",
            "CA,TX",
        ],
    );
    ok(dir.path(), &["mc-filters", "--reps", "5"]);
    ok(
        dir.path(),
        &["mc-panel", "--design", "fe", "--reps", "3", "--boot", "0"],
    );
    for f in [
        "factor_loadings.csv",
        "factor.csv",
        "factor_growth.csv",
        "density.csv",
        "density.json",
        "panel.json",
        "uc_fit.json",
        "mc_filters.csv",
        "mc_filters.json",
        "mc_panel.csv",
        "mc_panel.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let fits: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("uc_fit.json")).unwrap()).unwrap();
    assert_eq!(fits["result"].as_array().unwrap().len(), 2);
}
