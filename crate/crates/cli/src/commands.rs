use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use serde::Serialize;

use lowfreq::decomposition::Decomposition;
use lowfreq::factor::lowfreq_factor_model_with;
use lowfreq::filters::{default_q, BhpStopping, FilterConfig, MwBasis};
use lowfreq::fracuc::uc_fit as fit_uc;
use lowfreq::inference::{
    bootstrap_prepared, cluster_se_oneway, cluster_se_twoway, BootstrapOptions, Resampling,
    VarianceEstimate,
};
use lowfreq::ingest::{
    assemble_dataset, build_growth, read_long_csv, read_nclimdiv_file, read_weights_csv,
    write_long_csv, write_weights_csv, Dataset,
};
use lowfreq::montecarlo::{
    mc_filter_rmse, mc_panel as run_mc_panel, ComponentMode, FilterCalibration, McConfig, McDesign,
    PanelCalibration,
};
use lowfreq::panel::{marginal_effects, Heterogeneity, MarginalEffects, PanelEstimate, PanelSpec};
use lowfreq::series::{demean_pre_cutoff, weighted_aggregate};
use lowfreq::synthetic::{generate, to_nclimdiv, SyntheticConfig};
use lowfreq::tsreg::{ts_estimate_with, unit_density, TsEstimate, TsOptions, UnitDensity};
use lowfreq::{Panel, TimeSeries};

use crate::output::{num, table, wrote, Out};
use crate::*;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| invalid(format!("cannot open {}: {e}", path.display())))
}

fn read_panel(path: &Path) -> CliResult<Panel> {
    Ok(read_long_csv(open(path)?)?)
}

fn read_weights(path: Option<&Path>) -> CliResult<Option<HashMap<String, f64>>> {
    path.map(|p| Ok(read_weights_csv(open(p)?)?)).transpose()
}

fn attach_weights(p: Panel, weights: Option<&HashMap<String, f64>>) -> CliResult<Panel> {
    let Some(map) = weights else { return Ok(p) };
    let w: Vec<f64> = p
        .unit_ids
        .iter()
        .map(|u| {
            map.get(u)
                .copied()
                .ok_or_else(|| invalid(format!("no weight for unit {u}")))
        })
        .collect::<CliResult<_>>()?;
    let total: f64 = w.iter().sum();
    Ok(p.with_weights(w.iter().map(|v| v / total).collect())?)
}

fn equal_weights(p: Panel) -> CliResult<Panel> {
    if p.weights.is_some() {
        return Ok(p);
    }
    let n = p.n();
    Ok(p.with_weights(vec![1.0 / n as f64; n])?)
}

fn load_dataset(d: &DataArgs) -> CliResult<Dataset> {
    let x = read_panel(&d.temperature)?;
    let y = match (&d.growth, &d.levels) {
        (Some(g), None) => read_panel(g)?,
        (None, Some(l)) => build_growth(&read_panel(l)?)?,
        _ => return Err(invalid("give exactly one of --growth or --levels")),
    };
    let weights = read_weights(d.weights.as_deref())?;
    Ok(assemble_dataset(&x, &y, weights.as_ref(), d.cutoff)?)
}

fn mw_components(x: &Panel, q: usize) -> CliResult<(Panel, Panel)> {
    let basis = MwBasis::new(x.t(), q)?;
    let low = x.map_rows(|s| Ok(basis.project(&s.values)))?;
    let high = x.with_values(&x.values - &low.values);
    Ok((low, high))
}

pub fn ingest(a: &IngestArgs, out: &Out) -> CliResult<()> {
    let weights = read_weights(a.weights.as_deref())?;
    let (mut panel, report) = match a.source {
        Source::Nclimdiv => {
            let area = read_weights(a.area_weights.as_deref())?;
            let (p, r) = read_nclimdiv_file(&a.input, area.as_ref())?;
            (attach_weights(p, weights.as_ref())?, Some(r))
        }
        Source::Csv => (
            attach_weights(read_panel(&a.input)?, weights.as_ref())?,
            None,
        ),
    };
    if a.growth {
        panel = build_growth(&panel)?;
    }
    if let Some(cutoff) = a.cutoff {
        panel = panel.map_rows(|s| demean_pre_cutoff(s, cutoff).map(|d| d.values))?;
    }
    let path = out.path(&a.output);
    write_long_csv(&panel, File::create(&path)?)?;
    wrote(&path);
    if let Some(w) = &panel.weights {
        let wp = out.path(&format!(
            "{}.weights.csv",
            a.output.trim_end_matches(".csv")
        ));
        write_weights_csv(&panel.unit_ids, w, File::create(&wp)?)?;
        wrote(&wp);
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        units: &'a [String],
        first_year: i32,
        last_year: i32,
        report: Option<lowfreq::ingest::IngestReport>,
    }
    let summary = Summary {
        units: &panel.unit_ids,
        first_year: panel.years[0],
        last_year: panel.years[panel.t() - 1],
        report,
    };
    let name = format!("{}.report.json", a.output.trim_end_matches(".csv"));
    wrote(&out.json(&name, "ingest", a, None, &summary)?);
    println!(
        "N = {}, T = {} ({}..{})",
        panel.n(),
        panel.t(),
        summary.first_year,
        summary.last_year
    );
    Ok(())
}

fn filter_config(a: &DecomposeArgs, t: usize) -> FilterConfig {
    match a.method {
        MethodArg::Mw => FilterConfig::Mw {
            q: a.q.unwrap_or_else(|| default_q(t)),
        },
        MethodArg::Hp => FilterConfig::Hp {
            lambda: a.lambda.unwrap_or(100.0),
        },
        MethodArg::Bhp => FilterConfig::Bhp {
            lambda: a.lambda.unwrap_or(1600.0),
            stopping: a
                .m
                .map(BhpStopping::Fixed)
                .unwrap_or(BhpStopping::InformationCriterion),
        },
        MethodArg::Jh => FilterConfig::Jh { p: a.p, h: a.h },
    }
}

fn standardized(z: &TimeSeries, d: &Decomposition) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mean = z.mean();
    let sd = lowfreq::linalg::sample_sd(&z.values);
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let off = d.undefined_prefix(z);
    let v = z.values[off..].iter().map(|v| (v - mean) / sd).collect();
    let low = d.low.values.iter().map(|v| (v - mean) / sd).collect();
    let high = d.high.values.iter().map(|v| v / sd).collect();
    (v, low, high)
}

pub fn decompose(a: &DecomposeArgs, out: &Out) -> CliResult<()> {
    let stray = match a.method {
        MethodArg::Mw => a.lambda.is_some() || a.m.is_some(),
        MethodArg::Hp => a.q.is_some() || a.m.is_some(),
        MethodArg::Bhp => a.q.is_some(),
        MethodArg::Jh => a.q.is_some() || a.lambda.is_some() || a.m.is_some(),
    };
    if stray {
        return Err(invalid(
            format!("option not used by --method {:?}", a.method).to_lowercase(),
        ));
    }
    let p = read_panel(&a.input)?;
    let cfg = filter_config(a, p.t());
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for z in p.all_series() {
        let d = cfg.decompose(&z)?;
        let off = d.undefined_prefix(&z);
        let (v, low, high) = if a.standardize {
            standardized(&z, &d)
        } else {
            (
                z.values[off..].to_vec(),
                d.low.values.clone(),
                d.high.values.clone(),
            )
        };
        for (k, year) in d.low.years.iter().enumerate() {
            rows.push(vec![
                z.unit_id.clone(),
                year.to_string(),
                num(v[k]),
                num(low[k]),
                num(high[k]),
            ]);
        }
        summary.push(vec![
            z.unit_id.clone(),
            d.method.label(),
            format!("{:.3}", d.low.values[d.low.len() - 1] - d.low.values[0]),
            format!("{:.2e}", d.additivity_error(&z)),
        ]);
    }
    wrote(&out.csv(&a.output, &["unit", "year", "value", "low", "high"], &rows)?);
    table(&["unit", "method", "low change", "max |L+H-z|"], &summary);
    Ok(())
}

#[derive(Serialize)]
struct UcUnit {
    unit: String,
    d: f64,
    sigma_l: f64,
    sigma_h: f64,
    a: Vec<f64>,
    nu: f64,
    loglik: f64,
    trend_change: f64,
    converged: bool,
}

pub fn uc_fit(a: &UcFitArgs, out: &Out) -> CliResult<()> {
    let p = read_panel(&a.input)?;
    let weights = read_weights(a.weights.as_deref())?;
    let p = attach_weights(p, weights.as_ref())?;
    let demeaned = p.map_rows(|s| demean_pre_cutoff(s, a.cutoff).map(|d| d.values))?;
    let targets: Vec<TimeSeries> = if a.aggregate {
        let mut agg = weighted_aggregate(&equal_weights(demeaned)?)?;
        agg.demeaned_before = Some(a.cutoff);
        vec![agg]
    } else if a.units.is_empty() {
        demeaned.all_series()
    } else {
        a.units
            .iter()
            .map(|u| {
                demeaned
                    .unit_index(u)
                    .map(|i| demeaned.series(i))
                    .ok_or_else(|| invalid(format!("unknown unit {u}")))
            })
            .collect::<CliResult<_>>()?
    };
    let fits: Vec<CliResult<UcUnit>> = lowfreq::par::map_indices(targets.len(), |k| {
        let z = &targets[k];
        let f = fit_uc(z, a.sigma_l, a.p)?;
        Ok(UcUnit {
            unit: z.unit_id.clone(),
            d: f.params.d,
            sigma_l: f.params.sigma_l,
            sigma_h: f.params.sigma_h,
            nu: f.params.nu(),
            a: f.params.a.clone(),
            loglik: f.loglik,
            trend_change: f.trend_change(),
            converged: f.convergence.converged,
        })
    });
    let fits: Vec<UcUnit> = fits.into_iter().collect::<CliResult<_>>()?;
    wrote(&out.json(&a.output, "uc-fit", a, None, &fits)?);
    let rows: Vec<Vec<String>> = fits
        .iter()
        .map(|f| {
            vec![
                f.unit.clone(),
                format!("{:.3}", f.d),
                f.a.first().map(|v| format!("{v:.3}")).unwrap_or_default(),
                format!("{:.3}", f.sigma_h),
                format!("{:.3}", f.nu),
                format!("{:.3}", f.trend_change),
            ]
        })
        .collect();
    table(&["unit", "d", "a1", "sigma_H", "nu", "dL"], &rows);
    Ok(())
}

pub fn factors(a: &FactorsArgs, out: &Out) -> CliResult<()> {
    let ds = load_dataset(&a.data)?;
    let x = ds.temperature_window()?;
    let m = lowfreq_factor_model_with(&x, &ds.growth, a.q, a.standardize)?;
    let rows: Vec<Vec<String>> = (0..m.unit_ids.len())
        .map(|i| {
            vec![
                m.unit_ids[i].clone(),
                num(m.x.loading(i)),
                num(m.y.loading(i)),
                num(m.x.communalities[i]),
            ]
        })
        .collect();
    wrote(&out.csv(
        "factor_loadings.csv",
        &["unit", "loading_x", "loading_y", "r2"],
        &rows,
    )?);
    let basis = MwBasis::new(x.t(), a.q)?;
    for (name, fm) in [("factor.csv", &m.x), ("factor_growth.csv", &m.y)] {
        let path = basis.synthesize(fm.factor());
        let rows: Vec<Vec<String>> = m
            .years
            .iter()
            .zip(&path)
            .map(|(y, v)| vec![y.to_string(), num(*v)])
            .collect();
        wrote(&out.csv(name, &["year", "factor"], &rows)?);
    }
    wrote(&out.json("factors.json", "factors", a, None, &m)?);
    let mean_r2 = m.x.communalities.iter().sum::<f64>() / m.unit_ids.len() as f64;
    println!(
        "N = {}, q = {}, mean temperature r2 = {mean_r2:.3}",
        m.unit_ids.len(),
        m.q
    );
    Ok(())
}

#[derive(Serialize)]
struct PanelRow {
    name: String,
    estimate: f64,
    se_oneway: f64,
    se_twoway: f64,
    ci: Vec<(f64, (f64, f64))>,
}

#[derive(Serialize)]
struct PanelResult {
    years: (i32, i32),
    n: usize,
    t: usize,
    rows: Vec<PanelRow>,
    ci_source: &'static str,
    estimate: PanelEstimate,
    bootstrap: Option<VarianceEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    marginal_effects: Option<MarginalEffects>,
    provenance: Vec<String>,
}

pub fn panel(a: &PanelArgs, out: &Out) -> CliResult<()> {
    let levels: Vec<f64> = a.ci.iter().map(|c| c / 100.0).collect();
    if levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(invalid("--ci levels must lie strictly between 0 and 100"));
    }
    let ds = load_dataset(&a.data)?;
    let x = ds.temperature_window()?;
    let (low, high) = mw_components(&x, a.q)?;
    let het = match a.model {
        ModelArg::Fe => Heterogeneity::Fe,
        ModelArg::Afe => Heterogeneity::Afe,
        ModelArg::Ife => Heterogeneity::Ife { r: a.r },
    };
    let spec = if a.dynamic {
        PanelSpec::dynamic_model(&ds.growth, &low, &high, het)?
    } else if a.interact {
        PanelSpec::interaction_model(&ds.growth, &low, &high, het)?
    } else {
        PanelSpec::static_model(&ds.growth, &low, Some(&high), het)?
    };
    let design = spec.prepare()?;
    let est = design.fit(&spec.dependent.values)?.require_converged()?;
    let one = cluster_se_oneway(&est)?;
    let two = cluster_se_twoway(&est)?;
    let boot = if a.boot > 0 {
        let opts = BootstrapOptions {
            b: a.boot,
            levels: levels.clone(),
            seed: a.seed,
            resampling: match a.resampling {
                ResamplingArg::CrossSections => Resampling::CrossSections,
                ResamplingArg::Gaussian => Resampling::Gaussian,
            },
            keep_draws: a.keep_draws,
        };
        Some(bootstrap_prepared(&design, &est, &opts)?)
    } else {
        None
    };
    let intervals = match &boot {
        Some(b) => b.clone(),
        None => two.clone().with_normal_ci(&est.coefficients, &levels),
    };
    let rows: Vec<PanelRow> = (0..est.k())
        .map(|k| PanelRow {
            name: est.names[k].clone(),
            estimate: est.coefficients[k],
            se_oneway: one.se[k],
            se_twoway: two.se[k],
            ci: levels
                .iter()
                .map(|&l| (l, intervals.interval(k, l).expect("level requested")))
                .collect(),
        })
        .collect();
    let me = if a.interact {
        Some(marginal_effects(&est, &low, &high)?)
    } else {
        None
    };
    let (n, t) = (est.residuals.n(), est.residuals.t());
    let result = PanelResult {
        years: (est.residuals.years[0], est.residuals.years[t - 1]),
        n,
        t,
        ci_source: if boot.is_some() {
            "bootstrap percentile"
        } else {
            "normal, two-way clustered"
        },
        rows,
        estimate: est,
        bootstrap: boot,
        marginal_effects: me,
        provenance: ds.provenance.clone(),
    };
    wrote(&out.json(&a.output, "panel", a, Some(a.seed), &result)?);

    let mut header = vec!["".to_string()];
    header.extend(result.rows.iter().map(|r| r.name.clone()));
    let mut lines = vec![
        row(
            "estimate",
            result.rows.iter().map(|r| format!("{:.3}", r.estimate)),
        ),
        row(
            "1way SE",
            result.rows.iter().map(|r| format!("({:.3})", r.se_oneway)),
        ),
        row(
            "2way SE",
            result.rows.iter().map(|r| format!("({:.3})", r.se_twoway)),
        ),
    ];
    for (j, l) in levels.iter().enumerate() {
        lines.push(row(
            &format!("CI{:.0}", l * 100.0),
            result
                .rows
                .iter()
                .map(|r| format!("[{:.3}, {:.3}]", r.ci[j].1 .0, r.ci[j].1 .1)),
        ));
    }
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    println!(
        "{} (N = {n}, T = {t}, {})",
        a.model_label(),
        result.ci_source
    );
    table(&h, &lines);
    Ok(())
}

impl PanelArgs {
    fn model_label(&self) -> String {
        let m = match self.model {
            ModelArg::Fe => "FE".to_string(),
            ModelArg::Afe => "AFE".to_string(),
            ModelArg::Ife => format!("IFE(r={})", self.r),
        };
        let kind = if self.dynamic {
            "dynamic"
        } else if self.interact {
            "interaction"
        } else {
            "static"
        };
        format!("{m} {kind}")
    }
}

fn row(label: &str, cells: impl Iterator<Item = String>) -> Vec<String> {
    std::iter::once(label.to_string()).chain(cells).collect()
}

fn ts_options(level: f64, dols: usize, bandwidth: Option<usize>) -> CliResult<TsOptions> {
    if !(level > 0.0 && level < 100.0) {
        return Err(invalid("--level must lie strictly between 0 and 100"));
    }
    Ok(TsOptions {
        dols,
        bandwidth,
        level: level / 100.0,
    })
}

fn unit_regression(
    dy: &TimeSeries,
    x: &TimeSeries,
    q: usize,
    with_high: bool,
    opts: &TsOptions,
) -> CliResult<TsEstimate> {
    let d = FilterConfig::Mw { q }.decompose(x)?;
    let h = with_high.then_some(&d.high);
    Ok(ts_estimate_with(dy, &d.low, h, opts)?)
}

pub fn ts_reg(a: &TsRegArgs, out: &Out) -> CliResult<()> {
    let ds = load_dataset(&a.data)?;
    let x = ds.temperature_window()?;
    let (dy, xs) = match &a.unit {
        Some(u) => {
            let i = x
                .unit_index(u)
                .ok_or_else(|| invalid(format!("unknown unit {u}")))?;
            (ds.growth.series(i), x.series(i))
        }
        None => (
            weighted_aggregate(&equal_weights(ds.growth.clone())?)?,
            weighted_aggregate(&equal_weights(x)?)?,
        ),
    };
    let opts = ts_options(a.level, a.dols, a.bandwidth)?;
    let est = unit_regression(&dy, &xs, a.q, a.with_high, &opts)?;
    wrote(&out.json(&a.output, "ts-reg", a, None, &est)?);
    let rows: Vec<Vec<String>> = (0..est.names.len())
        .map(|k| {
            vec![
                est.names[k].clone(),
                format!("{:.3}", est.coefficients[k]),
                format!("{:.3}", est.se[k]),
                format!("[{:.3}, {:.3}]", est.ci[k].0, est.ci[k].1),
            ]
        })
        .collect();
    println!(
        "{} (T = {}, NW bandwidth {})",
        est.unit_id, est.nobs, est.bandwidth
    );
    table(
        &["", "estimate", "NW SE", &format!("CI{:.0}", a.level)],
        &rows,
    );
    Ok(())
}

#[derive(Serialize)]
struct DensityResult {
    estimates: Vec<(String, f64)>,
    summary: UnitDensity,
}

pub fn density(a: &DensityArgs, out: &Out) -> CliResult<()> {
    let ds = load_dataset(&a.data)?;
    let x = ds.temperature_window()?;
    let opts = TsOptions::default();
    let estimates: Vec<(String, f64)> = (0..x.n())
        .map(|i| {
            let e = unit_regression(&ds.growth.series(i), &x.series(i), a.q, a.with_high, &opts)?;
            Ok((
                x.unit_ids[i].clone(),
                e.coefficient("beta_L").expect("always estimated"),
            ))
        })
        .collect::<CliResult<_>>()?;
    let values: Vec<f64> = estimates.iter().map(|e| e.1).collect();
    let d = unit_density(&values, ds.growth.weights.as_deref())?;
    let rows: Vec<Vec<String>> = d
        .grid
        .iter()
        .zip(&d.density)
        .map(|(g, f)| vec![num(*g), num(*f)])
        .collect();
    wrote(&out.csv(&format!("{}.csv", a.prefix), &["x", "f(x)"], &rows)?);
    println!(
        "N = {}, median {:.3}, mode {:.3}, weighted mean {:.3}, bandwidth {:.3}",
        values.len(),
        d.median,
        d.mode,
        d.weighted_mean,
        d.bandwidth
    );
    let result = DensityResult {
        estimates,
        summary: d,
    };
    wrote(&out.json(&format!("{}.json", a.prefix), "density", a, None, &result)?);
    Ok(())
}

fn load_config(path: Option<&Path>) -> CliResult<McConfig> {
    match path {
        Some(p) => Ok(serde_json::from_reader(open(p)?)?),
        None => Ok(McConfig::default()),
    }
}

pub fn mc_filters(a: &McFiltersArgs, out: &Out) -> CliResult<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    cfg.design = McDesign::FilterRmse;
    if a.config.is_none() {
        cfg.replications = 500;
    }
    if let Some(r) = a.reps {
        cfg.replications = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.sigma_l {
        cfg.sigma_l = s;
    }
    let cal = match &a.calibration {
        Some(p) => FilterCalibration::from_panel(&read_panel(p)?, cfg.sigma_l)?,
        None => FilterCalibration::builtin(cfg.sigma_l, 129)?,
    };
    let rep = mc_filter_rmse(&cfg, &cal)?;
    let rows: Vec<Vec<String>> = rep
        .cells
        .iter()
        .map(|c| {
            vec![
                c.state.clone(),
                c.filter.clone(),
                num(c.sigma_h),
                num(c.bias2),
                num(c.variance),
                num(c.rmse),
                c.span.to_string(),
            ]
        })
        .collect();
    wrote(&out.csv(
        &format!("{}.csv", a.prefix),
        &[
            "state", "filter", "sigma_h", "bias2", "variance", "rmse", "span",
        ],
        &rows,
    )?);
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a McConfig,
        calibration: &'a FilterCalibration,
        report: &'a lowfreq::montecarlo::FilterReport,
    }
    wrote(&out.json(
        &format!("{}.json", a.prefix),
        "mc-filters",
        a,
        Some(cfg.seed),
        &Doc {
            config: &cfg,
            calibration: &cal,
            report: &rep,
        },
    )?);
    let mut header = vec!["state".to_string(), "sigma_H".to_string()];
    header.extend(rep.filters.iter().cloned());
    let lines: Vec<Vec<String>> = cal
        .states
        .iter()
        .map(|s| {
            let mut r = vec![s.state.clone(), format!("{:.2}", s.params.sigma_h)];
            r.extend(
                rep.filters
                    .iter()
                    .map(|f| format!("{:.3}", rep.cell(&s.state, f).map_or(f64::NAN, |c| c.rmse))),
            );
            r
        })
        .collect();
    println!(
        "RMSE of the low-frequency estimate, {} replications",
        rep.replications
    );
    table(
        &header.iter().map(String::as_str).collect::<Vec<_>>(),
        &lines,
    );
    Ok(())
}

pub fn mc_panel(a: &McPanelArgs, out: &Out) -> CliResult<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(d) = a.design {
        cfg.design = match d {
            DesignArg::Fe => McDesign::PanelFe,
            DesignArg::Ife => McDesign::PanelIfe,
        };
    }
    if cfg.design == McDesign::FilterRmse {
        return Err(invalid("mc-panel needs design fe or ife"));
    }
    if let Some(r) = a.reps {
        cfg.replications = r;
    }
    if let Some(b) = a.boot {
        cfg.boot_b = b;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(q) = a.q {
        cfg.q = q;
    }
    if let Some(s) = a.sigma_l {
        cfg.sigma_l = s;
    }
    if let Some(c) = a.components {
        cfg.components = match c {
            ComponentsArg::Estimated => ComponentMode::Estimated,
            ComponentsArg::True => ComponentMode::True,
        };
    }
    let cal = match (&a.calibration_temperature, &a.calibration_growth) {
        (Some(t), Some(g)) => {
            let ds = assemble_dataset(&read_panel(t)?, &read_panel(g)?, None, 1980)?;
            PanelCalibration::from_data(&ds.temperature_window()?, &ds.growth, cfg.q)?
        }
        _ => PanelCalibration::builtin(cfg.q)?,
    };
    let rep = run_mc_panel(&cfg, &cal)?;
    let cov = |v: Option<f64>| v.map(num).unwrap_or_default();
    let rows: Vec<Vec<String>> = rep
        .cells
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                num(c.truth),
                num(c.mean),
                num(c.bias),
                num(c.sd),
                num(c.rmse),
                num(c.coverage_oneway),
                num(c.coverage_twoway),
                cov(c.coverage_boot),
            ]
        })
        .collect();
    wrote(&out.csv(
        &format!("{}.csv", a.prefix),
        &[
            "coefficient",
            "truth",
            "mean",
            "bias",
            "sd",
            "rmse",
            "cov_asy1",
            "cov_asy2",
            "cov_boot",
        ],
        &rows,
    )?);
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a McConfig,
        report: &'a lowfreq::montecarlo::PanelReport,
    }
    wrote(&out.json(
        &format!("{}.json", a.prefix),
        "mc-panel",
        a,
        Some(cfg.seed),
        &Doc {
            config: &cfg,
            report: &rep,
        },
    )?);
    let pct = |v: f64| format!("{:.1}", 100.0 * v);
    let lines: Vec<Vec<String>> = rep
        .cells
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                format!("{:.3}", c.truth),
                format!("{:.3}", c.bias),
                format!("{:.3}", c.sd),
                pct(c.coverage_oneway),
                pct(c.coverage_twoway),
                c.coverage_boot.map(pct).unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    println!(
        "{:?}: N = {}, T = {}, {} replications, B = {}, {:.0}% intervals",
        rep.design,
        rep.n,
        rep.t,
        rep.replications,
        rep.boot_b,
        100.0 * rep.level
    );
    table(
        &["", "truth", "bias", "sd", "asy1 %", "asy2 %", "boot %"],
        &lines,
    );
    Ok(())
}

pub fn synth(a: &SynthArgs, out: &Out) -> CliResult<()> {
    let cfg = SyntheticConfig {
        seed: a.seed,
        ..Default::default()
    };
    let data = generate(&cfg)?;
    wrote(&out.text("nclimdiv_state.txt", &to_nclimdiv(&data.temperature))?);
    let t = out.path("temperature.csv");
    write_long_csv(&data.temperature, File::create(&t)?)?;
    wrote(&t);
    let o = out.path("output_levels.csv");
    write_long_csv(&data.output, File::create(&o)?)?;
    wrote(&o);
    let w = out.path("weights.csv");
    write_weights_csv(&data.temperature.unit_ids, &data.weights, File::create(&w)?)?;
    wrote(&w);
    wrote(&out.json("synthetic.json", "synth", a, Some(a.seed), &cfg)?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn toy() -> Panel {
        Panel::new(
            vec!["A".into(), "B".into()],
            vec![2000, 2001],
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
        )
        .unwrap()
    }

    #[test]
    fn attached_weights_are_normalized() {
        let map: HashMap<String, f64> = [("A".to_string(), 3.0), ("B".to_string(), 1.0)].into();
        let p = attach_weights(toy(), Some(&map)).unwrap();
        assert_eq!(p.weights.unwrap(), vec![0.75, 0.25]);
    }

    #[test]
    fn missing_unit_weight_is_a_validation_error() {
        let map: HashMap<String, f64> = [("A".to_string(), 1.0)].into();
        assert!(matches!(
            attach_weights(toy(), Some(&map)),
            Err(CliError::Validation(_))
        ));
    }

    #[test]
    fn equal_weights_keep_existing_ones() {
        let p = equal_weights(toy()).unwrap();
        assert_eq!(p.weights.as_deref(), Some(&[0.5, 0.5][..]));
        let map: HashMap<String, f64> = [("A".to_string(), 1.0), ("B".to_string(), 3.0)].into();
        let w = equal_weights(attach_weights(toy(), Some(&map)).unwrap()).unwrap();
        assert_eq!(w.weights.unwrap(), vec![0.25, 0.75]);
    }
}
