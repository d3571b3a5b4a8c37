//! Command implementations shared by the CLI and the integration tests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use crate::bspline::{eval_basis, BSplineBasis};
use crate::config::PipelineConfig;
use crate::discrete::{discretize, simulate};
use crate::error::{Error, Result};
use crate::metrics::{compare_report, Comparison, FitReport, ARX_METHOD, SPLINE_METHOD};
use crate::model_file::ModelFile;
use crate::ode::{assign_partitions, extract_model, Extraction};
use crate::plant::{simulate_plant, PlantConfig};
use crate::signal::{gen_log_square_chirp, gen_square_step};
use crate::smoothing::{evaluate, fit_penalized, select_lambda_ocv, DomainKind, SmoothFit};
use crate::sysid::{benchmark_orders, fit_arx, median, ArxModel, BenchmarkRow};
use crate::trace::{fmt_g9, Trace};

pub const TRAINING_FILE: &str = "training.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const MODEL_FILE: &str = "model.toml";
pub const PREDICTION_FILE: &str = "prediction.csv";

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Training (chirp) and validation (step) traces through the surrogate plant,
/// trimmed by `cfg.trim_seconds`.
pub fn generate_traces(cfg: &PipelineConfig) -> Result<(Trace, Trace)> {
    cfg.validate()?;
    let run = |voltage: Trace, seed: u64| -> Result<Trace> {
        let plant = PlantConfig {
            seed,
            ..cfg.plant.clone()
        };
        simulate_plant(&plant, &voltage)?.trim(cfg.trim_seconds)
    };
    let training = run(gen_log_square_chirp(&cfg.chirp)?, cfg.training_seed()?)?;
    let validation = run(gen_square_step(&cfg.step)?, cfg.validation_seed()?)?;
    Ok((training, validation))
}

pub struct Generated {
    pub training: PathBuf,
    pub validation: PathBuf,
}

pub fn cmd_generate(cfg: &PipelineConfig) -> Result<Generated> {
    let (training, validation) = generate_traces(cfg)?;
    let out = Generated {
        training: cfg.output_dir.join(TRAINING_FILE),
        validation: cfg.output_dir.join(VALIDATION_FILE),
    };
    training.write(&out.training)?;
    validation.write(&out.validation)?;
    write_text(&cfg.output_dir.join("config.toml"), &cfg.to_toml()?)?;
    info!(
        "wrote {} ({} samples) and {} ({} samples)",
        out.training.display(),
        training.len(),
        out.validation.display(),
        validation.len()
    );
    Ok(out)
}

/// Applies whatever part of the configured trim the trace has not had yet.
pub fn prepare(trace: &Trace, cfg: &PipelineConfig) -> Result<Trace> {
    let remaining = cfg.trim_seconds - trace.meta.trim_seconds;
    if remaining > 1e-12 {
        trace.trim(remaining)
    } else {
        Ok(trace.clone())
    }
}

pub struct Fitted {
    pub extraction: Extraction,
    pub model_file: ModelFile,
    pub report: FitReport,
    pub runtime_seconds: f64,
}

/// Extraction on an already prepared trace; runtime covers the numerics only.
pub fn fit_trace(trace: &Trace, cfg: &PipelineConfig) -> Result<Fitted> {
    cfg.validate()?;
    let spec = cfg.partitions.spec()?;
    let t0 = Instant::now();
    let extraction = extract_model(trace, &cfg.smoothing, &spec, cfg.order, cfg.parallel)?;
    let runtime_seconds = t0.elapsed().as_secs_f64();
    let report = FitReport::new(
        SPLINE_METHOD,
        "training",
        cfg.order,
        spec.count(),
        trace.current()?,
        &extraction.in_sample,
        Some(runtime_seconds),
    )?;
    let model_file = ModelFile::new(&extraction.model, &extraction.smooth, trace.dt);
    Ok(Fitted {
        extraction,
        model_file,
        report,
        runtime_seconds,
    })
}

/// Static current-versus-voltage smoothing fit and its goodness of fit.
pub fn voltage_diagnostic(trace: &Trace, cfg: &PipelineConfig) -> Result<(SmoothFit, FitReport)> {
    let vc = &cfg.smoothing.voltage;
    let basis = BSplineBasis::uniform(vc.lo, vc.hi, vc.grid_size, vc.degree)?;
    let i = trace.current()?;
    let m = cfg.smoothing.penalty_order.min(vc.degree);
    let sel = select_lambda_ocv(&basis, &trace.v, i, m, &cfg.smoothing.lambda_grid)?;
    let fit = fit_penalized(&basis, &trace.v, i, sel.best_lambda, m)?.with_domain(DomainKind::Voltage);
    let pred = evaluate(&fit, &trace.v, 0)?;
    let report = FitReport::new("spline-voltage", "training", 0, 1, i, &pred, None)?;
    Ok((fit, report))
}

pub struct FitOutcome {
    pub model_path: PathBuf,
    pub fitted: Fitted,
    pub reports: Comparison,
}

pub fn cmd_fit(cfg: &PipelineConfig, training: &Path, model_out: Option<&Path>) -> Result<FitOutcome> {
    let trace = prepare(&Trace::read(training)?, cfg)?;
    let fitted = fit_trace(&trace, cfg)?;
    let model_path = model_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.join(MODEL_FILE));
    fitted.model_file.write(&model_path)?;
    let mut rows = vec![fitted.report.clone()];
    if trace.v.iter().all(|&v| (cfg.smoothing.voltage.lo..=cfg.smoothing.voltage.hi).contains(&v)) {
        rows.push(voltage_diagnostic(&trace, cfg)?.1);
    }
    let reports = compare_report(&rows);
    write_text(&cfg.output_dir.join("fit_report.csv"), &reports.to_csv())?;
    write_text(&cfg.output_dir.join("fit_report.txt"), &reports.to_text())?;
    info!(
        "fit order {} in {:.3} s, in-sample GoF {:.2} %",
        cfg.order, fitted.runtime_seconds, fitted.report.gof_percent
    );
    Ok(FitOutcome {
        model_path,
        fitted,
        reports,
    })
}

/// Backward-Euler free run of a first-order model along `trace`, starting
/// from the first measured current.
pub fn predict_trace(model: &ModelFile, trace: &Trace, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let ode = model.model()?;
    let dm = discretize(&ode, model.dt)?;
    let i = trace.current()?;
    simulate(&dm, trace, i[0], cfg.dt_policy)
}

pub fn prediction_csv(trace: &Trace, predicted: &[f64]) -> Result<String> {
    let i = trace.current()?;
    let mut out = String::from("t,v,i_measured,i_predicted\n");
    for k in 0..trace.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_g9(trace.t[k]),
            fmt_g9(trace.v[k]),
            fmt_g9(i[k]),
            fmt_g9(predicted[k])
        );
    }
    Ok(out)
}

pub struct ValidateOutcome {
    pub report: FitReport,
    pub predicted: Vec<f64>,
    pub prediction_path: PathBuf,
}

pub fn cmd_validate(cfg: &PipelineConfig, model_path: &Path, validation: &Path) -> Result<ValidateOutcome> {
    let model = ModelFile::read(model_path)?;
    let trace = prepare(&Trace::read(validation)?, cfg)?;
    let predicted = predict_trace(&model, &trace, cfg)?;
    let report = FitReport::new(
        SPLINE_METHOD,
        "validation",
        model.order,
        model.partition.len(),
        trace.current()?,
        &predicted,
        None,
    )?;
    let prediction_path = cfg.output_dir.join(PREDICTION_FILE);
    write_text(&prediction_path, &prediction_csv(&trace, &predicted)?)?;
    let reports = compare_report(std::slice::from_ref(&report));
    write_text(&cfg.output_dir.join("validate_report.csv"), &reports.to_csv())?;
    write_text(&cfg.output_dir.join("validate_report.txt"), &reports.to_text())?;
    info!("validation GoF {:.2} %", report.gof_percent);
    Ok(ValidateOutcome {
        report,
        predicted,
        prediction_path,
    })
}

/// ARX fit of the baseline on a prepared training trace.
pub fn fit_baseline(trace: &Trace, cfg: &PipelineConfig, n: usize) -> Result<ArxModel> {
    let spec = cfg.partitions.spec()?;
    let assign = assign_partitions(&spec, &trace.v);
    fit_arx(
        trace.current()?,
        &trace.v,
        &assign,
        &spec,
        n,
        cfg.benchmark.arx_m,
        trace.dt,
        cfg.parallel,
    )
}

pub struct BenchmarkOutcome {
    pub rows: Vec<BenchmarkRow>,
    pub comparison: Comparison,
}

pub fn benchmark_csv(rows: &[BenchmarkRow]) -> String {
    let mut out = String::from("method,order,median_seconds,run_seconds\n");
    for r in rows {
        let runs: Vec<String> = r.runs.iter().map(|&t| fmt_g9(t)).collect();
        let _ = writeln!(out, "{},{},{},{}", r.method, r.order, fmt_g9(r.median_seconds), runs.join(";"));
    }
    out
}

pub fn benchmark_text(rows: &[BenchmarkRow]) -> String {
    let mut out = format!("{:<12} {:>5} {:>14}\n", "method", "order", "median s");
    for r in rows {
        let _ = writeln!(out, "{:<12} {:>5} {:>14.4}", r.method, r.order, r.median_seconds);
    }
    out
}

/// Fit-time scaling of both methods over the configured orders, plus a
/// head-to-head validation comparison at order one.
pub fn run_benchmark(training: &Trace, validation: &Trace, cfg: &PipelineConfig) -> Result<BenchmarkOutcome> {
    let orders = &cfg.benchmark.orders;
    let runs = cfg.benchmark.runs;
    // one spline degree for every order keeps the timings comparable
    let max_order = orders.iter().copied().max().unwrap_or(1);
    let mut bench_cfg = cfg.clone();
    bench_cfg.smoothing.degree = cfg.smoothing.degree.max(max_order + 1);
    let spec = cfg.partitions.spec()?;

    let mut rows = benchmark_orders(SPLINE_METHOD, orders, runs, |order| {
        extract_model(training, &bench_cfg.smoothing, &spec, order, cfg.parallel).map(|_| ())
    })?;
    rows.extend(benchmark_orders(ARX_METHOD, orders, runs, |order| {
        fit_baseline(training, cfg, order).map(|_| ())
    })?);

    // head-to-head at the configured settings, order one
    let mut base = cfg.clone();
    base.order = 1;
    let mut spline_times = Vec::with_capacity(runs);
    let mut fitted = None;
    for _ in 0..runs.max(1) {
        let f = fit_trace(training, &base)?;
        spline_times.push(f.runtime_seconds);
        fitted = Some(f);
    }
    let fitted = fitted.expect("at least one run");
    let spline_time = median(&spline_times);
    let mut arx_times = Vec::with_capacity(runs);
    let mut arx = None;
    for _ in 0..runs.max(1) {
        let t0 = Instant::now();
        let m = fit_baseline(training, &base, 1)?;
        arx_times.push(t0.elapsed().as_secs_f64());
        arx = Some(m);
    }
    let arx = arx.expect("at least one run");
    let arx_time = median(&arx_times);

    let vi = validation.current()?;
    let k = spec.count();
    let spline_pred = predict_trace(&fitted.model_file, validation, &base)?;
    let sim = arx.simulate(&validation.v, &vi[..arx.lag_start()])?;
    let one_step = arx.predict_one_step(vi, &validation.v);
    let mut train_report = fitted.report.clone();
    train_report.runtime_seconds = Some(spline_time);
    let reports = vec![
        train_report,
        FitReport::new(SPLINE_METHOD, "validation", 1, k, vi, &spline_pred, Some(spline_time))?,
        FitReport::new(ARX_METHOD, "validation", 1, k, vi, &sim.current, Some(arx_time))?,
        FitReport::new("arx-one-step", "validation", 1, k, vi, &one_step, None)?,
    ];
    Ok(BenchmarkOutcome {
        rows,
        comparison: compare_report(&reports),
    })
}

pub fn cmd_benchmark(cfg: &PipelineConfig, training: &Path, validation: &Path) -> Result<BenchmarkOutcome> {
    let training = prepare(&Trace::read(training)?, cfg)?;
    let validation = prepare(&Trace::read(validation)?, cfg)?;
    let out = run_benchmark(&training, &validation, cfg)?;
    write_text(&cfg.output_dir.join("benchmark.csv"), &benchmark_csv(&out.rows))?;
    write_text(&cfg.output_dir.join("benchmark.txt"), &benchmark_text(&out.rows))?;
    write_text(&cfg.output_dir.join("comparison.csv"), &out.comparison.to_csv())?;
    write_text(&cfg.output_dir.join("comparison.txt"), &out.comparison.to_text())?;
    Ok(out)
}

/// Evaluated basis functions as CSV `x,phi_0,...`.
pub fn basis_dump(basis: &BSplineBasis, points: usize, derivative: usize) -> Result<String> {
    if points < 2 {
        return Err(Error::InvalidConfig("basis dump needs at least two points".into()));
    }
    let (lo, hi) = basis.domain();
    let x: Vec<f64> = (0..points)
        .map(|k| if k == points - 1 { hi } else { lo + (hi - lo) * k as f64 / (points - 1) as f64 })
        .collect();
    let m = eval_basis(basis, &x, derivative)?;
    let mut out = String::from("x");
    for j in 0..basis.nbasis() {
        let _ = write!(out, ",phi_{j}");
    }
    out.push('\n');
    for (r, xr) in x.iter().enumerate() {
        out.push_str(&fmt_g9(*xr));
        for j in 0..basis.nbasis() {
            out.push(',');
            out.push_str(&fmt_g9(m.values[(r, j)]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Long-format `series,x,y` rows from trace, prediction and basis-dump files.
pub fn cmd_plotdata(files: &[PathBuf]) -> Result<String> {
    let mut out = String::from("series,x,y\n");
    for path in files {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().unwrap_or("").trim().to_string();
        let cols: Vec<&str> = header.split(',').collect();
        // (x column, y columns)
        let (xcol, ycols): (usize, Vec<usize>) = match cols.as_slice() {
            ["t", "v", "i"] => (0, vec![2]),
            ["t", "v"] => (0, vec![1]),
            ["t", "v", "i_measured", "i_predicted"] => (0, vec![2, 3]),
            ["x", rest @ ..] if !rest.is_empty() && rest.iter().enumerate().all(|(j, c)| *c == format!("phi_{j}")) => {
                (0, (1..cols.len()).collect())
            }
            _ => {
                return Err(Error::UnknownSchema {
                    path: path.clone(),
                    header,
                })
            }
        };
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        if let Some((r, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols.len()) {
            return Err(Error::Parse(format!("{}: row {} has the wrong field count", path.display(), r + 1)));
        }
        for &c in &ycols {
            let name = cols[c].trim_start_matches("i_");
            for r in &rows {
                let _ = writeln!(out, "{stem}:{name},{},{}", r[xcol].trim(), r[c].trim());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_gives_one_series() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("train.csv");
        fs::write(&p, "t,v,i\n0,1,2\n0.001,1,3\n").unwrap();
        let out = cmd_plotdata(&[p]).unwrap();
        assert_eq!(out, "series,x,y\ntrain:i,0,2\ntrain:i,0.001,3\n");
    }

    #[test]
    fn prediction_gives_two_series() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pred.csv");
        fs::write(&p, "t,v,i_measured,i_predicted\n0,1,2,2.5\n").unwrap();
        let out = cmd_plotdata(&[p]).unwrap();
        assert_eq!(out, "series,x,y\npred:measured,0,2\npred:predicted,0,2.5\n");
    }

    #[test]
    fn empty_input_list() {
        assert_eq!(cmd_plotdata(&[]).unwrap(), "series,x,y\n");
    }

    #[test]
    fn unknown_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(cmd_plotdata(&[p]), Err(Error::UnknownSchema { .. })));
    }

    #[test]
    fn basis_dump_has_twenty_series() {
        let basis = BSplineBasis::uniform(0.88, 1.10, 17, 3).unwrap();
        let dump = basis_dump(&basis, 221, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("basis.csv");
        fs::write(&p, &dump).unwrap();
        let out = cmd_plotdata(&[p]).unwrap();
        let mut names: Vec<&str> = out.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        names.dedup();
        assert_eq!(names.len(), 20);
        assert_eq!(out.lines().count(), 1 + 20 * 221);
    }

    #[test]
    fn prepare_trims_only_the_remainder() {
        let tr = Trace::from_samples(0.0, 1e-3, vec![1.0; 3000], None, crate::trace::TraceMeta::new("x", 1e-3))
            .unwrap();
        let cfg = PipelineConfig::default();
        let once = prepare(&tr, &cfg).unwrap();
        assert_eq!(once.len(), 1800);
        assert_eq!(prepare(&once, &cfg).unwrap().len(), 1800);
    }
}
