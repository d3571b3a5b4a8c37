//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Everything runs inside a single test so the timed criteria are not
//! competing with other tests for the CPU.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splinedyn::bspline::{cox_de_boor, eval_basis, BSplineBasis, KnotVector};
use splinedyn::config::PipelineConfig;
use splinedyn::discrete::{discretize, rk4_oracle, simulate, DiscretePartition, DtPolicy};
use splinedyn::metrics::{compare_report, gof, nrmse, FitReport, ARX_METHOD, SPLINE_METHOD};
use splinedyn::ode::{
    assign_partitions, extract_model, OdeCoefficients, PartitionFit, PartitionSpec, PartitionedOdeModel,
};
use splinedyn::pipeline;
use splinedyn::smoothing::{diagnostics, fit_penalized, penalty_matrix, Smoother};
use splinedyn::sysid::{benchmark_orders, fit_arx};
use splinedyn::trace::{Trace, TraceMeta};

const SEED: u64 = 20240917;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(failures: &mut Vec<String>, pass: bool, what: String) {
    if !pass {
        failures.push(what);
    }
}

fn finish(failures: Vec<String>, detail: String) -> Outcome {
    if failures.is_empty() {
        Outcome { pass: true, detail }
    } else {
        Outcome {
            pass: false,
            detail: format!("{detail}; failed: {}", failures.join(", ")),
        }
    }
}

fn random_basis(rng: &mut ChaCha8Rng, degree: usize) -> BSplineBasis {
    let lo = rng.random_range(-2.0..1.0);
    let hi = lo + rng.random_range(0.5..4.0);
    let interior = rng.random_range(1..10usize);
    let mut inner: Vec<f64> = (0..interior).map(|_| rng.random_range(lo..hi)).collect();
    inner.sort_by(|a, b| a.total_cmp(b));
    let mut knots = vec![lo; degree + 1];
    knots.extend(inner);
    knots.extend(vec![hi; degree + 1]);
    BSplineBasis::new(KnotVector::new(knots).unwrap(), degree + 1).unwrap()
}

fn spline_core() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut f = Vec::new();
    let (mut pou, mut rec, mut der) = (0.0f64, 0.0f64, 0.0f64);
    let mut min_val = f64::INFINITY;
    let mut support_leak = 0.0f64;
    for degree in 0..=5 {
        for _ in 0..20 {
            let b = random_basis(&mut rng, degree);
            let knots = b.knots().as_slice().to_vec();
            let (lo, hi) = b.domain();
            let mut xs: Vec<f64> = (0..200).map(|_| rng.random_range(lo..hi)).collect();
            xs.extend([lo, hi]);
            let m = eval_basis(&b, &xs, 0).unwrap().values;
            for (r, &x) in xs.iter().enumerate() {
                let row = m.row(r);
                pou = pou.max((row.sum() - 1.0).abs());
                for j in 0..b.nbasis() {
                    let v = row[j];
                    min_val = min_val.min(v);
                    // support of phi_j is [t_j, t_{j+degree+1}]
                    if x < knots[j] || x > knots[j + degree + 1] {
                        support_leak = support_leak.max(v.abs());
                    }
                    rec = rec.max((v - cox_de_boor(&knots, j, degree, x)).abs());
                }
            }
            if degree >= 1 {
                let h = 1e-6 * (hi - lo);
                let breaks = b.knots().breakpoints();
                for &x in &xs {
                    if breaks.iter().any(|&k| (x - k).abs() < 4.0 * h) {
                        continue;
                    }
                    let a = eval_basis(&b, &[x], 1).unwrap().values;
                    let p = eval_basis(&b, &[x + h], 0).unwrap().values;
                    let q = eval_basis(&b, &[x - h], 0).unwrap().values;
                    for j in 0..b.nbasis() {
                        let fd = (p[(0, j)] - q[(0, j)]) / (2.0 * h);
                        let an = a[(0, j)];
                        der = der.max((an - fd).abs() / an.abs().max(1.0));
                    }
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(&mut f, pou <= 1e-10, format!("partition of unity {pou:e}"));
    check(&mut f, min_val >= 0.0, format!("negative value {min_val:e}"));
    check(&mut f, support_leak == 0.0, format!("support leak {support_leak:e}"));
    check(&mut f, rec <= 1e-12, format!("recursion mismatch {rec:e}"));
    check(&mut f, der <= 1e-5, format!("derivative error {der:e}"));
    check(&mut f, secs < 5.0, format!("runtime {secs:.2} s"));
    finish(
        f,
        format!("120 bases, unity {pou:.1e}, recursion {rec:.1e}, derivative {der:.1e}, {secs:.2} s"),
    )
}

fn smoothing_suite() -> Outcome {
    let t0 = Instant::now();
    let mut f = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let basis = BSplineBasis::uniform(0.0, 1.0, 8, 3).unwrap();
    let n = 50;
    let x: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&t| (6.0 * t).sin() + 0.3 * t + 0.05 * rng.random_range(-1.0..1.0))
        .collect();

    // unpenalized fit against a dense least-squares solve
    let fit0 = fit_penalized(&basis, &x, &y, 0.0, 2).unwrap();
    let bm = eval_basis(&basis, &x, 0).unwrap().values;
    let dense = bm
        .clone()
        .svd(true, true)
        .solve(&DVector::from_column_slice(&y), 1e-14)
        .unwrap();
    let ols = fit0
        .coefficients
        .iter()
        .zip(dense.iter())
        .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    check(&mut f, ols <= 1e-8, format!("OLS mismatch {ols:e}"));

    let d0 = diagnostics(&fit0, &x, &y, true).unwrap();
    let s = d0.smoothing_matrix.unwrap();
    let idem = (&s * &s - &s).abs().max();
    let tr = (d0.trace_s - basis.nbasis() as f64).abs();
    check(&mut f, idem <= 1e-8, format!("idempotence {idem:e}"));
    check(&mut f, tr <= 1e-6, format!("trace {tr:e}"));

    // penalty: symmetric, PSD, null space spanned by constants and lines
    let p = penalty_matrix(&basis, 2, 4).unwrap().to_dense();
    let sym = (&p - p.transpose()).abs().max();
    let scale = p.abs().max();
    let min_eig = p.clone().symmetric_eigen().eigenvalues.min();
    let ones = DVector::from_element(basis.nbasis(), 1.0);
    let line = DVector::from_vec(basis.greville());
    let null = (&p * &ones).abs().max().max((&p * &line).abs().max()) / scale;
    check(&mut f, sym <= 1e-10 * scale, format!("asymmetry {sym:e}"));
    check(&mut f, min_eig >= -1e-10 * scale, format!("eigenvalue {min_eig:e}"));
    check(&mut f, null <= 1e-10, format!("null space {null:e}"));

    // OCV shortcut against brute-force leave-one-out refits
    let mut worst_loo = 0.0f64;
    for lambda in [1e-6, 1e-4, 1e-2] {
        let smoother = Smoother::new(&basis, &x, &y).unwrap().with_penalty(2, 4).unwrap();
        let shortcut = smoother.ocv_score(&smoother.solve(lambda).unwrap());
        let mut brute = 0.0;
        for k in 0..n {
            let xs: Vec<f64> = x.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, v)| *v).collect();
            let ys: Vec<f64> = y.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, v)| *v).collect();
            let fk = fit_penalized(&basis, &xs, &ys, lambda, 2).unwrap();
            brute += (y[k] - fk.value(x[k], 0).unwrap()).powi(2);
        }
        brute /= n as f64;
        worst_loo = worst_loo.max((shortcut - brute).abs() / brute);
    }
    check(&mut f, worst_loo <= 1e-6, format!("OCV vs LOO {worst_loo:e}"));

    // heavy penalty tends to the straight-line fit
    let heavy = fit_penalized(&basis, &x, &y, 1e12, 2).unwrap();
    let xm = x.iter().sum::<f64>() / n as f64;
    let ym = y.iter().sum::<f64>() / n as f64;
    let slope = x.iter().zip(&y).map(|(a, b)| (a - xm) * (b - ym)).sum::<f64>()
        / x.iter().map(|a| (a - xm).powi(2)).sum::<f64>();
    let line_err = x
        .iter()
        .map(|&t| (heavy.value(t, 0).unwrap() - (ym + slope * (t - xm))).abs())
        .fold(0.0, f64::max);
    check(&mut f, line_err <= 1e-3, format!("line limit {line_err:e}"));

    let secs = t0.elapsed().as_secs_f64();
    check(&mut f, secs < 30.0, format!("runtime {secs:.2} s"));
    finish(
        f,
        format!("OLS {ols:.1e}, S^2-S {idem:.1e}, OCV/LOO {worst_loo:.1e}, line {line_err:.1e}, {secs:.2} s"),
    )
}

fn surrogate_config(noise: f64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed: Some(SEED),
        ..PipelineConfig::default()
    };
    cfg.plant.noise_sigma = noise;
    cfg
}

fn ode_recovery() -> Outcome {
    let t0 = Instant::now();
    let mut f = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);

    // manufactured data: I = A V + B dI/dt + C exactly, per partition
    let spec = PartitionSpec::default();
    let truth: Vec<(f64, f64, f64)> = (0..spec.count())
        .map(|_| {
            (
                rng.random_range(-40.0..40.0),
                -rng.random_range(0.01..0.2),
                rng.random_range(-30.0..30.0),
            )
        })
        .collect();
    let n = 4000;
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.88..1.08)).collect();
    let d: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
    let i: Vec<f64> = (0..n)
        .map(|k| {
            let (a, b, c) = truth[spec.index(v[k])];
            a * v[k] + b * d[k] + c
        })
        .collect();
    let model = PartitionedOdeModel::fit(&spec, &i, &v, &[d], 1, false).unwrap();
    let mut manufactured = 0.0f64;
    for (p, &(a, b, c)) in model.partitions.iter().zip(&truth) {
        let k = &p.coefficients;
        manufactured = manufactured
            .max((k.a - a).abs())
            .max((k.b[0] - b).abs())
            .max((k.c - c).abs());
    }
    check(&mut f, manufactured <= 1e-8, format!("manufactured {manufactured:e}"));

    // noiseless surrogate: B should come back as -tau
    let cfg = surrogate_config(0.0);
    let (train, _) = pipeline::generate_traces(&cfg).unwrap();
    let spec = cfg.partitions.spec().unwrap();
    let ex = extract_model(&train, &cfg.smoothing, &spec, 1, false).unwrap();
    let assign = assign_partitions(&spec, &train.v);
    let mut worst = 0.0f64;
    let mut checked = Vec::new();
    for (k, p) in ex.model.partitions.iter().enumerate() {
        let (lo, hi) = (spec.edges[k], spec.edges[k + 1]);
        let inside = assign
            .iter()
            .zip(&train.v)
            .filter(|&(&a, _)| a == k)
            .all(|(_, &x)| x >= lo && x <= hi);
        // well populated: own fit, plenty of samples, none clamped in from outside
        if p.degenerate || p.samples < 1000 || !inside {
            continue;
        }
        checked.push(k);
        worst = worst.max((p.coefficients.b[0] / -cfg.plant.tau - 1.0).abs());
    }
    check(&mut f, checked.len() >= 15, format!("only {} partitions checked", checked.len()));
    check(&mut f, worst <= 0.02, format!("B error {:.2} %", worst * 100.0));
    let secs = t0.elapsed().as_secs_f64();
    check(&mut f, secs < 30.0, format!("runtime {secs:.2} s"));
    finish(
        f,
        format!(
            "manufactured {manufactured:.1e}, surrogate B within {:.2} % over {} partitions, {secs:.2} s",
            worst * 100.0,
            checked.len()
        ),
    )
}

fn sine_voltage(dt: f64, seconds: f64) -> Trace {
    let n = (seconds / dt).round() as usize + 1;
    let v: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            0.975 + 0.04 * (2.0 * std::f64::consts::PI * 1.5 * t).sin()
        })
        .collect();
    Trace::from_samples(0.0, dt, v, None, TraceMeta::new("sine", dt)).unwrap()
}

fn backward_euler() -> Outcome {
    let t0 = Instant::now();
    let mut f = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut fixed = 0.0f64;
    let mut contraction = 0.0f64;
    for _ in 0..100 {
        let a = rng.random_range(-50.0..50.0);
        let b = -rng.random_range(1e-3..1.0);
        let c = rng.random_range(-50.0..50.0);
        let dt = rng.random_range(1e-4..1e-2);
        let p = DiscretePartition::new(a, b, c, dt);
        let v = rng.random_range(0.88..1.1);
        let star = p.fixed_point(v);
        fixed = fixed.max((p.step(star, v) - star).abs() / star.abs().max(1.0));
        let e0 = rng.random_range(0.1..1.0);
        let e1 = p.step(star + e0, v) - star;
        let ratio = e1 / e0;
        contraction = contraction.max((ratio - (1.0 / (1.0 - dt / b)).abs()).abs());
    }
    check(&mut f, fixed <= 4.0 * f64::EPSILON, format!("fixed point {fixed:e}"));
    check(&mut f, contraction <= 1e-12, format!("contraction {contraction:e}"));

    // convergence against the RK4 oracle
    let spec = PartitionSpec::default();
    let parts: Vec<PartitionFit> = (0..spec.count())
        .map(|k| PartitionFit {
            coefficients: OdeCoefficients {
                a: -10.0 - 0.5 * k as f64,
                b: vec![-0.05],
                c: 10.0,
            },
            samples: 100,
            sse: 0.0,
            degenerate: false,
            inherited_from: None,
            voltage_dropped: false,
            derivatives_dropped: vec![],
            stable: Some(true),
        })
        .collect();
    let model = PartitionedOdeModel {
        spec,
        order: 1,
        partitions: parts,
    };
    let mut errors = Vec::new();
    for dt in [4e-3, 2e-3, 1e-3] {
        let v = sine_voltage(dt, 2.0);
        let dm = discretize(&model, dt).unwrap();
        let be = simulate(&dm, &v, 0.0, DtPolicy::Error).unwrap();
        let oracle = rk4_oracle(&model, &v, 0.0, 100).unwrap();
        let stride = (4e-3 / dt).round() as usize;
        let err = be
            .iter()
            .zip(&oracle)
            .step_by(stride)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    for &p in &orders {
        check(&mut f, (0.8..=1.2).contains(&p), format!("convergence order {p:.3}"));
    }
    let secs = t0.elapsed().as_secs_f64();
    check(&mut f, secs < 60.0, format!("runtime {secs:.2} s"));
    finish(
        f,
        format!(
            "fixed point {fixed:.1e}, contraction {contraction:.1e}, orders {:.3}/{:.3}, {secs:.2} s",
            orders[0], orders[1]
        ),
    )
}

fn end_to_end(dir: &Path) -> Outcome {
    let mut f = Vec::new();
    let mut cfg = surrogate_config(0.005);
    cfg.output_dir = dir.to_path_buf();
    let gen = pipeline::cmd_generate(&cfg).unwrap();
    let fit = pipeline::cmd_fit(&cfg, &gen.training, None).unwrap();
    let val = pipeline::cmd_validate(&cfg, &fit.model_path, &gen.validation).unwrap();
    let g = val.report.gof_percent;
    let secs = fit.fitted.runtime_seconds;
    check(&mut f, g >= 95.0, format!("validation GoF {g:.2} %"));
    check(&mut f, secs < 60.0, format!("fit runtime {secs:.2} s"));
    check(&mut f, fit.fitted.model_file.partition.len() == 20, "partition count".into());
    finish(f, format!("validation GoF {g:.2} %, fit {secs:.2} s"))
}

fn order_scaling(train: &Trace, cfg: &PipelineConfig) -> Outcome {
    let mut f = Vec::new();
    let mut smoothing = cfg.smoothing.clone();
    smoothing.degree = 5;
    let spec = cfg.partitions.spec().unwrap();
    let rows = benchmark_orders(SPLINE_METHOD, &[1, 4], 3, |order| {
        extract_model(train, &smoothing, &spec, order, false).map(|_| ())
    })
    .unwrap();
    let arx = benchmark_orders(ARX_METHOD, &[1, 4], 3, |order| {
        pipeline::fit_baseline(train, cfg, order).map(|_| ())
    })
    .unwrap();
    let ratio = rows[1].median_seconds / rows[0].median_seconds;
    check(&mut f, ratio <= 1.5, format!("order-4/order-1 ratio {ratio:.3}"));
    finish(
        f,
        format!(
            "spline {:.3} s -> {:.3} s (ratio {ratio:.3}); arx {:.4} s -> {:.4} s",
            rows[0].median_seconds, rows[1].median_seconds, arx[0].median_seconds, arx[1].median_seconds
        ),
    )
}

fn arx_baseline(train: &Trace, validation: &Trace, cfg: &PipelineConfig) -> Outcome {
    let mut f = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let spec = PartitionSpec::uniform(0.9, 0.05, 3).unwrap();
    let len = 3000;
    let v: Vec<f64> = (0..len).map(|_| rng.random_range(0.9..1.05)).collect();
    let assign = assign_partitions(&spec, &v);
    let mut worst = 0.0f64;
    for n in 1..=4 {
        let m = 2;
        // small random coefficients keep the recurrence bounded
        let truth: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.count())
            .map(|_| {
                (
                    (0..n).map(|_| rng.random_range(-0.2..0.2)).collect(),
                    (0..=m).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let mut i = vec![0.0; len];
        for k in 4..len {
            let (a, b) = &truth[assign[k]];
            let mut y = 0.0;
            for j in 0..n {
                y -= a[j] * i[k - 1 - j];
            }
            for j in 0..=m {
                y += b[j] * v[k - j];
            }
            i[k] = y;
        }
        let fit = fit_arx(&i[4..], &v[4..], &assign[4..], &spec, n, m, 1e-3, false).unwrap();
        for (p, (a, b)) in fit.partitions.iter().zip(&truth) {
            for (x, y) in p.a.iter().zip(a).chain(p.b.iter().zip(b)) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    check(&mut f, worst <= 1e-8, format!("recurrence recovery {worst:e}"));

    // the head-to-head only needs one timing run at order one
    let mut base = cfg.clone();
    base.benchmark.runs = 1;
    base.benchmark.orders = vec![1];
    let out = pipeline::run_benchmark(train, validation, &base).unwrap();
    let find = |m: &str| {
        out.comparison
            .rows
            .iter()
            .find(|r| r.report.method == m && r.report.stage == "validation")
            .unwrap()
            .report
            .gof_percent
    };
    let (s, a) = (find(SPLINE_METHOD), find(ARX_METHOD));
    check(&mut f, (s - a).abs() <= 3.0, format!("GoF gap {:.2}", s - a));
    finish(
        f,
        format!("recovery {worst:.1e}, validation GoF spline {s:.2} % vs arx {a:.2} %"),
    )
}

fn metrics_suite() -> Outcome {
    let mut f = Vec::new();
    let n = nrmse(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
    let g = gof(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
    check(&mut f, n == 0.5, format!("NRMSE {n}"));
    check(&mut f, g == 50.0, format!("GoF {g}"));
    let mk = |m: &str, t: f64| FitReport::new(m, "validation", 1, 20, &[0.0, 2.0], &[1.0, 1.0], Some(t)).unwrap();
    let c = compare_report(&[mk(SPLINE_METHOD, 52.16), mk(ARX_METHOD, 254.70)]);
    let s = c.rows.iter().find_map(|r| r.speedup).unwrap();
    let shown = format!("{s:.2}");
    check(&mut f, shown == "4.88", format!("speedup {shown}"));
    finish(f, format!("GoF {g} %, NRMSE {n}, speedup {shown}"))
}

fn strip_runtime(csv: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let keep: Vec<usize> = (0..header.len())
        .filter(|&c| header[c] != "runtime_seconds" && header[c] != "speedup")
        .collect();
    std::iter::once(header)
        .chain(lines.map(|l| l.split(',').collect()))
        .map(|cells| keep.iter().map(|&c| cells[c]).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

fn strip_runtime_text(text: &str) -> String {
    // the text table carries runtimes in its last columns
    text.lines()
        .map(|l| l.split_whitespace().take(8).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism(root: &Path) -> Outcome {
    let mut f = Vec::new();
    let run = |name: &str, parallel: bool| {
        let dir = root.join(name);
        let mut cfg = surrogate_config(0.005);
        cfg.output_dir = dir.clone();
        cfg.parallel = parallel;
        let gen = pipeline::cmd_generate(&cfg).unwrap();
        let fit = pipeline::cmd_fit(&cfg, &gen.training, None).unwrap();
        pipeline::cmd_validate(&cfg, &fit.model_path, &gen.validation).unwrap();
        dir
    };
    let a = run("a", false);
    let b = run("b", false);
    let c = run("c", true);
    let exact = [
        "training.csv",
        "training.meta.toml",
        "validation.csv",
        "validation.meta.toml",
        "model.toml",
        "prediction.csv",
    ];
    let mut compared = 0;
    for other in [&b, &c] {
        for name in exact {
            let same = fs::read(a.join(name)).unwrap() == fs::read(other.join(name)).unwrap();
            check(&mut f, same, format!("{name} differs"));
            compared += 1;
        }
        for name in ["fit_report.csv", "validate_report.csv"] {
            let x = strip_runtime(&fs::read_to_string(a.join(name)).unwrap());
            let y = strip_runtime(&fs::read_to_string(other.join(name)).unwrap());
            check(&mut f, x == y, format!("{name} differs"));
            compared += 1;
        }
        for name in ["fit_report.txt", "validate_report.txt"] {
            let x = strip_runtime_text(&fs::read_to_string(a.join(name)).unwrap());
            let y = strip_runtime_text(&fs::read_to_string(other.join(name)).unwrap());
            check(&mut f, x == y, format!("{name} differs"));
            compared += 1;
        }
    }
    finish(f, format!("{compared} file comparisons over serial and parallel runs"))
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = surrogate_config(0.005);
    let (train, validation) = pipeline::generate_traces(&cfg).unwrap();

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("spline core", Box::new(spline_core)),
        ("smoothing", Box::new(smoothing_suite)),
        ("ODE extraction recovery", Box::new(ode_recovery)),
        ("backward Euler", Box::new(backward_euler)),
        ("end-to-end surrogate", Box::new(|| end_to_end(&tmp.path().join("e2e")))),
        ("order scaling", Box::new(|| order_scaling(&train, &cfg))),
        ("ARX baseline", Box::new(|| arx_baseline(&train, &validation, &cfg))),
        ("metrics", Box::new(metrics_suite)),
        ("determinism", Box::new(|| determinism(&tmp.path().join("det")))),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} {} {name}: {}", k + 1, out.detail);
        if !out.pass {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
