use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use splinedyn::bspline::BSplineBasis;
use splinedyn::config::PipelineConfig;
use splinedyn::discrete::DtPolicy;
use splinedyn::pipeline::{self, MODEL_FILE, TRAINING_FILE, VALIDATION_FILE};
use splinedyn::Result;

#[derive(Parser)]
#[command(name = "splinedyn", version, about = "Spline-based dynamic models of inverter Volt-Var response")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the pipeline commands; each one overrides a config key.
#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sample step in seconds
    #[arg(long)]
    dt: Option<f64>,
    /// ODE order
    #[arg(long)]
    order: Option<usize>,
    /// Number of voltage partitions of the default width
    #[arg(long)]
    partitions: Option<usize>,
    /// Seconds of startup transient to drop
    #[arg(long)]
    trim: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Fit partitions concurrently
    #[arg(long)]
    parallel: bool,
    /// What to do when model and trace steps differ: error or resample
    #[arg(long, value_parser = parse_policy)]
    dt_policy: Option<DtPolicy>,
}

fn parse_policy(s: &str) -> std::result::Result<DtPolicy, String> {
    match s {
        "error" => Ok(DtPolicy::Error),
        "resample" => Ok(DtPolicy::Resample),
        _ => Err(format!("expected `error` or `resample`, got `{s}`")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write chirp training and step validation traces
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a partitioned ODE model to a training trace
    Fit {
        #[command(flatten)]
        common: Common,
        /// Defaults to <output-dir>/training.csv
        #[arg(long)]
        training: Option<PathBuf>,
        /// Defaults to <output-dir>/model.toml
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Free-run a first-order model on a validation trace
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        validation: Option<PathBuf>,
        /// Exit with status 1 when the GoF percentage is below this value
        #[arg(long)]
        assert_gof: Option<f64>,
    },
    /// Fit-time scaling and head-to-head comparison against the ARX baseline
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        training: Option<PathBuf>,
        #[arg(long)]
        validation: Option<PathBuf>,
        /// Comma-separated model orders
        #[arg(long, value_delimiter = ',')]
        orders: Option<Vec<usize>>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Convert trace, prediction and basis-dump files to long-format series
    Plotdata {
        files: Vec<PathBuf>,
        /// Write here instead of standard output
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Tabulate B-spline basis functions on a uniform grid
    BasisDump {
        #[arg(long, default_value_t = 0.88)]
        lo: f64,
        #[arg(long, default_value_t = 1.10)]
        hi: f64,
        /// Number of knot spans
        #[arg(long, default_value_t = 17)]
        grid_size: usize,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        #[arg(long, default_value_t = 221)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        derivative: usize,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if let Some(dt) = c.dt {
        cfg.set_dt(dt);
    }
    if let Some(o) = c.order {
        cfg.order = o;
    }
    if let Some(k) = c.partitions {
        cfg.partitions.count = k;
        cfg.partitions.edges = None;
    }
    if let Some(t) = c.trim {
        cfg.trim_seconds = t;
    }
    if let Some(d) = &c.output_dir {
        cfg.output_dir = d.clone();
    }
    if c.parallel {
        cfg.parallel = true;
    }
    if let Some(p) = c.dt_policy {
        cfg.dt_policy = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn or_default(p: Option<PathBuf>, cfg: &PipelineConfig, name: &str) -> PathBuf {
    p.unwrap_or_else(|| cfg.output_dir.join(name))
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| splinedyn::Error::io(p, e)),
        None => {
            use std::io::Write;
            // a closed pipe (e.g. `| head`) is not an error
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            Ok(())
        }
    }
}

/// Ok(false) signals a failed GoF assertion.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { common } => {
            let cfg = load_config(&common)?;
            let out = pipeline::cmd_generate(&cfg)?;
            emit(&format!("{}\n{}\n", out.training.display(), out.validation.display()), None)?;
        }
        Command::Fit {
            common,
            training,
            model,
        } => {
            let cfg = load_config(&common)?;
            let training = or_default(training, &cfg, TRAINING_FILE);
            let out = pipeline::cmd_fit(&cfg, &training, model.as_deref())?;
            emit(&out.reports.to_text(), None)?;
            info!("model written to {}", out.model_path.display());
        }
        Command::Validate {
            common,
            model,
            validation,
            assert_gof,
        } => {
            let cfg = load_config(&common)?;
            let model = or_default(model, &cfg, MODEL_FILE);
            let validation = or_default(validation, &cfg, VALIDATION_FILE);
            let out = pipeline::cmd_validate(&cfg, &model, &validation)?;
            emit(&splinedyn::metrics::compare_report(&[out.report.clone()]).to_text(), None)?;
            if let Some(th) = assert_gof {
                if !(out.report.gof_percent >= th) {
                    error!("validation GoF {:.2} % is below {th} %", out.report.gof_percent);
                    return Ok(false);
                }
            }
        }
        Command::Benchmark {
            common,
            training,
            validation,
            orders,
            runs,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(o) = orders {
                cfg.benchmark.orders = o;
            }
            if let Some(r) = runs {
                cfg.benchmark.runs = r;
            }
            cfg.validate()?;
            let training = or_default(training, &cfg, TRAINING_FILE);
            let validation = or_default(validation, &cfg, VALIDATION_FILE);
            let out = pipeline::cmd_benchmark(&cfg, &training, &validation)?;
            emit(&format!("{}\n{}", pipeline::benchmark_text(&out.rows), out.comparison.to_text()), None)?;
        }
        Command::Plotdata { files, output } => {
            emit(&pipeline::cmd_plotdata(&files)?, output.as_deref())?;
        }
        Command::BasisDump {
            lo,
            hi,
            grid_size,
            degree,
            points,
            derivative,
            output,
        } => {
            let basis = BSplineBasis::uniform(lo, hi, grid_size, degree)?;
            emit(&pipeline::basis_dump(&basis, points, derivative)?, output.as_deref())?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}
