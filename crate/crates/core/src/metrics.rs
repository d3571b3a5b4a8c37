//! Fit quality metrics and comparison tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::fmt_g9;

pub const SPLINE_METHOD: &str = "spline-ode";
pub const ARX_METHOD: &str = "arx";

/// Reference validation figures printed under text reports.
pub const REFERENCE_FOOTER: &str =
    "reference validation GoF: spline-ode 98.74 %, transfer function 99.03 % (measured plant, not this surrogate)";

fn check_pair(measured: &[f64], predicted: &[f64]) -> Result<()> {
    if measured.len() != predicted.len() {
        return Err(Error::LengthMismatch(format!(
            "measured has {} samples, predicted has {}",
            measured.len(),
            predicted.len()
        )));
    }
    if measured.len() < 2 {
        return Err(Error::InvalidConfig("need at least two samples for NRMSE".into()));
    }
    Ok(())
}

pub fn rmse(measured: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(measured, predicted)?;
    let mse = measured
        .iter()
        .zip(predicted)
        .map(|(m, p)| (m - p).powi(2))
        .sum::<f64>()
        / measured.len() as f64;
    Ok(mse.sqrt())
}

/// RMSE divided by the range of the measured series.
pub fn nrmse(measured: &[f64], predicted: &[f64]) -> Result<f64> {
    let r = rmse(measured, predicted)?;
    let lo = measured.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = measured.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Err(Error::DegenerateRange);
    }
    Ok(r / (hi - lo))
}

/// Goodness of fit in percent, `(1 - NRMSE) * 100`.
pub fn gof(measured: &[f64], predicted: &[f64]) -> Result<f64> {
    Ok((1.0 - nrmse(measured, predicted)?) * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    /// `training` or `validation`.
    pub stage: String,
    pub order: usize,
    pub partitions: usize,
    pub n_samples: usize,
    pub rmse: f64,
    pub nrmse: f64,
    pub gof_percent: f64,
    pub max_abs_error: f64,
    pub mean_error: f64,
    pub runtime_seconds: Option<f64>,
}

impl FitReport {
    pub fn new(
        method: &str,
        stage: &str,
        order: usize,
        partitions: usize,
        measured: &[f64],
        predicted: &[f64],
        runtime_seconds: Option<f64>,
    ) -> Result<Self> {
        let nrmse = nrmse(measured, predicted)?;
        let err: Vec<f64> = measured.iter().zip(predicted).map(|(m, p)| p - m).collect();
        Ok(Self {
            method: method.to_string(),
            stage: stage.to_string(),
            order,
            partitions,
            n_samples: measured.len(),
            rmse: rmse(measured, predicted)?,
            nrmse,
            gof_percent: (1.0 - nrmse) * 100.0,
            max_abs_error: err.iter().fold(0.0, |a, e| a.max(e.abs())),
            mean_error: err.iter().sum::<f64>() / err.len() as f64,
            runtime_seconds,
        })
    }
}

/// One table row; `speedup` is this row's runtime over the matching spline row's.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub report: FitReport,
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Runtime ratio `baseline / spline`.
pub fn speedup(baseline_seconds: f64, spline_seconds: f64) -> Option<f64> {
    (spline_seconds > 0.0 && baseline_seconds.is_finite()).then(|| baseline_seconds / spline_seconds)
}

/// Sorts reports by method, stage and order and attaches speedups of
/// non-spline rows over the spline row with the same stage and order.
pub fn compare_report(reports: &[FitReport]) -> Comparison {
    let mut sorted = reports.to_vec();
    sorted.sort_by(|a, b| {
        (a.method.as_str(), a.stage.as_str(), a.order).cmp(&(b.method.as_str(), b.stage.as_str(), b.order))
    });
    let rows = sorted
        .iter()
        .map(|r| {
            let speedup = if r.method == SPLINE_METHOD {
                None
            } else {
                sorted
                    .iter()
                    .find(|s| s.method == SPLINE_METHOD && s.stage == r.stage && s.order == r.order)
                    .and_then(|s| match (r.runtime_seconds, s.runtime_seconds) {
                        (Some(b), Some(sp)) => speedup(b, sp),
                        _ => None,
                    })
            };
            ComparisonRow {
                report: r.clone(),
                speedup,
            }
        })
        .collect();
    Comparison { rows }
}

const CSV_HEADER: &str =
    "method,stage,order,partitions,n_samples,rmse,nrmse,gof_percent,max_abs_error,mean_error,runtime_seconds,speedup";

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g9).unwrap_or_default()
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let r = &row.report;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.stage,
                r.order,
                r.partitions,
                r.n_samples,
                fmt_g9(r.rmse),
                fmt_g9(r.nrmse),
                fmt_g9(r.gof_percent),
                fmt_g9(r.max_abs_error),
                fmt_g9(r.mean_error),
                opt(r.runtime_seconds),
                opt(row.speedup),
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let header = [
            "method", "stage", "order", "K", "samples", "RMSE", "NRMSE", "GoF %", "runtime s", "speedup",
        ];
        let body: Vec<[String; 10]> = self
            .rows
            .iter()
            .map(|row| {
                let r = &row.report;
                [
                    r.method.clone(),
                    r.stage.clone(),
                    r.order.to_string(),
                    r.partitions.to_string(),
                    r.n_samples.to_string(),
                    format!("{:.5}", r.rmse),
                    format!("{:.5}", r.nrmse),
                    format!("{:.2}", r.gof_percent),
                    r.runtime_seconds.map(|t| format!("{t:.3}")).unwrap_or_default(),
                    row.speedup.map(|s| format!("{s:.2}")).unwrap_or_default(),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let line = |cells: Vec<&str>, out: &mut String| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, w))| if c < 2 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(header.to_vec(), &mut out);
        for r in &body {
            line(r.iter().map(|s| s.as_str()).collect(), &mut out);
        }
        out.push('\n');
        out.push_str(REFERENCE_FOOTER);
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(method: &str, runtime: f64) -> FitReport {
        FitReport::new(method, "training", 1, 20, &[0.0, 2.0], &[1.0, 1.0], Some(runtime)).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let m = [1.0, 3.0, 2.0];
        assert_eq!(nrmse(&m, &m).unwrap(), 0.0);
        assert_eq!(gof(&m, &m).unwrap(), 100.0);
    }

    #[test]
    fn half_range_error() {
        assert_eq!(rmse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(nrmse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(gof(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 50.0);
    }

    #[test]
    fn constant_measurement_is_degenerate() {
        assert!(matches!(nrmse(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::DegenerateRange)));
    }

    #[test]
    fn report_invariant() {
        let r = report(SPLINE_METHOD, 1.0);
        assert!((r.gof_percent - (1.0 - r.nrmse) * 100.0).abs() <= 1e-12);
        assert_eq!(r.max_abs_error, 1.0);
        assert_eq!(r.mean_error, 0.0);
    }

    #[test]
    fn single_report_has_no_speedup() {
        let c = compare_report(&[report(SPLINE_METHOD, 52.16)]);
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.rows[0].speedup, None);
        assert!(c.to_csv().lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn headline_speedup() {
        let c = compare_report(&[report(ARX_METHOD, 254.70), report(SPLINE_METHOD, 52.16)]);
        assert_eq!(c.rows[0].report.method, ARX_METHOD);
        let s = c.rows[0].speedup.unwrap();
        assert_eq!(format!("{s:.2}"), "4.88");
        assert!(c.to_text().contains("4.88"));
    }

    #[test]
    fn equal_runtimes() {
        let c = compare_report(&[report(ARX_METHOD, 3.0), report(SPLINE_METHOD, 3.0)]);
        assert_eq!(c.rows[0].speedup, Some(1.0));
    }

    #[test]
    fn text_has_footer() {
        let t = compare_report(&[report(SPLINE_METHOD, 1.0)]).to_text();
        assert!(t.trim_end().ends_with(REFERENCE_FOOTER));
    }
}
