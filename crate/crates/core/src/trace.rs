//! Uniformly sampled voltage/current traces and their CSV representation.
//!
//! A trace `name.csv` has header `t,v,i` (or `t,v` for excitation-only
//! traces) and nine significant digits per value. Metadata lives next to it
//! in `name.meta.toml`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of a sample time from `t0 + k*dt`.
pub const JITTER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub dt: f64,
    #[serde(default)]
    pub trim_seconds: f64,
    #[serde(default)]
    pub trimmed_samples: usize,
    /// True while the startup transient is still part of the samples.
    #[serde(default = "default_true")]
    pub transient_included: bool,
}

fn default_true() -> bool {
    true
}

impl TraceMeta {
    pub fn new(source: impl Into<String>, dt: f64) -> Self {
        Self {
            source: source.into(),
            seed: None,
            dt,
            trim_seconds: 0.0,
            trimmed_samples: 0,
            transient_included: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub i: Option<Vec<f64>>,
    pub dt: f64,
    pub meta: TraceMeta,
}

impl Trace {
    /// Builds a trace with times `t0 + k*dt`.
    pub fn from_samples(
        t0: f64,
        dt: f64,
        v: Vec<f64>,
        i: Option<Vec<f64>>,
        mut meta: TraceMeta,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidTrace(format!("sample step must be positive, got {dt}")));
        }
        if let Some(i) = &i {
            if i.len() != v.len() {
                return Err(Error::LengthMismatch(format!(
                    "voltage has {} samples, current has {}",
                    v.len(),
                    i.len()
                )));
            }
        }
        let finite = v.iter().chain(i.iter().flatten()).all(|x| x.is_finite());
        if !finite || !t0.is_finite() {
            return Err(Error::InvalidTrace("non-finite sample".into()));
        }
        meta.dt = dt;
        let t = (0..v.len()).map(|k| t0 + k as f64 * dt).collect();
        Ok(Self { t, v, i, dt, meta })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.t.first().copied().unwrap_or(0.0)
    }

    pub fn current(&self) -> Result<&[f64]> {
        self.i
            .as_deref()
            .ok_or_else(|| Error::InvalidTrace("trace has no current column".into()))
    }

    pub fn with_current(mut self, i: Vec<f64>) -> Result<Self> {
        if i.len() != self.v.len() {
            return Err(Error::LengthMismatch(format!(
                "voltage has {} samples, current has {}",
                self.v.len(),
                i.len()
            )));
        }
        if i.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidTrace("non-finite current sample".into()));
        }
        self.i = Some(i);
        Ok(self)
    }

    /// Number of leading samples covering `seconds`.
    pub fn trim_count(&self, seconds: f64) -> usize {
        if seconds <= 0.0 {
            0
        } else {
            (seconds / self.dt - 1e-9).ceil() as usize
        }
    }

    /// Drops the first `seconds` of samples.
    pub fn trim(&self, seconds: f64) -> Result<Trace> {
        if !(seconds.is_finite() && seconds >= 0.0) {
            return Err(Error::InvalidConfig(format!("trim must be non-negative, got {seconds}")));
        }
        let n = self.trim_count(seconds);
        if n >= self.len() {
            return Err(Error::InvalidTrace(format!(
                "trimming {seconds} s removes all {} samples",
                self.len()
            )));
        }
        let mut meta = self.meta.clone();
        meta.trim_seconds += seconds;
        meta.trimmed_samples += n;
        if n > 0 {
            meta.transient_included = false;
        }
        Ok(Trace {
            t: self.t[n..].to_vec(),
            v: self.v[n..].to_vec(),
            i: self.i.as_ref().map(|i| i[n..].to_vec()),
            dt: self.dt,
            meta,
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.len() * 40);
        out.push_str(if self.i.is_some() { "t,v,i\n" } else { "t,v\n" });
        for k in 0..self.len() {
            let _ = write!(out, "{},{}", fmt_g9(self.t[k]), fmt_g9(self.v[k]));
            if let Some(i) = &self.i {
                let _ = write!(out, ",{}", fmt_g9(i[k]));
            }
            out.push('\n');
        }
        out
    }

    /// Parses CSV text. `dt` overrides the step inferred from the time column.
    pub fn from_csv_str(text: &str, meta: Option<TraceMeta>) -> Result<Trace> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidTrace("empty file".into()))?
            .trim();
        let ncol = match header {
            "t,v,i" => 3,
            "t,v" => 2,
            other => return Err(Error::InvalidTrace(format!("unexpected header `{other}`"))),
        };
        let mut t = Vec::new();
        let mut v = Vec::new();
        let mut i = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != ncol {
                return Err(Error::InvalidTrace(format!(
                    "row {} has {} fields, expected {ncol}",
                    row + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                let x: f64 = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: `{s}` is not a number", row + 1)))?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::InvalidTrace(format!("row {}: non-finite value", row + 1)))
                }
            };
            t.push(parse(fields[0])?);
            v.push(parse(fields[1])?);
            if ncol == 3 {
                i.push(parse(fields[2])?);
            }
        }
        if t.len() < 2 {
            return Err(Error::InvalidTrace("need at least two samples".into()));
        }
        let inferred = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        let dt = meta.as_ref().map(|m| m.dt).unwrap_or(inferred);
        check_uniform(&t, dt)?;
        let meta = meta.unwrap_or_else(|| TraceMeta::new("csv", dt));
        Trace::from_samples(t[0], dt, v, (ncol == 3).then_some(i), meta)
    }

    /// Writes `path` and its metadata sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))?;
        let meta = toml::to_string(&self.meta).map_err(|e| Error::Parse(e.to_string()))?;
        let side = meta_path(path);
        fs::write(&side, meta).map_err(|e| Error::io(&side, e))
    }

    /// Reads `path`, using the sidecar metadata when present.
    pub fn read(path: &Path) -> Result<Trace> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let side = meta_path(path);
        let meta = if side.exists() {
            let s = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            Some(toml::from_str::<TraceMeta>(&s).map_err(|e| Error::Parse(format!("{}: {e}", side.display())))?)
        } else {
            None
        };
        Trace::from_csv_str(&text, meta)
    }
}

/// `name.csv` -> `name.meta.toml`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.toml")
}

/// Checks `|t_k - (t_0 + k*dt)|` against the jitter tolerance, widened by the
/// rounding of nine-digit output.
pub fn check_uniform(t: &[f64], dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidTrace(format!("non-uniform or non-increasing time column (dt = {dt})")));
    }
    let t0 = t[0];
    for (k, &tk) in t.iter().enumerate() {
        let expect = t0 + k as f64 * dt;
        let tol = JITTER_TOL + 5e-9 * expect.abs().max(t0.abs());
        if (tk - expect).abs() > tol {
            return Err(Error::InvalidTrace(format!(
                "sample {k} at t = {tk} deviates from uniform grid (expected {expect})"
            )));
        }
    }
    Ok(())
}

/// Formats like C's `%.9g`.
pub fn fmt_g9(x: f64) -> String {
    const P: i32 = 9;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= P {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
