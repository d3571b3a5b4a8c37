//! Per-partition ARX baseline.
//!
//! Each partition fits the equation-error model
//!
//! ```text
//! I[k] + a_1*I[k-1] + ... + a_n*I[k-n] = b_0*V[k] + ... + b_m*V[k-m]
//! ```
//!
//! by linear least squares, the partition being chosen by `V[k]`.

use std::time::Instant;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lstsq_drop_dependent;
use crate::ode::PartitionSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxPartition {
    /// Denominator `a_1..a_n`.
    pub a: Vec<f64>,
    /// Numerator `b_0..b_m`.
    pub b: Vec<f64>,
    pub rows: usize,
    pub degenerate: bool,
    pub inherited_from: Option<usize>,
    /// Regressor columns (0-based, output lags first) found dependent and zeroed.
    pub dropped: Vec<usize>,
    /// All poles strictly inside the unit circle.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxModel {
    pub spec: PartitionSpec,
    pub n: usize,
    pub m: usize,
    pub dt: f64,
    pub partitions: Vec<ArxPartition>,
    /// Min and max of the training output.
    pub train_range: (f64, f64),
}

/// Poles of `z^n + a_1 z^{n-1} + ... + a_n` inside the unit circle.
pub fn poles_stable(a: &[f64]) -> bool {
    let n = a.len();
    if n == 0 {
        return true;
    }
    let companion = DMatrix::from_fn(n, n, |r, c| {
        if r == 0 {
            -a[c]
        } else if r == c + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion.complex_eigenvalues().iter().all(|z| z.norm() < 1.0)
}

fn lag_start(n: usize, m: usize) -> usize {
    n.max(m)
}

/// Fits one ARX model per partition. `assign[k]` is the partition of sample `k`.
#[allow(clippy::too_many_arguments)]
pub fn fit_arx(
    i: &[f64],
    v: &[f64],
    assign: &[usize],
    spec: &PartitionSpec,
    n: usize,
    m: usize,
    dt: f64,
    parallel: bool,
) -> Result<ArxModel> {
    if n == 0 {
        return Err(Error::InvalidConfig("ARX needs at least one pole (n >= 1)".into()));
    }
    if i.len() != v.len() || assign.len() != v.len() {
        return Err(Error::LengthMismatch("ARX inputs differ in length".into()));
    }
    let k_parts = spec.count();
    if let Some(&bad) = assign.iter().find(|&&p| p >= k_parts) {
        return Err(Error::InvalidConfig(format!("partition index {bad} out of range")));
    }
    let start = lag_start(n, m);
    let p = n + m + 1;
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); k_parts];
    for k in start..i.len() {
        rows[assign[k]].push(k);
    }
    let fit_one = |idx: &Vec<usize>| -> Option<ArxPartition> {
        if idx.len() < p + 1 {
            return None;
        }
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
        for j in 1..=n {
            cols.push(idx.iter().map(|&k| -i[k - j]).collect());
        }
        for j in 0..=m {
            cols.push(idx.iter().map(|&k| v[k - j]).collect());
        }
        let y: Vec<f64> = idx.iter().map(|&k| i[k]).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let sol = lstsq_drop_dependent(&refs, &y);
        let a = sol.coefficients[..n].to_vec();
        let stable = poles_stable(&a);
        Some(ArxPartition {
            b: sol.coefficients[n..].to_vec(),
            a,
            rows: idx.len(),
            degenerate: false,
            inherited_from: None,
            dropped: sol.dropped,
            stable,
        })
    };
    let own: Vec<Option<ArxPartition>> = if parallel {
        rows.par_iter().map(fit_one).collect()
    } else {
        rows.iter().map(fit_one).collect()
    };
    let populated: Vec<usize> = (0..k_parts).filter(|&q| own[q].is_some()).collect();
    if populated.is_empty() {
        return Err(Error::InvalidTrace(format!(
            "no partition has the {} rows an ARX({n},{m}) fit needs",
            p + 1
        )));
    }
    let partitions = (0..k_parts)
        .map(|q| match &own[q] {
            Some(f) => f.clone(),
            None => {
                let src = *populated.iter().min_by_key(|&&s| (s.abs_diff(q), s)).expect("non-empty");
                let mut f = own[src].clone().expect("populated");
                f.rows = rows[q].len();
                f.degenerate = true;
                f.inherited_from = Some(src);
                f
            }
        })
        .collect();
    let lo = i.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = i.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ArxModel {
        spec: spec.clone(),
        n,
        m,
        dt,
        partitions,
        train_range: (lo, hi),
    })
}

#[derive(Debug, Clone)]
pub struct ArxSimulation {
    pub current: Vec<f64>,
    /// Output left ten times the training range while in an unstable partition.
    pub diverged: bool,
}

impl ArxModel {
    pub fn lag_start(&self) -> usize {
        lag_start(self.n, self.m)
    }

    fn predict_at(&self, part: &ArxPartition, out: &[f64], v: &[f64], k: usize) -> f64 {
        let mut y = 0.0;
        for (j, a) in part.a.iter().enumerate() {
            y -= a * out[k - 1 - j];
        }
        for (j, b) in part.b.iter().enumerate() {
            y += b * v[k - j];
        }
        y
    }

    /// Free-run simulation: predictions feed back as past outputs.
    pub fn simulate(&self, v: &[f64], init: &[f64]) -> Result<ArxSimulation> {
        let start = self.lag_start();
        if init.len() < start {
            return Err(Error::LengthMismatch(format!(
                "ARX({},{}) needs {start} initial outputs, got {}",
                self.n,
                self.m,
                init.len()
            )));
        }
        let mut out: Vec<f64> = init[..start.min(v.len())].to_vec();
        let (lo, hi) = self.train_range;
        let limit = 10.0 * (hi - lo).max(lo.abs().max(hi.abs()));
        let mut diverged = false;
        for k in start..v.len() {
            let part = &self.partitions[self.spec.index(v[k])];
            let y = self.predict_at(part, &out, v, k);
            if !part.stable && y.abs() > limit && !diverged {
                warn!("ARX simulation diverging at sample {k} (|I| = {y:e})");
                diverged = true;
            }
            out.push(y);
        }
        Ok(ArxSimulation { current: out, diverged })
    }

    /// One-step-ahead prediction from measured past outputs.
    pub fn predict_one_step(&self, i: &[f64], v: &[f64]) -> Vec<f64> {
        let start = self.lag_start().min(i.len());
        let mut out: Vec<f64> = i[..start].to_vec();
        for k in start..i.len() {
            let part = &self.partitions[self.spec.index(v[k])];
            out.push(self.predict_at(part, i, v, k));
        }
        out
    }
}

pub fn simulate_arx(model: &ArxModel, v: &[f64], init: &[f64]) -> Result<ArxSimulation> {
    model.simulate(v, init)
}

/// Timing of one method at one order.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub method: String,
    pub order: usize,
    pub median_seconds: f64,
    pub runs: Vec<f64>,
}

/// Times `trainer(order)` `runs` times per order and keeps the median.
///
/// Orders are interleaved within each round so slow drift in machine load
/// affects every order alike.
pub fn benchmark_orders<F>(method: &str, orders: &[usize], runs: usize, mut trainer: F) -> Result<Vec<BenchmarkRow>>
where
    F: FnMut(usize) -> Result<()>,
{
    let runs = runs.max(1);
    let mut times = vec![Vec::with_capacity(runs); orders.len()];
    for _ in 0..runs {
        for (slot, &order) in times.iter_mut().zip(orders) {
            let t0 = Instant::now();
            trainer(order)?;
            slot.push(t0.elapsed().as_secs_f64());
        }
    }
    Ok(orders
        .iter()
        .zip(times)
        .map(|(&order, times)| BenchmarkRow {
            method: method.to_string(),
            order,
            median_seconds: median(&times),
            runs: times,
        })
        .collect())
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let h = s.len() / 2;
    if s.len() % 2 == 1 {
        s[h]
    } else {
        0.5 * (s[h - 1] + s[h])
    }
}
