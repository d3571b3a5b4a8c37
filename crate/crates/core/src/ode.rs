//! Partitioned linear ODE extraction.
//!
//! Within each voltage partition the current is regressed as
//!
//! ```text
//! I = A*V + B_1*dI/dt + ... + B_k*d^k I/dt^k + C
//! ```
//!
//! with the derivatives taken analytically from a time-domain smoothing
//! spline of the current.

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::BSplineBasis;
use crate::config::SmoothingConfig;
use crate::error::{Error, Result};
use crate::linalg::lstsq_drop_dependent;
use crate::smoothing::{self, DomainKind, OcvSelection, SmoothFit};
use crate::trace::Trace;

pub const MAX_ORDER: usize = 4;

/// Ascending voltage edges delimiting `K = edges.len() - 1` intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub edges: Vec<f64>,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self::uniform(0.88, 0.01, 20).expect("default partition edges")
    }
}

impl PartitionSpec {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidConfig("partition spec needs at least two edges".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig(format!(
                "partition edges must be finite and strictly increasing: {edges:?}"
            )));
        }
        Ok(Self { edges })
    }

    /// `count` intervals of width `width` starting at `lo`.
    pub fn uniform(lo: f64, width: f64, count: usize) -> Result<Self> {
        if count == 0 || !(width > 0.0) {
            return Err(Error::InvalidConfig("partition count and width must be positive".into()));
        }
        // integer steps keep the edges free of accumulated rounding
        let edges = (0..=count)
            .map(|k| ((lo + width * k as f64) * 1e12).round() / 1e12)
            .collect();
        Self::new(edges)
    }

    pub fn count(&self) -> usize {
        self.edges.len() - 1
    }

    /// Interval holding `v`; values outside the edges go to the end intervals.
    pub fn index(&self, v: f64) -> usize {
        let k = self.count();
        if v >= self.edges[k] {
            return k - 1;
        }
        // number of edges <= v, minus one
        self.edges.partition_point(|&e| e <= v).saturating_sub(1).min(k - 1)
    }
}

pub fn assign_partitions(spec: &PartitionSpec, v: &[f64]) -> Vec<usize> {
    v.iter().map(|&x| spec.index(x)).collect()
}

/// Coefficients of one partition's ODE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeCoefficients {
    /// Voltage coefficient `A`.
    pub a: f64,
    /// Derivative coefficients, first derivative first.
    pub b: Vec<f64>,
    /// Constant term.
    pub c: f64,
}

impl OdeCoefficients {
    pub fn order(&self) -> usize {
        self.b.len()
    }

    /// Coefficients in the letter convention `A, B, C, ...` with the constant last.
    pub fn lettered(&self) -> Vec<(String, f64)> {
        let mut out = vec![("A".to_string(), self.a)];
        let mut letter = b'B';
        for &b in &self.b {
            out.push(((letter as char).to_string(), b));
            letter += 1;
        }
        out.push(((letter as char).to_string(), self.c));
        out
    }

    pub fn predict(&self, v: f64, derivs: &[f64]) -> f64 {
        self.a * v + self.b.iter().zip(derivs).map(|(b, d)| b * d).sum::<f64>() + self.c
    }

    /// Asymptotic stability of `sum_j b_j s^j - 1 = 0`, the homogeneous part
    /// of the ODE. `None` when every derivative coefficient is zero.
    pub fn is_stable(&self) -> Option<bool> {
        let k = self.b.iter().rposition(|&b| b != 0.0)? + 1;
        let lead = self.b[k - 1];
        // monic coefficients of s^0 .. s^{k-1}
        let mut p = vec![-1.0 / lead];
        p.extend(self.b[..k - 1].iter().map(|b| b / lead));
        let companion = DMatrix::from_fn(k, k, |r, c| {
            if c == k - 1 {
                -p[r]
            } else if r == c + 1 {
                1.0
            } else {
                0.0
            }
        });
        Some(companion.complex_eigenvalues().iter().all(|z| z.re < 0.0))
    }
}

/// Regression result for one partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFit {
    pub coefficients: OdeCoefficients,
    pub samples: usize,
    pub sse: f64,
    /// Too few samples; coefficients copied from `inherited_from`.
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inherited_from: Option<usize>,
    /// Voltage column was dependent on the others and `A` fixed at 0.
    pub voltage_dropped: bool,
    /// Derivative orders (1-based) whose columns were dependent and zeroed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub derivatives_dropped: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stable: Option<bool>,
}

/// `d^k I/dt^k` for `k = 1..=max_order`, one column per order.
pub fn compute_derivatives(fit: &SmoothFit, t: &[f64], max_order: usize) -> Result<Vec<Vec<f64>>> {
    check_order(max_order)?;
    if max_order > fit.basis.degree() {
        return Err(Error::InvalidOrder {
            requested: max_order,
            degree: fit.basis.degree(),
        });
    }
    let mut cols = vec![Vec::with_capacity(t.len()); max_order];
    for &x in t {
        let d = fit.basis.spline_derivatives(&fit.coefficients, x, max_order)?;
        for (col, dk) in cols.iter_mut().zip(d) {
            col.push(dk);
        }
    }
    Ok(cols)
}

fn check_order(order: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("ODE order must be 1..={MAX_ORDER}, got {order}")))
    }
}

/// Least squares of `I` on `[V, d^1 I, .., d^order I, 1]`.
///
/// A dependent column is dropped and its coefficient set to zero, the
/// voltage column going first.
pub fn fit_partition_ode(i: &[f64], v: &[f64], derivs: &[&[f64]], order: usize) -> Result<PartitionFit> {
    check_order(order)?;
    if derivs.len() < order {
        return Err(Error::LengthMismatch(format!(
            "order {order} needs {order} derivative columns, got {}",
            derivs.len()
        )));
    }
    let n = i.len();
    if v.len() != n || derivs[..order].iter().any(|d| d.len() != n) {
        return Err(Error::LengthMismatch("regression columns differ in length".into()));
    }
    if n < order + 2 {
        return Err(Error::InvalidConfig(format!(
            "partition has {n} samples, order {order} needs at least {}",
            order + 2
        )));
    }
    let ones = vec![1.0; n];
    // priority: constant, derivatives, voltage
    let mut cols: Vec<&[f64]> = vec![&ones];
    cols.extend(derivs[..order].iter().copied());
    cols.push(v);
    let sol = lstsq_drop_dependent(&cols, i);
    let beta = &sol.coefficients;
    let coefficients = OdeCoefficients {
        a: beta[order + 1],
        b: beta[1..=order].to_vec(),
        c: beta[0],
    };
    let stable = coefficients.is_stable();
    Ok(PartitionFit {
        samples: n,
        sse: sol.sse,
        degenerate: false,
        inherited_from: None,
        voltage_dropped: sol.dropped.contains(&(order + 1)),
        derivatives_dropped: sol.dropped.iter().copied().filter(|&c| (1..=order).contains(&c)).collect(),
        stable,
        coefficients,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedOdeModel {
    pub spec: PartitionSpec,
    pub order: usize,
    pub partitions: Vec<PartitionFit>,
}

impl PartitionedOdeModel {
    /// Fits every partition of pre-computed regression data.
    pub fn fit(
        spec: &PartitionSpec,
        i: &[f64],
        v: &[f64],
        derivs: &[Vec<f64>],
        order: usize,
        parallel: bool,
    ) -> Result<Self> {
        check_order(order)?;
        let assign = assign_partitions(spec, v);
        let k = spec.count();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (s, &p) in assign.iter().enumerate() {
            members[p].push(s);
        }
        let fit_one = |idx: &Vec<usize>| -> Option<Result<PartitionFit>> {
            if idx.len() < order + 2 {
                return None;
            }
            let ip: Vec<f64> = idx.iter().map(|&s| i[s]).collect();
            let vp: Vec<f64> = idx.iter().map(|&s| v[s]).collect();
            let dp: Vec<Vec<f64>> = derivs[..order]
                .iter()
                .map(|d| idx.iter().map(|&s| d[s]).collect())
                .collect();
            let refs: Vec<&[f64]> = dp.iter().map(|d| d.as_slice()).collect();
            Some(fit_partition_ode(&ip, &vp, &refs, order))
        };
        let fitted: Vec<Option<Result<PartitionFit>>> = if parallel {
            members.par_iter().map(fit_one).collect()
        } else {
            members.iter().map(fit_one).collect()
        };
        let mut own: Vec<Option<PartitionFit>> = Vec::with_capacity(k);
        for f in fitted {
            own.push(f.transpose()?);
        }
        let populated: Vec<usize> = (0..k).filter(|&p| own[p].is_some()).collect();
        if populated.is_empty() {
            return Err(Error::InvalidTrace(format!(
                "no partition holds the {} samples an order-{order} fit needs",
                order + 2
            )));
        }
        let mut partitions = Vec::with_capacity(k);
        for p in 0..k {
            match &own[p] {
                Some(f) => partitions.push(f.clone()),
                None => {
                    // nearest populated partition, lower index on ties
                    let src = *populated
                        .iter()
                        .min_by_key(|&&q| (q.abs_diff(p), q))
                        .expect("non-empty");
                    let mut f = own[src].clone().expect("populated");
                    warn!(
                        "partition {p} has {} samples; inheriting coefficients of partition {src}",
                        members[p].len()
                    );
                    f.samples = members[p].len();
                    f.sse = 0.0;
                    f.degenerate = true;
                    f.inherited_from = Some(src);
                    partitions.push(f);
                }
            }
        }
        Ok(Self {
            spec: spec.clone(),
            order,
            partitions,
        })
    }

    /// Regression prediction at each sample from its own derivative values.
    pub fn predict_in_sample(&self, v: &[f64], derivs: &[Vec<f64>]) -> Vec<f64> {
        let mut d = vec![0.0; self.order];
        (0..v.len())
            .map(|s| {
                for (k, col) in derivs[..self.order].iter().enumerate() {
                    d[k] = col[s];
                }
                self.partitions[self.spec.index(v[s])].coefficients.predict(v[s], &d)
            })
            .collect()
    }

    pub fn total_sse(&self) -> f64 {
        self.partitions.iter().filter(|p| !p.degenerate).map(|p| p.sse).sum()
    }
}

/// Everything produced by one extraction run.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub model: PartitionedOdeModel,
    pub smooth: SmoothFit,
    pub selection: OcvSelection,
    pub derivatives: Vec<Vec<f64>>,
    pub in_sample: Vec<f64>,
}

/// Time-domain basis with knots roughly `knot_spacing` apart over the trace.
pub fn time_basis(t: &[f64], cfg: &SmoothingConfig) -> Result<BSplineBasis> {
    let (lo, hi) = (t[0], t[t.len() - 1]);
    let spans = ((hi - lo) / cfg.knot_spacing).round().max(1.0) as usize;
    BSplineBasis::uniform(lo, hi, spans, cfg.degree)
}

/// Smooths the current over time with the OCV-selected penalty.
pub fn smooth_current(trace: &Trace, cfg: &SmoothingConfig) -> Result<(SmoothFit, OcvSelection)> {
    let i = trace.current()?;
    let basis = time_basis(&trace.t, cfg)?;
    let selection = smoothing::select_lambda_ocv(&basis, &trace.t, i, cfg.penalty_order, &cfg.lambda_grid)?;
    info!(
        "time-domain smoothing: {} basis functions, lambda = {:e}",
        basis.nbasis(),
        selection.best_lambda
    );
    let fit = smoothing::fit_penalized(&basis, &trace.t, i, selection.best_lambda, cfg.penalty_order)?
        .with_domain(DomainKind::Time);
    Ok((fit, selection))
}

/// Smooth, differentiate, partition and regress.
pub fn extract_model(
    trace: &Trace,
    cfg: &SmoothingConfig,
    spec: &PartitionSpec,
    order: usize,
    parallel: bool,
) -> Result<Extraction> {
    check_order(order)?;
    if order > cfg.degree {
        return Err(Error::InvalidOrder {
            requested: order,
            degree: cfg.degree,
        });
    }
    let i = trace.current()?;
    let (smooth, selection) = smooth_current(trace, cfg)?;
    let derivatives = compute_derivatives(&smooth, &trace.t, order)?;
    let model = PartitionedOdeModel::fit(spec, i, &trace.v, &derivatives, order, parallel)?;
    let in_sample = model.predict_in_sample(&trace.v, &derivatives);
    Ok(Extraction {
        model,
        smooth,
        selection,
        derivatives,
        in_sample,
    })
}
