//! Backward-Euler discretization of first-order partition models.
//!
//! Rewriting `I = A*V + B*dI/dt + C` as `dI/dt = (I - A*V - C)/B` and taking
//! an implicit step of size `dt` gives, with `D = dt/B` and `g = 1/(1 - D)`,
//!
//! ```text
//! I[k+1] = g*I[k] - D*g*(A*V[k+1] + C)
//! ```
//!
//! The partition is chosen by `V[k+1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{PartitionSpec, PartitionedOdeModel};
use crate::trace::Trace;

/// What to do when a trace's sample step differs from the model's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtPolicy {
    #[default]
    Error,
    /// Interpolate the voltage onto the model grid and the prediction back.
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePartition {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub g: f64,
    pub stable: bool,
}

impl DiscretePartition {
    pub fn new(a: f64, b: f64, c: f64, dt: f64) -> Self {
        let d = dt / b;
        let g = 1.0 / (1.0 - d);
        Self {
            a,
            b,
            c,
            d,
            g,
            stable: g.abs() < 1.0,
        }
    }

    pub fn fixed_point(&self, v: f64) -> f64 {
        self.a * v + self.c
    }

    pub fn step(&self, i_k: f64, v_next: f64) -> f64 {
        self.g * i_k - self.d * self.g * (self.a * v_next + self.c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteModel {
    pub spec: PartitionSpec,
    pub dt: f64,
    pub partitions: Vec<DiscretePartition>,
}

fn dt_matches(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

pub fn discretize(model: &PartitionedOdeModel, dt: f64) -> Result<DiscreteModel> {
    if model.order != 1 {
        return Err(Error::InvalidConfig(format!(
            "only first-order models can be discretized, got order {}",
            model.order
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let partitions = model
        .partitions
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let c = &p.coefficients;
            if c.b[0] == 0.0 {
                Err(Error::NonDynamicPartition { index })
            } else {
                Ok(DiscretePartition::new(c.a, c.b[0], c.c, dt))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscreteModel {
        spec: model.spec.clone(),
        dt,
        partitions,
    })
}

impl DiscreteModel {
    pub fn partition(&self, v: f64) -> &DiscretePartition {
        &self.partitions[self.spec.index(v)]
    }

    pub fn step(&self, i_k: f64, v_next: f64) -> f64 {
        self.partition(v_next).step(i_k, v_next)
    }

    /// Free-run prediction from `i0` along a voltage sequence sampled at `dt`.
    pub fn run(&self, v: &[f64], i0: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(v.len());
        if v.is_empty() {
            return out;
        }
        let mut i = i0;
        out.push(i);
        for &vn in &v[1..] {
            i = self.step(i, vn);
            out.push(i);
        }
        out
    }

    pub fn all_stable(&self) -> bool {
        self.partitions.iter().all(|p| p.stable)
    }
}

pub fn step(dm: &DiscreteModel, i_k: f64, v_next: f64) -> f64 {
    dm.step(i_k, v_next)
}

/// Free-run prediction aligned with the samples of `voltage`.
pub fn simulate(dm: &DiscreteModel, voltage: &Trace, i0: f64, policy: DtPolicy) -> Result<Vec<f64>> {
    if dt_matches(dm.dt, voltage.dt) {
        return Ok(dm.run(&voltage.v, i0));
    }
    match policy {
        DtPolicy::Error => Err(Error::DtMismatch {
            model: dm.dt,
            trace: voltage.dt,
        }),
        DtPolicy::Resample => {
            let span = voltage.dt * (voltage.len().saturating_sub(1)) as f64;
            let n = (span / dm.dt).floor() as usize + 1;
            let grid: Vec<f64> = (0..n).map(|k| k as f64 * dm.dt).collect();
            let v = interp_uniform(&voltage.v, voltage.dt, &grid);
            let pred = dm.run(&v, i0);
            let back: Vec<f64> = (0..voltage.len()).map(|k| k as f64 * voltage.dt).collect();
            Ok(interp_uniform(&pred, dm.dt, &back))
        }
    }
}

/// Linear interpolation of samples `y[k]` at `k*dt`, held constant past the end.
fn interp_uniform(y: &[f64], dt: f64, at: &[f64]) -> Vec<f64> {
    let last = y.len() - 1;
    at.iter()
        .map(|&t| {
            let s = (t / dt).max(0.0);
            let k = (s.floor() as usize).min(last);
            if k == last {
                y[last]
            } else {
                let w = s - k as f64;
                y[k] * (1.0 - w) + y[k + 1] * w
            }
        })
        .collect()
}

/// Classical RK4 on `dI/dt = (I - A*V - C)/B` with `substeps` steps per sample
/// and voltage interpolated linearly between samples.
pub fn rk4_oracle(model: &PartitionedOdeModel, voltage: &Trace, i0: f64, substeps: usize) -> Result<Vec<f64>> {
    // validates order and B
    discretize(model, voltage.dt)?;
    if substeps == 0 {
        return Err(Error::InvalidConfig("substeps must be at least 1".into()));
    }
    let rhs = |i: f64, v: f64| {
        let c = &model.partitions[model.spec.index(v)].coefficients;
        (i - c.a * v - c.c) / c.b[0]
    };
    let v = &voltage.v;
    let h = voltage.dt / substeps as f64;
    let mut out = Vec::with_capacity(v.len());
    if v.is_empty() {
        return Ok(out);
    }
    let mut i = i0;
    out.push(i);
    for k in 0..v.len() - 1 {
        let (va, vb) = (v[k], v[k + 1]);
        let at = |s: f64| va + (vb - va) * s;
        for j in 0..substeps {
            let s0 = j as f64 / substeps as f64;
            let sm = (j as f64 + 0.5) / substeps as f64;
            let s1 = (j as f64 + 1.0) / substeps as f64;
            let k1 = rhs(i, at(s0));
            let k2 = rhs(i + 0.5 * h * k1, at(sm));
            let k3 = rhs(i + 0.5 * h * k2, at(sm));
            let k4 = rhs(i + h * k3, at(s1));
            i += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(i);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{OdeCoefficients, PartitionFit};
    use crate::trace::TraceMeta;

    fn single(a: f64, b: f64, c: f64) -> PartitionedOdeModel {
        PartitionedOdeModel {
            spec: PartitionSpec::new(vec![0.0, 2.0]).unwrap(),
            order: 1,
            partitions: vec![PartitionFit {
                coefficients: OdeCoefficients { a, b: vec![b], c },
                samples: 10,
                sse: 0.0,
                degenerate: false,
                inherited_from: None,
                voltage_dropped: false,
                derivatives_dropped: vec![],
                stable: Some(b < 0.0),
            }],
        }
    }

    fn trace(v: Vec<f64>, dt: f64) -> Trace {
        Trace::from_samples(0.0, dt, v, None, TraceMeta::new("test", dt)).unwrap()
    }

    #[test]
    fn gain_arithmetic() {
        let p = DiscretePartition::new(0.0, -0.05, 0.0, 0.001);
        assert!((p.d + 0.02).abs() < 1e-15);
        assert!((p.g - 1.0 / 1.02).abs() < 1e-15);
        assert!((p.d * p.b - 0.001).abs() < 1e-12);
        assert!(p.stable);
    }

    #[test]
    fn fixed_point_is_kept() {
        let p = DiscretePartition::new(12.0, -0.05, -3.0, 0.001);
        let v = 0.97;
        assert_eq!(p.step(p.fixed_point(v), v), p.fixed_point(v));
    }

    #[test]
    fn zero_step_is_identity() {
        let p = DiscretePartition::new(12.0, -0.05, -3.0, 0.0);
        assert_eq!(p.step(4.5, 1.0), 4.5);
    }

    #[test]
    fn long_run_converges() {
        let dm = discretize(&single(-420.0, -0.05, 411.6), 0.001).unwrap();
        let v = vec![0.95; 10_001];
        let out = dm.run(&v, 0.0);
        let target = -420.0 * 0.95 + 411.6;
        assert!((out.last().unwrap() - target).abs() <= 1e-9);
    }

    #[test]
    fn zero_b_is_rejected() {
        assert!(matches!(
            discretize(&single(1.0, 0.0, 0.0), 0.001),
            Err(Error::NonDynamicPartition { index: 0 })
        ));
    }

    #[test]
    fn dt_mismatch_policy() {
        let dm = discretize(&single(0.0, -0.05, 1.0), 0.001).unwrap();
        let tr = trace(vec![1.0; 100], 0.002);
        assert!(matches!(simulate(&dm, &tr, 0.0, DtPolicy::Error), Err(Error::DtMismatch { .. })));
        let out = simulate(&dm, &tr, 0.0, DtPolicy::Resample).unwrap();
        assert_eq!(out.len(), 100);
        // the same system stepped at the trace rate
        let coarse = discretize(&single(0.0, -0.05, 1.0), 0.002).unwrap().run(&tr.v, 0.0);
        assert!((out[50] - coarse[50]).abs() < 0.01);
    }

    #[test]
    fn rk4_single_step_exponential() {
        // dI/dt = -I
        let m = single(0.0, -1.0, 0.0);
        let out = rk4_oracle(&m, &trace(vec![1.0, 1.0], 0.01), 1.0, 1).unwrap();
        assert!((out[1] - (-0.01f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn rk4_shares_equilibrium() {
        let m = single(-420.0, -0.05, 411.6);
        let tr = trace(vec![0.95; 2000], 0.001);
        let out = rk4_oracle(&m, &tr, 0.0, 4).unwrap();
        assert!((out.last().unwrap() - (-420.0 * 0.95 + 411.6)).abs() < 1e-6);
    }
}
