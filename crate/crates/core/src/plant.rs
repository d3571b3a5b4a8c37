//! Surrogate inverter aggregate: a Volt-Var curve behind first-order lags.
//!
//! State `(v, I)` evolves as
//!
//! ```text
//! dv/dt = (V_src - v) / voltage_tau
//! dI/dt = (n_houses * q(v) - I) / tau
//! ```
//!
//! with the source voltage held constant over each sample. `v` is the
//! terminal voltage seen by the inverters and is what the output trace
//! records. `voltage_tau = 0` makes `v` follow the source exactly.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::Trace;

/// Piecewise-linear Volt-Var characteristic, reactive output in p.u. of rated power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoltVarCurve {
    pub v_l: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    pub v_h: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
}

impl Default for VoltVarCurve {
    /// 4.375 kW settings on a 6.25 kW rating.
    fn default() -> Self {
        Self {
            v_l: 0.88,
            v1: 0.92,
            v2: 0.98,
            v3: 1.02,
            v4: 1.08,
            v_h: 1.10,
            q1: 4.375 / 6.25,
            q2: 0.0,
            q3: 0.0,
            q4: -4.375 / 6.25,
        }
    }
}

impl VoltVarCurve {
    pub fn validate(&self) -> Result<()> {
        let v = [self.v_l, self.v1, self.v2, self.v3, self.v4, self.v_h];
        if v.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig(format!(
                "volt-var breakpoints must be strictly increasing: {v:?}"
            )));
        }
        if self.q2 != 0.0 || self.q3 != 0.0 {
            return Err(Error::InvalidConfig("volt-var deadband must have zero output".into()));
        }
        if !(self.q1 > 0.0 && self.q4 < 0.0) {
            return Err(Error::InvalidConfig("volt-var needs q1 > 0 > q4".into()));
        }
        Ok(())
    }

    /// Reactive set-point at voltage `v`.
    pub fn target(&self, v: f64) -> f64 {
        if v <= self.v1 {
            self.q1
        } else if v < self.v2 {
            self.q1 + (self.q2 - self.q1) * (v - self.v1) / (self.v2 - self.v1)
        } else if v <= self.v3 {
            self.q2
        } else if v < self.v4 {
            self.q3 + (self.q4 - self.q3) * (v - self.v3) / (self.v4 - self.v3)
        } else {
            self.q4
        }
    }

    /// Slope and intercept of the linear piece containing `v`.
    pub fn piece(&self, v: f64) -> (f64, f64) {
        let (a, b, qa, qb) = if v <= self.v1 {
            return (0.0, self.q1);
        } else if v < self.v2 {
            (self.v1, self.v2, self.q1, self.q2)
        } else if v <= self.v3 {
            return (0.0, self.q2);
        } else if v < self.v4 {
            (self.v3, self.v4, self.q3, self.q4)
        } else {
            return (0.0, self.q4);
        };
        let s = (qb - qa) / (b - a);
        (s, qa - s * a)
    }

    /// Breakpoints where the slope changes.
    pub fn kinks(&self) -> [f64; 4] {
        [self.v1, self.v2, self.v3, self.v4]
    }
}

pub fn voltvar_target(curve: &VoltVarCurve, v: f64) -> f64 {
    curve.target(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub curve: VoltVarCurve,
    /// Current response lag, seconds.
    pub tau: f64,
    /// Terminal voltage lag, seconds; 0 passes the source straight through.
    pub voltage_tau: f64,
    pub noise_sigma: f64,
    pub n_houses: u32,
    pub initial_current: f64,
    /// Noise seed; set by the pipeline from its own seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            curve: VoltVarCurve::default(),
            tau: 0.05,
            voltage_tau: 0.02,
            noise_sigma: 0.005,
            n_houses: 36,
            initial_current: 0.0,
            seed: 0,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        self.curve.validate()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("plant tau must be positive, got {}", self.tau)));
        }
        if !(self.voltage_tau >= 0.0 && self.voltage_tau.is_finite()) {
            return Err(Error::InvalidConfig("plant voltage_tau must be non-negative".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("plant noise_sigma must be non-negative".into()));
        }
        if self.n_houses == 0 {
            return Err(Error::InvalidConfig("plant n_houses must be positive".into()));
        }
        if !self.initial_current.is_finite() {
            return Err(Error::InvalidConfig("plant initial_current must be finite".into()));
        }
        Ok(())
    }

    /// Steady-state aggregate current at terminal voltage `v`.
    pub fn steady_current(&self, v: f64) -> f64 {
        self.n_houses as f64 * self.curve.target(v)
    }
}

/// Drives the plant with the voltage column of `voltage` and returns a trace
/// of terminal voltage and (noisy) aggregate current.
pub fn simulate_plant(cfg: &PlantConfig, voltage: &Trace) -> Result<Trace> {
    cfg.validate()?;
    if voltage.is_empty() {
        return Err(Error::InvalidTrace("empty voltage trace".into()));
    }
    let dt = voltage.dt;
    if dt > cfg.tau / 2.0 || (cfg.voltage_tau > 0.0 && dt > cfg.voltage_tau / 2.0) {
        warn!("plant step {dt} s exceeds half a lag time constant; integration may be inaccurate");
    }
    let n = cfg.n_houses as f64;
    let src = &voltage.v;
    let lagged = cfg.voltage_tau > 0.0;
    let f = |v: f64, i: f64, u: f64| -> (f64, f64) {
        let dv = if lagged { (u - v) / cfg.voltage_tau } else { 0.0 };
        (dv, (n * cfg.curve.target(if lagged { v } else { u }) - i) / cfg.tau)
    };

    let mut vs = Vec::with_capacity(src.len());
    let mut is = Vec::with_capacity(src.len());
    let (mut v, mut i) = (src[0], cfg.initial_current);
    for k in 0..src.len() {
        if !lagged {
            v = src[k];
        }
        vs.push(v);
        is.push(i);
        let u = src[k];
        let (k1v, k1i) = f(v, i, u);
        let (k2v, k2i) = f(v + 0.5 * dt * k1v, i + 0.5 * dt * k1i, u);
        let (k3v, k3i) = f(v + 0.5 * dt * k2v, i + 0.5 * dt * k2i, u);
        let (k4v, k4i) = f(v + dt * k3v, i + dt * k3i, u);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        i += dt / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
    }

    if cfg.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for x in &mut is {
            *x += normal.sample(&mut rng);
        }
    }

    let mut meta = voltage.meta.clone();
    meta.source = format!("surrogate:{}", voltage.meta.source);
    meta.seed = Some(cfg.seed);
    Trace::from_samples(voltage.t0(), dt, vs, Some(is), meta)
}
