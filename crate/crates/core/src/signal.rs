//! Excitation voltage profiles: logarithmic square chirp and square steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Trace, TraceMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChirpConfig {
    pub amplitude_lo: f64,
    pub amplitude_hi: f64,
    pub f0: f64,
    pub f1: f64,
    /// Length of one sweep window, seconds.
    pub sweep_time: f64,
    pub total_duration: f64,
    pub phase0: f64,
    pub sample_dt: f64,
    /// Multiplicative frequency growth applied per repeated sweep.
    pub sweep_growth: f64,
}

impl Default for ChirpConfig {
    fn default() -> Self {
        Self {
            amplitude_lo: 0.8884,
            amplitude_hi: 1.0884,
            f0: 1.0,
            f1: 5.0,
            sweep_time: 5.0,
            total_duration: 100.0,
            phase0: 0.0,
            sample_dt: 1e-3,
            sweep_growth: 0.01,
        }
    }
}

impl ChirpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("chirp: {msg}")));
        if !(self.f0 > 0.0 && self.f0.is_finite()) {
            return bad(format!("f0 must be positive, got {}", self.f0));
        }
        if !(self.f1 >= self.f0 && self.f1.is_finite()) {
            return bad(format!("f1 = {} must not be below f0 = {}", self.f1, self.f0));
        }
        if !(self.sweep_time > 0.0) {
            return bad("sweep_time must be positive".into());
        }
        if !(self.amplitude_lo < self.amplitude_hi) {
            return bad("amplitude_lo must be below amplitude_hi".into());
        }
        if !(self.sample_dt > 0.0) || !(self.total_duration > 0.0) {
            return bad("sample_dt and total_duration must be positive".into());
        }
        if !(self.sweep_growth > -1.0) {
            return bad("sweep_growth must exceed -1".into());
        }
        Ok(())
    }

    /// Phase of the sweep `k` at local time `tau` into the window.
    pub fn phase(&self, sweep: usize, tau: f64) -> f64 {
        let scale = (1.0 + self.sweep_growth).powi(sweep as i32);
        let f0 = self.f0 * scale;
        let ratio = self.f1 / self.f0;
        let two_pi = 2.0 * std::f64::consts::PI;
        if ratio == 1.0 {
            two_pi * f0 * tau + self.phase0
        } else {
            let t = self.sweep_time;
            two_pi * f0 * t / ratio.ln() * (ratio.powf(tau / t) - 1.0) + self.phase0
        }
    }

    /// Instantaneous frequency of sweep `k` at local time `tau`.
    pub fn frequency(&self, sweep: usize, tau: f64) -> f64 {
        let scale = (1.0 + self.sweep_growth).powi(sweep as i32);
        self.f0 * scale * (self.f1 / self.f0).powf(tau / self.sweep_time)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    pub levels: Vec<f64>,
    pub dwell: f64,
    pub total_duration: f64,
    pub sample_dt: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            levels: vec![0.90, 0.99],
            dwell: 5.0,
            total_duration: 50.0,
            sample_dt: 1e-3,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidConfig("step: no levels".into()));
        }
        if let Some(l) = self.levels.iter().find(|l| !(0.85..=1.15).contains(*l)) {
            return Err(Error::InvalidConfig(format!("step: level {l} outside [0.85, 1.15] p.u.")));
        }
        if !(self.dwell > 0.0) || !(self.sample_dt > 0.0) || !(self.total_duration > 0.0) {
            return Err(Error::InvalidConfig(
                "step: dwell, sample_dt and total_duration must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn sample_count(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}

/// Square wave whose underlying cosine sweeps exponentially from `f0` to `f1`
/// in every window, windows repeating back to back.
pub fn gen_log_square_chirp(cfg: &ChirpConfig) -> Result<Trace> {
    cfg.validate()?;
    let n = sample_count(cfg.total_duration, cfg.sample_dt);
    let v = (0..n)
        .map(|k| {
            let t = k as f64 * cfg.sample_dt;
            let sweep = (t / cfg.sweep_time + 1e-9).floor();
            let tau = (t - sweep * cfg.sweep_time).max(0.0);
            if cfg.phase(sweep as usize, tau).cos() >= 0.0 {
                cfg.amplitude_hi
            } else {
                cfg.amplitude_lo
            }
        })
        .collect();
    Trace::from_samples(0.0, cfg.sample_dt, v, None, TraceMeta::new("chirp", cfg.sample_dt))
}

/// Piecewise-constant profile cycling through `levels`, `dwell` seconds each.
pub fn gen_square_step(cfg: &StepConfig) -> Result<Trace> {
    cfg.validate()?;
    let n = sample_count(cfg.total_duration, cfg.sample_dt);
    let v = (0..n)
        .map(|k| {
            let plateau = (k as f64 * cfg.sample_dt / cfg.dwell + 1e-9).floor() as usize;
            cfg.levels[plateau % cfg.levels.len()]
        })
        .collect();
    Trace::from_samples(0.0, cfg.sample_dt, v, None, TraceMeta::new("step", cfg.sample_dt))
}
