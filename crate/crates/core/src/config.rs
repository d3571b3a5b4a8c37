//! Pipeline configuration, read from and written to TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discrete::DtPolicy;
use crate::error::{Error, Result};
use crate::ode::{PartitionSpec, MAX_ORDER};
use crate::plant::PlantConfig;
use crate::signal::{ChirpConfig, StepConfig};
use crate::smoothing::log_grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    /// Spline degree of the time-domain current fit.
    pub degree: usize,
    pub penalty_order: usize,
    /// Target knot spacing of the time-domain fit, seconds.
    pub knot_spacing: f64,
    pub lambda_grid: Vec<f64>,
    pub voltage: VoltageSmoothingConfig,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            penalty_order: 2,
            knot_spacing: 0.002,
            lambda_grid: log_grid(-14.0, 2.0, 17),
            voltage: VoltageSmoothingConfig::default(),
        }
    }
}

/// Static current-versus-voltage fit used as a diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoltageSmoothingConfig {
    pub lo: f64,
    pub hi: f64,
    /// Number of equal knot spans.
    pub grid_size: usize,
    pub degree: usize,
}

impl Default for VoltageSmoothingConfig {
    fn default() -> Self {
        Self {
            lo: 0.88,
            hi: 1.10,
            grid_size: 17,
            degree: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub lo: f64,
    pub width: f64,
    pub count: usize,
    /// Explicit edges; overrides `lo`, `width` and `count` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<f64>>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            lo: 0.88,
            width: 0.01,
            count: 20,
            edges: None,
        }
    }
}

impl PartitionConfig {
    pub fn spec(&self) -> Result<PartitionSpec> {
        match &self.edges {
            Some(e) => PartitionSpec::new(e.clone()),
            None => PartitionSpec::uniform(self.lo, self.width, self.count),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub orders: Vec<usize>,
    pub runs: usize,
    /// Numerator lag count of the baseline; the pole count follows the order.
    pub arx_m: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            orders: vec![1, 2, 3, 4],
            runs: 5,
            arx_m: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Base seed; training noise uses it, validation noise uses `seed + 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub order: usize,
    pub trim_seconds: f64,
    pub output_dir: PathBuf,
    pub parallel: bool,
    pub dt_policy: DtPolicy,
    pub chirp: ChirpConfig,
    pub step: StepConfig,
    pub plant: PlantConfig,
    pub smoothing: SmoothingConfig,
    pub partitions: PartitionConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            order: 1,
            trim_seconds: 1.2,
            output_dir: PathBuf::from("out"),
            parallel: false,
            dt_policy: DtPolicy::Error,
            chirp: ChirpConfig::default(),
            step: StepConfig::default(),
            plant: PlantConfig::default(),
            smoothing: SmoothingConfig::default(),
            partitions: PartitionConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Sample step shared by both excitation signals.
    pub fn dt(&self) -> f64 {
        self.chirp.sample_dt
    }

    pub fn set_dt(&mut self, dt: f64) {
        self.chirp.sample_dt = dt;
        self.step.sample_dt = dt;
    }

    pub fn validate(&self) -> Result<()> {
        self.chirp.validate()?;
        self.step.validate()?;
        self.plant.validate()?;
        self.partitions.spec()?;
        if self.chirp.sample_dt != self.step.sample_dt {
            return Err(Error::InvalidConfig(format!(
                "chirp and step sample steps differ ({} vs {})",
                self.chirp.sample_dt, self.step.sample_dt
            )));
        }
        if !(1..=MAX_ORDER).contains(&self.order) {
            return Err(Error::InvalidConfig(format!("order must be 1..={MAX_ORDER}, got {}", self.order)));
        }
        let s = &self.smoothing;
        if s.degree < self.order + 1 {
            return Err(Error::InvalidConfig(format!(
                "spline degree {} is too low for order {}; use degree >= {}",
                s.degree,
                self.order,
                self.order + 1
            )));
        }
        if s.penalty_order == 0 || s.penalty_order > s.degree {
            return Err(Error::InvalidPenaltyOrder {
                m: s.penalty_order,
                degree: s.degree,
            });
        }
        if !(s.knot_spacing > 0.0) {
            return Err(Error::InvalidConfig("knot_spacing must be positive".into()));
        }
        if s.lambda_grid.is_empty() || s.lambda_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("lambda_grid must be non-empty and ascending".into()));
        }
        if s.voltage.lo >= s.voltage.hi || s.voltage.grid_size < 2 {
            return Err(Error::InvalidConfig("voltage smoothing domain or grid is invalid".into()));
        }
        if !(self.trim_seconds >= 0.0) {
            return Err(Error::InvalidConfig("trim_seconds must be non-negative".into()));
        }
        if self.benchmark.runs == 0 {
            return Err(Error::InvalidConfig("benchmark runs must be positive".into()));
        }
        Ok(())
    }

    pub fn training_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidConfig("a seed is required (--seed)".into()))
    }

    pub fn validation_seed(&self) -> Result<u64> {
        Ok(self.training_seed()?.wrapping_add(1))
    }
}
