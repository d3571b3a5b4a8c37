//! Exported model format (`splinedyn-model/1`, TOML).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bspline::{BSplineBasis, KnotVector};
use crate::discrete::{discretize, DiscreteModel};
use crate::error::{Error, Result};
use crate::ode::{OdeCoefficients, PartitionFit, PartitionSpec, PartitionedOdeModel};
use crate::smoothing::{DomainKind, SmoothFit};

pub const MODEL_VERSION: &str = "splinedyn-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: String,
    pub order: usize,
    pub dt: f64,
    pub smoothing: SmoothingRecord,
    pub edges: Vec<f64>,
    pub partition: Vec<PartitionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingRecord {
    pub domain: DomainKind,
    pub degree: usize,
    pub penalty_order: usize,
    pub lambda: f64,
    pub knots: Vec<f64>,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionRecord {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
    pub sse: f64,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inherited_from: Option<usize>,
    pub voltage_dropped: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub derivatives_dropped: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stable: Option<bool>,
    /// `A`, derivative coefficients `B, C, ...`, constant last.
    pub coefficients: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrete: Option<DiscreteRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteRecord {
    #[serde(rename = "D")]
    pub d: f64,
    pub g: f64,
    pub stable: bool,
}

impl ModelFile {
    pub fn new(model: &PartitionedOdeModel, smooth: &SmoothFit, dt: f64) -> Self {
        // first-order models carry their discretization for inspection
        let dm: Option<DiscreteModel> = (model.order == 1).then(|| discretize(model, dt).ok()).flatten();
        let partition = model
            .partitions
            .iter()
            .enumerate()
            .map(|(k, p)| PartitionRecord {
                index: k,
                lo: model.spec.edges[k],
                hi: model.spec.edges[k + 1],
                samples: p.samples,
                sse: p.sse,
                degenerate: p.degenerate,
                inherited_from: p.inherited_from,
                voltage_dropped: p.voltage_dropped,
                derivatives_dropped: p.derivatives_dropped.clone(),
                stable: p.stable,
                coefficients: p.coefficients.lettered().into_iter().collect(),
                discrete: dm.as_ref().map(|dm| {
                    let q = &dm.partitions[k];
                    DiscreteRecord {
                        d: q.d,
                        g: q.g,
                        stable: q.stable,
                    }
                }),
            })
            .collect();
        Self {
            version: MODEL_VERSION.to_string(),
            order: model.order,
            dt,
            smoothing: SmoothingRecord {
                domain: smooth.domain,
                degree: smooth.basis.degree(),
                penalty_order: smooth.penalty_order,
                lambda: smooth.lambda,
                knots: smooth.basis.knots().as_slice().to_vec(),
                coefficients: smooth.coefficients.clone(),
            },
            edges: model.spec.edges.clone(),
            partition,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.version != MODEL_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model version `{}` (expected `{MODEL_VERSION}`)",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn model(&self) -> Result<PartitionedOdeModel> {
        let spec = PartitionSpec::new(self.edges.clone())?;
        if self.partition.len() != spec.count() {
            return Err(Error::Parse(format!(
                "{} partition records for {} intervals",
                self.partition.len(),
                spec.count()
            )));
        }
        let mut partitions = Vec::with_capacity(self.partition.len());
        for rec in &self.partition {
            let get = |name: String| {
                rec.coefficients
                    .get(&name)
                    .copied()
                    .ok_or_else(|| Error::Parse(format!("partition {} lacks coefficient {name}", rec.index)))
            };
            let letter = |k: usize| ((b'A' + k as u8) as char).to_string();
            if rec.coefficients.len() != self.order + 2 {
                return Err(Error::Parse(format!(
                    "partition {} has {} coefficients, order {} needs {}",
                    rec.index,
                    rec.coefficients.len(),
                    self.order,
                    self.order + 2
                )));
            }
            let coefficients = OdeCoefficients {
                a: get(letter(0))?,
                b: (1..=self.order).map(|k| get(letter(k))).collect::<Result<_>>()?,
                c: get(letter(self.order + 1))?,
            };
            partitions.push(PartitionFit {
                coefficients,
                samples: rec.samples,
                sse: rec.sse,
                degenerate: rec.degenerate,
                inherited_from: rec.inherited_from,
                voltage_dropped: rec.voltage_dropped,
                derivatives_dropped: rec.derivatives_dropped.clone(),
                stable: rec.stable,
            });
        }
        Ok(PartitionedOdeModel {
            spec,
            order: self.order,
            partitions,
        })
    }

    pub fn smooth_fit(&self) -> Result<SmoothFit> {
        let s = &self.smoothing;
        let basis = BSplineBasis::new(KnotVector::new(s.knots.clone())?, s.degree + 1)?;
        if basis.nbasis() != s.coefficients.len() {
            return Err(Error::Parse(format!(
                "{} spline coefficients for {} basis functions",
                s.coefficients.len(),
                basis.nbasis()
            )));
        }
        Ok(SmoothFit {
            basis,
            coefficients: s.coefficients.clone(),
            lambda: s.lambda,
            penalty_order: s.penalty_order,
            domain: s.domain,
        })
    }
}
