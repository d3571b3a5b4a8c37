//! Piecewise-linear dynamic models of inverter current response, extracted by
//! B-spline smoothing and partitioned ODE regression.

pub mod bspline;
pub mod config;
pub mod discrete;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model_file;
pub mod ode;
pub mod pipeline;
pub mod plant;
pub mod signal;
pub mod smoothing;
pub mod sysid;
pub mod trace;

pub use error::{Error, Result};
