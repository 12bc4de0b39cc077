//! Laguerre-series approximation of the `q`-scale functions of spectrally
//! negative Lévy processes, their estimation from discrete observations, and
//! the oracles used to check both.

pub mod dual;
pub mod error;
pub mod estimators;
pub mod laguerre;
pub mod levy_model;
pub mod mc;
pub mod quad;
pub mod oracle;
pub mod scale_series;
pub mod simulate;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Result, ScaleError};
pub use laguerre::{LaguerreParams, BasisEvaluation};
pub use levy_model::{JumpMeasure, LevyModel, ThetaParams};
pub use scale_series::{CoefficientSet, ScaleApprox};
pub use estimators::{EstimationOptions, EstimationReport};
pub use mc::{McSetup, McSummary};
pub use simulate::{ObservationSet, SamplingScheme};
