//! Representation-geometry toolkit for detector embeddings.
//!
//! Builds named axes from population centroids, scores them with
//! rank-based metrics, predicts the logit effect of rank-1 ablations in
//! closed form, and selects interventions under a strict-Pareto rule.
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common instantiations.

pub mod error;
pub mod geometry;
pub mod intervention;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod predictor;
pub mod probes;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{AxisId, AxisKind, CovariateTable, Direction, EmbeddingMatrix};
pub use intervention::{Cell, ParetoCell, Pool, PoolRole, SelectorMode};
pub use metrics::MetricBlock;
pub use predictor::HeadModel;
pub use scalar::Scalar;

pub type EmbeddingMatrix64 = EmbeddingMatrix<f64>;
pub type EmbeddingMatrix32 = EmbeddingMatrix<f32>;
pub type Direction64 = Direction<f64>;
pub type Direction32 = Direction<f32>;
pub type MetricBlock64 = MetricBlock<f64>;
pub type MetricBlock32 = MetricBlock<f32>;
pub type HeadModel64 = HeadModel<f64>;
pub type HeadModel32 = HeadModel<f32>;
pub type Cell64 = Cell<f64>;
pub type ParetoCell64 = ParetoCell<f64>;
