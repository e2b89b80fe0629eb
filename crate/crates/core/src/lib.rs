//! Semi-supervised anomaly detection for multivariate time series.
//!
//! The detector smooths each variable, prunes collinear variables by
//! variance inflation, scores observations by Mahalanobis distance to the
//! anomaly-free training cloud, and flags scores above a data-driven
//! threshold. Flagged observations can then be explained with random-forest
//! or logistic-regression variable rankings.

pub mod collinearity;
pub mod data;
pub mod error;
pub mod importance;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod scoring;
pub mod smoothing;
pub mod synthetic;
pub mod threshold;

pub use collinearity::{vif_prune, VifReport};
pub use data::{LabelVector, SeriesMatrix, SplitSpec};
pub use error::{Error, GpdFitError, Result};
pub use importance::{ImportanceMethod, ImportanceReport, Step5Dataset};
pub use metrics::{AnomalyCluster, MetricsBlock};
pub use scoring::ScatterFit;
pub use smoothing::{FilterKind, SmoothConfig};
pub use threshold::{GpdFit, ThresholdKind, ThresholdSpec};
pub use model::{DetectionResult, SandModel};
pub use pipeline::{DetectParams, ExplainParams, PipelineConfig, PipelineError, Step};
