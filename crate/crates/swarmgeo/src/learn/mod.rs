//! The dynamic learning strategy: image-feature extraction, the
//! attention network that predicts per-image agent elections and
//! collaboration links, target estimation via simulated discussion
//! rounds, the optimizer, and gradient verification utilities.

mod features;
mod model;
mod targets;
mod train;

pub use features::{FeatureExtractor, FeatureVector, SeededProjectionExtractor};
pub use model::{
    fd_grads, flatten_grads, grad_check, loss, max_rel_error, mse_terms, Forward, Gradients,
    LossBreakdown, SelectionModel, CHECKPOINT_MAGIC,
};
pub use targets::{estimate_targets, estimate_targets_detailed, TargetEstimate, TrainTargets};
pub use train::{train, Adam, EpochStats, TrainConfig, TrainReport, TrainSample};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("image not resolvable: {0}")]
    MissingImage(String),
    #[error("numerical fault: {0}")]
    NumericalFault(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("pipeline: {0}")]
    Pipeline(#[from] crate::discussion::PipelineError),
}

/// Upper bound on any geodesic distance on Earth (half circumference).
/// Used as the logged distance for answers that cannot be geocoded.
pub const MAX_GEODESIC_KM: f64 = std::f64::consts::PI * crate::geo::EARTH_RADIUS_KM;
