//! Pluggable image feature extraction.
//!
//! The bundled extractor is a deterministic stand-in for a real image
//! encoder: it expands the image's 64-bit content seed into a unit-norm
//! pseudo-random direction, so equal content seeds map to identical
//! features and distinct seeds scatter almost orthogonally at useful
//! dimensions. A real encoder plugs in behind the same trait without
//! touching any caller.

use ndarray::Array1;
use rand::Rng;

use super::LearnError;
use crate::agents::ImageRef;
use crate::seeding::rng_stream;

/// A fixed-dimension real feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Array1<f64>,
}

impl FeatureVector {
    pub fn new(values: Array1<f64>) -> Result<Self, LearnError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NumericalFault(
                "non-finite feature component".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }
}

pub trait FeatureExtractor: Send + Sync {
    fn dim(&self) -> usize;
    fn extract(&self, image: &ImageRef) -> Result<FeatureVector, LearnError>;
}

/// The bundled deterministic extractor: content seed -> unit-norm
/// Gaussian direction in `d_k` dimensions.
pub struct SeededProjectionExtractor {
    d_k: usize,
}

impl SeededProjectionExtractor {
    pub fn new(d_k: usize) -> Self {
        Self { d_k }
    }
}

impl FeatureExtractor for SeededProjectionExtractor {
    fn dim(&self) -> usize {
        self.d_k
    }

    fn extract(&self, image: &ImageRef) -> Result<FeatureVector, LearnError> {
        let mut rng = rng_stream(image.content_seed, "features", &[]);
        // Box-Muller over paired uniforms; isotropic direction after
        // normalization.
        let mut values = Vec::with_capacity(self.d_k);
        while values.len() < self.d_k {
            let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.gen();
            let radius = (-2.0 * u1.ln()).sqrt();
            let angle = 2.0 * std::f64::consts::PI * u2;
            values.push(radius * angle.cos());
            if values.len() < self.d_k {
                values.push(radius * angle.sin());
            }
        }
        let mut arr = Array1::from_vec(values);
        let norm = arr.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(LearnError::NumericalFault(format!(
                "degenerate feature norm for image {}",
                image.id
            )));
        }
        arr.mapv_inplace(|v| v / norm);
        FeatureVector::new(arr)
    }
}
