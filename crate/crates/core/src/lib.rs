//! Cost-sensitive anomaly detection for multichannel sensor time series.
//!
//! The pipeline runs gap filling, first differencing with an augmented
//! Dickey-Fuller check, mutual-information and recursive feature selection,
//! cost-sensitive learners (logistic regression, linear SVM, random forest),
//! minority oversampling, and repeated stratified cross-validation. A
//! windowed stream engine replays or ingests points and scores each new
//! point with a trained model.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`. Classification metrics are computed as
//! exact ratios of confusion counts.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod linalg;
pub mod matrix;
pub mod models;
pub mod resampling;
pub mod scalar;
pub mod stationarity;
pub mod stream;
pub mod synth;

pub use dataset::{chronological_split, fill_missing, parse_csv, ChannelId, SplitSpec};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Frame = dataset::TimeSeriesFrame<f64>;
pub type Frame32 = dataset::TimeSeriesFrame<f32>;
pub type Differenced = stationarity::DifferencedFrame<f64>;
pub type FeatureMatrix = Matrix<f64>;
pub type Classifier = models::TrainedClassifier<f64>;
pub type Classifier32 = models::TrainedClassifier<f32>;
pub type AdfResult = stationarity::AdfResult<f64>;
pub type Resampled = resampling::ResampleOutcome<f64>;
