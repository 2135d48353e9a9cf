//! Cost-sensitive learners sharing one classifier contract.
//!
//! Misclassification costs enter training only through per-class weights
//! (w_pos / w_neg = c_fn / c_fp); evaluation applies the cost matrix through
//! [`total_cost`]. Every learner breaks decision ties toward the negative class.

mod forest;
mod linear;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::ConfusionCounts;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub use forest::{Forest, Tree};
pub use linear::{LinearModel, Standardizer};

/// Current model document version; loads of any other version fail.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-cell misclassification costs; C(0,1) is a false negative, C(1,0) a false positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    pub c_fn: f64,
    pub c_fp: f64,
    #[serde(default)]
    pub c_tp: f64,
    #[serde(default)]
    pub c_tn: f64,
}

impl CostMatrix {
    pub fn new(c_fn: f64, c_fp: f64) -> Result<Self> {
        if !(c_fn >= 0.0 && c_fp >= 0.0) {
            return Err(Error::Argument("misclassification costs must be nonnegative".into()));
        }
        Ok(CostMatrix {
            c_fn,
            c_fp,
            c_tp: 0.0,
            c_tn: 0.0,
        })
    }

    /// Class weights with w_pos / w_neg = c_fn / c_fp and w_neg = 1.
    pub fn class_weights(&self) -> Result<ClassWeights> {
        if !(self.c_fp > 0.0 && self.c_fn > 0.0) {
            return Err(Error::Argument(
                "deriving class weights needs positive c_fn and c_fp".into(),
            ));
        }
        ClassWeights::new(1.0, self.c_fn / self.c_fp)
    }
}

/// c_fn·FN + c_fp·FP, plus c_tp·TP + c_tn·TN when those costs are set.
pub fn total_cost(counts: &ConfusionCounts, cm: &CostMatrix) -> f64 {
    let mut cost = cm.c_fn * counts.fn_ as f64 + cm.c_fp * counts.fp as f64;
    if cm.c_tp != 0.0 {
        cost += cm.c_tp * counts.tp as f64;
    }
    if cm.c_tn != 0.0 {
        cost += cm.c_tn * counts.tn as f64;
    }
    cost
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w_neg: f64,
    pub w_pos: f64,
}

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights { w_neg: 1.0, w_pos: 1.0 };

    pub fn new(w_neg: f64, w_pos: f64) -> Result<Self> {
        if !(w_neg > 0.0 && w_pos > 0.0 && w_neg.is_finite() && w_pos.is_finite()) {
            return Err(Error::Argument(format!(
                "class weights must be positive and finite, got ({w_neg}, {w_pos})"
            )));
        }
        Ok(ClassWeights { w_neg, w_pos })
    }

    pub fn for_label(&self, positive: bool) -> f64 {
        if positive {
            self.w_pos
        } else {
            self.w_neg
        }
    }
}

/// w_c = n / (2·n_c) for each class.
pub fn balanced_weights(labels: &[bool]) -> Result<ClassWeights> {
    let n = labels.len();
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    ClassWeights::new(n as f64 / (2.0 * neg as f64), n as f64 / (2.0 * pos as f64))
}

/// How class weights are chosen at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Balanced,
    Uniform,
    Fixed(ClassWeights),
    Costs(CostMatrix),
}

impl Weighting {
    pub fn resolve(&self, labels: &[bool]) -> Result<ClassWeights> {
        match self {
            Weighting::Balanced => balanced_weights(labels),
            Weighting::Uniform => Ok(ClassWeights::UNIFORM),
            Weighting::Fixed(w) => Ok(*w),
            Weighting::Costs(cm) => cm.class_weights(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub lambda: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            lambda: 1e-4,
            max_epochs: 1000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    pub iterations: usize,
    pub t0: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-4,
            iterations: 1000,
            t0: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per node; `None` means ⌊√d⌋.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 1000,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    Logistic(LogisticParams),
    LinearSvm(SvmParams),
    Forest(ForestParams),
}

impl Learner {
    pub fn name(&self) -> &'static str {
        match self {
            Learner::Logistic(_) => "logistic",
            Learner::LinearSvm(_) => "linear_svm",
            Learner::Forest(_) => "forest",
        }
    }
}

/// Learner configuration, class weighting and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModelSpec {
    pub learner: Learner,
    pub weights: Weighting,
    pub seed: u64,
}

impl CostModelSpec {
    pub fn logistic() -> Self {
        CostModelSpec {
            learner: Learner::Logistic(LogisticParams::default()),
            weights: Weighting::Balanced,
            seed: 0,
        }
    }

    pub fn linear_svm() -> Self {
        CostModelSpec {
            learner: Learner::LinearSvm(SvmParams::default()),
            weights: Weighting::Balanced,
            seed: 0,
        }
    }

    pub fn forest() -> Self {
        CostModelSpec {
            learner: Learner::Forest(ForestParams::default()),
            weights: Weighting::Balanced,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_weights(mut self, weights: Weighting) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_trees(mut self, n_trees: usize) -> Self {
        if let Learner::Forest(p) = &mut self.learner {
            p.n_trees = n_trees;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.learner {
            Learner::Logistic(p) => {
                if !(p.lambda >= 0.0) || !(p.tolerance >= 0.0) {
                    return Err(Error::Argument("logistic λ and tolerance must be ≥ 0".into()));
                }
            }
            Learner::LinearSvm(p) => {
                if !(p.lambda > 0.0) || !(p.t0 > 0.0) {
                    return Err(Error::Argument(
                        "linear SVM needs λ > 0 and t0 > 0 for the step schedule".into(),
                    ));
                }
            }
            Learner::Forest(p) => {
                if p.n_trees < 1 {
                    return Err(Error::Argument("forest needs at least one tree".into()));
                }
                if p.max_features == Some(0) {
                    return Err(Error::Argument("max_features must be ≥ 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Trains the configured learner.
    pub fn fit<T: Scalar>(&self, x: &Matrix<T>, y: &[bool], feature_names: &[String]) -> Result<TrainedClassifier<T>> {
        match self.learner {
            Learner::Logistic(_) => train_logistic(self, x, y, feature_names),
            Learner::LinearSvm(_) => train_linear_svm(self, x, y, feature_names),
            Learner::Forest(_) => train_forest(self, x, y, feature_names),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum FittedModel<T> {
    Linear(LinearModel<T>),
    Forest(Forest<T>),
}

/// A fitted predictor together with the spec and feature order it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainedClassifier<T> {
    pub spec: CostModelSpec,
    pub weights: ClassWeights,
    pub feature_names: Vec<String>,
    pub model: FittedModel<T>,
}

impl<T: Scalar> TrainedClassifier<T> {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn learner_name(&self) -> &'static str {
        self.spec.learner.name()
    }

    /// Positive-class decision for one feature vector in training order.
    pub fn predict_row(&self, row: &[T]) -> bool {
        match &self.model {
            FittedModel::Linear(m) => m.predict_row(row),
            FittedModel::Forest(f) => f.predict_row(row),
        }
    }

    /// Continuous score; positive iff [`predict_row`](Self::predict_row) is true.
    pub fn score_row(&self, row: &[T]) -> T {
        match &self.model {
            FittedModel::Linear(m) => m.decision(row),
            FittedModel::Forest(f) => f.positive_probability(row) - T::lit(0.5),
        }
    }

    /// Per-feature importance: mean impurity decrease for forests, |coefficient| on
    /// standardized inputs for linear learners.
    pub fn feature_importances(&self) -> Vec<T> {
        match &self.model {
            FittedModel::Linear(m) => m.coefficients().iter().map(|c| c.abs()).collect(),
            FittedModel::Forest(f) => f.feature_importances(),
        }
    }

    /// Serializes to the versioned JSON model document.
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocumentRef {
            format_version: MODEL_FORMAT_VERSION,
            scalar: scalar_name::<T>(),
            classifier: self,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                probe.format_version
            )));
        }
        if probe.scalar != scalar_name::<T>() {
            return Err(Error::ModelFormat(format!(
                "model stores {} scalars, loader expects {}",
                probe.scalar,
                scalar_name::<T>()
            )));
        }
        let doc: ModelDocument<T> = serde_json::from_str(text)?;
        let clf = doc.classifier;
        clf.spec.validate()?;
        Ok(clf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    /// Short content hash used to tag alerts with the model that raised them.
    pub fn identifier(&self) -> String {
        let json = self.to_json().unwrap_or_default();
        let digest = Sha256::digest(json.as_bytes());
        let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        format!("{}-{hex}", self.learner_name())
    }
}

fn scalar_name<T: Scalar>() -> String {
    std::any::type_name::<T>().to_string()
}

#[derive(Serialize)]
#[serde(bound = "T: Scalar")]
struct ModelDocumentRef<'a, T> {
    format_version: u32,
    scalar: String,
    classifier: &'a TrainedClassifier<T>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct ModelDocument<T> {
    #[allow(dead_code)]
    format_version: u32,
    classifier: TrainedClassifier<T>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
    scalar: String,
}

/// One boolean per row of `x`; fails on a width mismatch.
pub fn predict<T: Scalar>(model: &TrainedClassifier<T>, x: &Matrix<T>) -> Result<Vec<bool>> {
    if x.rows() > 0 && x.cols() != model.n_features() {
        return Err(Error::Shape {
            expected: model.n_features(),
            got: x.cols(),
        });
    }
    Ok(x.row_iter().map(|r| model.predict_row(r)).collect())
}

fn check_training_input<T: Scalar>(
    x: &Matrix<T>,
    y: &[bool],
    feature_names: &[String],
    require_both: bool,
) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Argument(format!(
            "{} feature rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::Argument("no training rows".into()));
    }
    if feature_names.len() != x.cols() {
        return Err(Error::Shape {
            expected: feature_names.len(),
            got: x.cols(),
        });
    }
    if let Some((i, j)) = x.first_non_finite() {
        return Err(Error::NonFinite(format!("feature {} at row {i}", feature_names[j])));
    }
    if require_both {
        let pos = y.iter().filter(|&&v| v).count();
        if pos == 0 || pos == y.len() {
            return Err(Error::DegenerateLabels);
        }
    }
    Ok(())
}

/// Class-weighted, L2-regularized logistic regression on z-scored features.
pub fn train_logistic<T: Scalar>(
    spec: &CostModelSpec,
    x: &Matrix<T>,
    y: &[bool],
    feature_names: &[String],
) -> Result<TrainedClassifier<T>> {
    spec.validate()?;
    let Learner::Logistic(params) = spec.learner else {
        return Err(Error::Argument("spec does not describe a logistic learner".into()));
    };
    check_training_input(x, y, feature_names, true)?;
    let weights = spec.weights.resolve(y)?;
    let model = linear::fit_logistic(x, y, &weights, &params);
    Ok(TrainedClassifier {
        spec: *spec,
        weights,
        feature_names: feature_names.to_vec(),
        model: FittedModel::Linear(model),
    })
}

/// Class-weighted linear SVM trained by full-batch subgradient descent.
pub fn train_linear_svm<T: Scalar>(
    spec: &CostModelSpec,
    x: &Matrix<T>,
    y: &[bool],
    feature_names: &[String],
) -> Result<TrainedClassifier<T>> {
    spec.validate()?;
    let Learner::LinearSvm(params) = spec.learner else {
        return Err(Error::Argument("spec does not describe a linear SVM".into()));
    };
    check_training_input(x, y, feature_names, true)?;
    let weights = spec.weights.resolve(y)?;
    let model = linear::fit_svm(x, y, &weights, &params);
    Ok(TrainedClassifier {
        spec: *spec,
        weights,
        feature_names: feature_names.to_vec(),
        model: FittedModel::Linear(model),
    })
}

/// Random forest of class-weighted Gini trees on bootstrap samples.
///
/// Single-class training data is accepted and yields single-leaf trees; in that case
/// balanced weighting falls back to uniform weights.
pub fn train_forest<T: Scalar>(
    spec: &CostModelSpec,
    x: &Matrix<T>,
    y: &[bool],
    feature_names: &[String],
) -> Result<TrainedClassifier<T>> {
    spec.validate()?;
    let Learner::Forest(params) = spec.learner else {
        return Err(Error::Argument("spec does not describe a forest".into()));
    };
    check_training_input(x, y, feature_names, false)?;
    let single_class = y.iter().all(|&v| v == y[0]);
    let weights = match (single_class, spec.weights) {
        (true, Weighting::Balanced) => ClassWeights::UNIFORM,
        (_, w) => w.resolve(y)?,
    };
    let forest = forest::fit_forest(x, y, &weights, &params, spec.seed);
    Ok(TrainedClassifier {
        spec: *spec,
        weights,
        feature_names: feature_names.to_vec(),
        model: FittedModel::Forest(forest),
    })
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
