//! Confusion-based metrics and repeated stratified k-fold cross-validation.
//!
//! Metrics are exact ratios of counts; a 0/0 metric is `None` and never
//! silently becomes zero.

use std::fmt;
use std::io::Write;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{derive_seed, predict, CostModelSpec, Weighting};
use crate::resampling::{resample, ResampleSpec};
use crate::scalar::Scalar;

/// Exact rate in [0, 1].
pub type Rate = Ratio<u64>;

/// Positive means anomaly (EVENT true).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn transposed(&self) -> Self {
        ConfusionCounts {
            tp: self.tp,
            fp: self.fn_,
            tn: self.tn,
            fn_: self.fp,
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

pub fn confusion(predicted: &[bool], actual: &[bool]) -> Result<ConfusionCounts> {
    if predicted.len() != actual.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> Option<Rate> {
    (den != 0).then(|| Rate::new(num, den))
}

/// Correctly rounded conversion of an exact rate.
pub fn rate_to_f64(r: &Rate) -> f64 {
    // both parts are below 2^53 for any realistic sample count, so each converts exactly
    *r.numer() as f64 / *r.denom() as f64
}

/// F-beta from counts with β² given exactly: (1+β²)TP / ((1+β²)TP + β²FN + FP).
pub fn fbeta(counts: &ConfusionCounts, beta_sq: Rate) -> Option<Rate> {
    let (bn, bd) = (*beta_sq.numer(), *beta_sq.denom());
    // multiply through by bd to stay in integers
    let num = (bd + bn) * counts.tp;
    let den = num + bn * counts.fn_ + bd * counts.fp;
    ratio(num, den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Sensitivity,
    Specificity,
    Precision,
    F1,
    F05,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Precision,
        Metric::F1,
        Metric::F05,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Sensitivity => "sensitivity",
            Metric::Specificity => "specificity",
            Metric::Precision => "precision",
            Metric::F1 => "f1",
            Metric::F05 => "f05",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Exact metric values; `None` marks an undefined 0/0 ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sensitivity: Option<Rate>,
    pub specificity: Option<Rate>,
    pub precision: Option<Rate>,
    pub f1: Option<Rate>,
    pub f05: Option<Rate>,
}

impl MetricReport {
    pub fn exact(&self, metric: Metric) -> Option<Rate> {
        match metric {
            Metric::Sensitivity => self.sensitivity,
            Metric::Specificity => self.specificity,
            Metric::Precision => self.precision,
            Metric::F1 => self.f1,
            Metric::F05 => self.f05,
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.exact(metric).as_ref().map(rate_to_f64)
    }
}

/// Sensitivity, specificity, precision, F1 and F0.5 from counts.
pub fn metrics(counts: &ConfusionCounts) -> MetricReport {
    let c = counts;
    MetricReport {
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        specificity: ratio(c.tn, c.fp + c.tn),
        precision: ratio(c.tp, c.tp + c.fp),
        f1: fbeta(c, Rate::from_integer(1)),
        f05: fbeta(c, Rate::new(1, 4)),
    }
}

/// Fold membership for every repeat: `assignments[r][i]` is the test fold of sample `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratifiedFolds {
    pub k: usize,
    pub repeats: usize,
    pub assignments: Vec<Vec<usize>>,
}

/// One (repeat, fold) train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl StratifiedFolds {
    pub fn split(&self, repeat: usize, fold: usize) -> Split {
        let (test, train) = (0..self.assignments[repeat].len()).partition(|&i| self.assignments[repeat][i] == fold);
        Split {
            repeat,
            fold,
            train,
            test,
        }
    }

    /// All splits ordered by (repeat, fold).
    pub fn splits(&self) -> Vec<Split> {
        (0..self.repeats)
            .flat_map(|r| (0..self.k).map(move |f| (r, f)))
            .map(|(r, f)| self.split(r, f))
            .collect()
    }
}

/// Per repeat: seeded shuffle within each class, then one round-robin over positives
/// followed by negatives so fold sizes and per-fold class counts differ by at most one.
pub fn repeated_stratified_kfold(labels: &[bool], k: usize, repeats: usize, seed: u64) -> Result<StratifiedFolds> {
    if k < 2 {
        return Err(Error::Argument(format!("k must be at least 2, got {k}")));
    }
    if repeats < 1 {
        return Err(Error::Argument("repeats must be at least 1".into()));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    for class in [&pos, &neg] {
        if class.len() < k {
            return Err(Error::Stratification { count: class.len(), k });
        }
    }
    let assignments = (0..repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
            let mut p = pos.clone();
            let mut q = neg.clone();
            p.shuffle(&mut rng);
            q.shuffle(&mut rng);
            let mut fold_of = vec![0; labels.len()];
            for (slot, &i) in p.iter().chain(&q).enumerate() {
                fold_of[i] = slot % k;
            }
            fold_of
        })
        .collect();
    Ok(StratifiedFolds {
        k,
        repeats,
        assignments,
    })
}

/// Seeded stratified subsample of about `target` rows, returned in ascending index order.
pub fn stratified_subsample(labels: &[bool], target: usize, seed: u64) -> Vec<usize> {
    let n = labels.len();
    if target >= n {
        return (0..n).collect();
    }
    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
    let take_pos = ((pos.len() as f64 * target as f64 / n as f64).round() as usize).min(pos.len());
    let take_neg = (target - take_pos).min(neg.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut idx: Vec<usize> = pos[..take_pos].iter().chain(&neg[..take_neg]).copied().collect();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvSpec {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Keep the model's class weighting when a resampler is active; off means uniform weights.
    #[serde(default)]
    pub weights_with_resampling: bool,
}

impl Default for CvSpec {
    fn default() -> Self {
        CvSpec {
            k: 10,
            repeats: 3,
            seed: 0,
            weights_with_resampling: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub repeat: usize,
    pub fold: usize,
    pub counts: ConfusionCounts,
    pub report: MetricReport,
    /// Global indices of the original rows that synthetic training rows were built from.
    pub synthetic_sources: Vec<usize>,
    pub resample_warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub mean: Option<f64>,
    /// Sample standard deviation over defined folds.
    pub std: Option<f64>,
    pub defined: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub cv: CvSpec,
    pub model: CostModelSpec,
    pub resample: Option<ResampleSpec>,
    pub folds: Vec<FoldRecord>,
    pub summary: Vec<MetricSummary>,
}

impl CvReport {
    pub fn summary_for(&self, metric: Metric) -> &MetricSummary {
        self.summary
            .iter()
            .find(|s| s.metric == metric)
            .expect("summary covers every metric")
    }

    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.summary_for(metric).mean
    }

    /// Defined per-fold values of one metric, in (repeat, fold) order.
    pub fn fold_values(&self, metric: Metric) -> Vec<f64> {
        self.folds.iter().filter_map(|f| f.report.get(metric)).collect()
    }

    /// Long-format CSV: one `fold` row per (repeat, fold, metric) and one `summary` row per metric.
    pub fn write_csv<W: Write>(&self, writer: W, label: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "model", "row", "repeat", "fold", "metric", "value", "std", "defined", "skipped",
        ])?;
        for f in &self.folds {
            for m in Metric::ALL {
                let value = f
                    .report
                    .get(m)
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "undefined".into());
                w.write_record([
                    label,
                    "fold",
                    &f.repeat.to_string(),
                    &f.fold.to_string(),
                    m.name(),
                    &value,
                    "",
                    "",
                    "",
                ])?;
            }
        }
        for s in &self.summary {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "undefined".into());
            w.write_record([
                label,
                "summary",
                "",
                "",
                s.metric.name(),
                &fmt(s.mean),
                &fmt(s.std),
                &s.defined.to_string(),
                &s.skipped.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv writer>".into(),
            source: e,
        })
    }
}

fn summarize(folds: &[FoldRecord]) -> Vec<MetricSummary> {
    Metric::ALL
        .into_iter()
        .map(|metric| {
            let vals: Vec<f64> = folds.iter().filter_map(|f| f.report.get(metric)).collect();
            let n = vals.len();
            let mean = (n > 0).then(|| vals.iter().sum::<f64>() / n as f64);
            let std = match (mean, n) {
                (Some(m), n) if n > 1 => {
                    Some((vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt())
                }
                _ => None,
            };
            MetricSummary {
                metric,
                mean,
                std,
                defined: n,
                skipped: folds.len() - n,
            }
        })
        .collect()
}

/// Repeated stratified k-fold evaluation. Resampling, when requested, touches only
/// the training rows of each split.
pub fn cross_validate<T: Scalar>(
    model: &CostModelSpec,
    resample_spec: Option<&ResampleSpec>,
    x: &Matrix<T>,
    y: &[bool],
    feature_names: &[String],
    cv: &CvSpec,
) -> Result<CvReport> {
    model.validate()?;
    if x.rows() != y.len() {
        return Err(Error::Argument(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    let folds = repeated_stratified_kfold(y, cv.k, cv.repeats, cv.seed)?;
    let splits = folds.splits();
    let records: Vec<Result<FoldRecord>> = splits
        .par_iter()
        .map(|s| {
            run_split(model, resample_spec, x, y, feature_names, cv, s).map_err(|e| Error::Fold {
                repeat: s.repeat,
                fold: s.fold,
                source: Box::new(e),
            })
        })
        .collect();
    let folds: Vec<FoldRecord> = records.into_iter().collect::<Result<_>>()?;
    Ok(CvReport {
        cv: *cv,
        model: *model,
        resample: resample_spec.copied(),
        summary: summarize(&folds),
        folds,
    })
}

fn run_split<T: Scalar>(
    model: &CostModelSpec,
    resample_spec: Option<&ResampleSpec>,
    x: &Matrix<T>,
    y: &[bool],
    feature_names: &[String],
    cv: &CvSpec,
    split: &Split,
) -> Result<FoldRecord> {
    let split_index = (split.repeat * cv.k + split.fold) as u64;
    let train_x = x.select_rows(&split.train);
    let train_y: Vec<bool> = split.train.iter().map(|&i| y[i]).collect();
    let mut spec = model.with_seed(derive_seed(model.seed, split_index));

    let (fit_x, fit_y, sources, warning) = match resample_spec {
        Some(rs) => {
            let rs = ResampleSpec {
                seed: derive_seed(rs.seed, split_index),
                ..*rs
            };
            let out = resample(&train_x, &train_y, &rs)?;
            let mut sources: Vec<usize> = out
                .provenance
                .iter()
                .flat_map(|p| p.source_rows())
                .map(|local| split.train[local])
                .collect();
            sources.sort_unstable();
            sources.dedup();
            if !cv.weights_with_resampling {
                spec = spec.with_weights(Weighting::Uniform);
            }
            (out.x, out.y, sources, out.warning.map(|w| w.to_string()))
        }
        None => (train_x, train_y, Vec::new(), None),
    };

    let clf = spec.fit(&fit_x, &fit_y, feature_names)?;
    let test_x = x.select_rows(&split.test);
    let test_y: Vec<bool> = split.test.iter().map(|&i| y[i]).collect();
    let predicted = predict(&clf, &test_x)?;
    let counts = confusion(&predicted, &test_y)?;
    Ok(FoldRecord {
        repeat: split.repeat,
        fold: split.fold,
        counts,
        report: metrics(&counts),
        synthetic_sources: sources,
        resample_warning: warning,
    })
}
