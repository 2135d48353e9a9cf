//! Minority-class oversampling.
//!
//! Every method keeps the original rows in place and appends new minority rows;
//! `provenance[i]` explains appended row `n_original + i`. Distances are plain
//! Euclidean on the given features. Neighbor ties break toward the lower row index.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{train_linear_svm, CostModelSpec, Learner, SvmParams, Weighting};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ros,
    Smote,
    #[serde(rename = "blsmote")]
    BorderlineSmote,
    #[serde(rename = "svmsmote")]
    SvmSmote,
    Adasyn,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ros,
        Method::Smote,
        Method::BorderlineSmote,
        Method::SvmSmote,
        Method::Adasyn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ros => "ros",
            Method::Smote => "smote",
            Method::BorderlineSmote => "blsmote",
            Method::SvmSmote => "svmsmote",
            Method::Adasyn => "adasyn",
        }
    }

    pub fn from_name(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub method: Method,
    pub k_neighbors: usize,
    /// Neighborhood size for the danger test (Borderline-SMOTE, SVM-SMOTE).
    pub m_neighbors: usize,
    /// Minority:majority ratio after resampling.
    pub target_ratio: f64,
    pub seed: u64,
    /// Linear SVM used by SVM-SMOTE to find support vectors.
    #[serde(default = "default_svm")]
    pub svm: SvmParams,
}

fn default_svm() -> SvmParams {
    SvmParams {
        lambda: 1e-2,
        ..SvmParams::default()
    }
}

impl ResampleSpec {
    pub fn new(method: Method) -> Self {
        ResampleSpec {
            method,
            k_neighbors: 5,
            m_neighbors: 10,
            target_ratio: 1.0,
            seed: 0,
            svm: default_svm(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors < 1 || self.m_neighbors < 1 {
            return Err(Error::Argument("neighbor counts must be at least 1".into()));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(Error::Argument(format!(
                "target ratio {} outside (0, 1]",
                self.target_ratio
            )));
        }
        Ok(())
    }
}

/// How an appended row was produced; indices refer to input rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Duplicate {
        of: usize,
    },
    /// seed + λ·(neighbor − seed)
    Interpolated {
        seed: usize,
        neighbor: usize,
        lambda: f64,
    },
    /// seed + λ·(seed − neighbor): the seed lies between the neighbor and the new row.
    Extrapolated {
        seed: usize,
        neighbor: usize,
        lambda: f64,
    },
}

impl Provenance {
    pub fn source_rows(&self) -> Vec<usize> {
        match *self {
            Provenance::Duplicate { of } => vec![of],
            Provenance::Interpolated { seed, neighbor, .. } | Provenance::Extrapolated { seed, neighbor, .. } => {
                vec![seed, neighbor]
            }
        }
    }
}

/// A synthetic row with its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecord<'a, T> {
    pub features: &'a [T],
    pub provenance: Provenance,
}

/// Non-fatal reasons a method produced nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleWarning {
    EmptyDangerSet,
    NoSupportVectors,
    NoMajorityContamination,
}

impl fmt::Display for ResampleWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResampleWarning::EmptyDangerSet => "no minority point is in danger; input returned unchanged",
            ResampleWarning::NoSupportVectors => "no minority support vectors; input returned unchanged",
            ResampleWarning::NoMajorityContamination => {
                "no minority point has majority neighbors; input returned unchanged"
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResampleOutcome<T> {
    pub x: Matrix<T>,
    pub y: Vec<bool>,
    pub original_rows: usize,
    pub provenance: Vec<Provenance>,
    pub warning: Option<ResampleWarning>,
}

impl<T: Scalar> ResampleOutcome<T> {
    fn unchanged(x: &Matrix<T>, y: &[bool], warning: Option<ResampleWarning>) -> Self {
        ResampleOutcome {
            x: x.clone(),
            y: y.to_vec(),
            original_rows: x.rows(),
            provenance: Vec::new(),
            warning,
        }
    }

    pub fn synthetic(&self) -> impl Iterator<Item = SyntheticRecord<'_, T>> + '_ {
        self.provenance.iter().enumerate().map(move |(i, &p)| SyntheticRecord {
            features: self.x.row(self.original_rows + i),
            provenance: p,
        })
    }

    /// Audit CSV: row, kind, seed/of, neighbor, lambda.
    pub fn write_provenance_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "kind", "seed", "neighbor", "lambda"])?;
        for (i, p) in self.provenance.iter().enumerate() {
            let row = (self.original_rows + i).to_string();
            let rec = match *p {
                Provenance::Duplicate { of } => [row, "duplicate".into(), of.to_string(), String::new(), String::new()],
                Provenance::Interpolated { seed, neighbor, lambda } => [
                    row,
                    "interpolated".into(),
                    seed.to_string(),
                    neighbor.to_string(),
                    lambda.to_string(),
                ],
                Provenance::Extrapolated { seed, neighbor, lambda } => [
                    row,
                    "extrapolated".into(),
                    seed.to_string(),
                    neighbor.to_string(),
                    lambda.to_string(),
                ],
            };
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv writer>".into(),
            source: e,
        })
    }
}

/// seed + λ·(neighbor − seed).
pub fn interpolate<T: Scalar>(seed: &[T], neighbor: &[T], lambda: T) -> Vec<T> {
    seed.iter().zip(neighbor).map(|(&s, &n)| s + lambda * (n - s)).collect()
}

/// seed + λ·(seed − neighbor).
pub fn extrapolate<T: Scalar>(seed: &[T], neighbor: &[T], lambda: T) -> Vec<T> {
    seed.iter().zip(neighbor).map(|(&s, &n)| s + lambda * (s - n)).collect()
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum()
}

/// The `k` rows of `candidates` nearest to row `query`, excluding `query` itself.
pub fn nearest_neighbors<T: Scalar>(x: &Matrix<T>, query: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let q = x.row(query);
    let mut d: Vec<(T, usize)> = candidates
        .iter()
        .filter(|&&c| c != query)
        .map(|&c| (sq_dist(q, x.row(c)), c))
        .collect();
    let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1));
    let k = k.min(d.len());
    if k == 0 {
        return Vec::new();
    }
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, cmp);
        d.truncate(k);
    }
    d.sort_unstable_by(cmp);
    d.into_iter().map(|(_, i)| i).collect()
}

struct Classes {
    minority_label: bool,
    minority: Vec<usize>,
    all: Vec<usize>,
    n_major: usize,
}

impl Classes {
    fn of(y: &[bool]) -> Result<Self> {
        let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
        let neg = y.len() - pos.len();
        if pos.is_empty() || neg == 0 {
            return Err(Error::DegenerateLabels);
        }
        let minority_label = pos.len() <= neg;
        let minority = if minority_label {
            pos
        } else {
            (0..y.len()).filter(|&i| !y[i]).collect()
        };
        let n_major = y.len() - minority.len();
        Ok(Classes {
            minority_label,
            minority,
            all: (0..y.len()).collect(),
            n_major,
        })
    }

    /// Synthetic rows needed so minority/majority reaches `ratio` (rounded).
    fn needed(&self, ratio: f64) -> usize {
        ((ratio * self.n_major as f64).round() as usize).saturating_sub(self.minority.len())
    }

    fn majority_count(&self, y: &[bool], idx: &[usize]) -> usize {
        idx.iter().filter(|&&i| y[i] != self.minority_label).count()
    }
}

struct Builder<'a, T> {
    x: &'a Matrix<T>,
    out: Matrix<T>,
    y: Vec<bool>,
    label: bool,
    provenance: Vec<Provenance>,
}

impl<'a, T: Scalar> Builder<'a, T> {
    fn new(x: &'a Matrix<T>, y: &[bool], label: bool) -> Self {
        Builder {
            x,
            out: x.clone(),
            y: y.to_vec(),
            label,
            provenance: Vec::new(),
        }
    }

    fn push(&mut self, row: &[T], p: Provenance) {
        self.out.push_row(row).expect("row width matches");
        self.y.push(self.label);
        self.provenance.push(p);
    }

    fn interpolated(&mut self, seed: usize, neighbor: usize, lambda: f64) {
        let row = interpolate(self.x.row(seed), self.x.row(neighbor), T::lit(lambda));
        self.push(&row, Provenance::Interpolated { seed, neighbor, lambda });
    }

    fn extrapolated(&mut self, seed: usize, neighbor: usize, lambda: f64) {
        let row = extrapolate(self.x.row(seed), self.x.row(neighbor), T::lit(lambda));
        self.push(&row, Provenance::Extrapolated { seed, neighbor, lambda });
    }

    fn finish(self) -> ResampleOutcome<T> {
        ResampleOutcome {
            original_rows: self.x.rows(),
            x: self.out,
            y: self.y,
            provenance: self.provenance,
            warning: None,
        }
    }
}

fn check_shape<T: Scalar>(x: &Matrix<T>, y: &[bool]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Argument(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    Ok(())
}

fn require_neighbors(classes: &Classes, k: usize) -> Result<()> {
    if classes.minority.len() <= k {
        return Err(Error::InsufficientMinority {
            k,
            found: classes.minority.len(),
        });
    }
    Ok(())
}

/// Dispatches on `spec.method`.
pub fn resample<T: Scalar>(x: &Matrix<T>, y: &[bool], spec: &ResampleSpec) -> Result<ResampleOutcome<T>> {
    match spec.method {
        Method::Ros => random_oversample(x, y, spec),
        Method::Smote => smote(x, y, spec),
        Method::BorderlineSmote => borderline_smote(x, y, spec),
        Method::SvmSmote => svm_smote(x, y, spec),
        Method::Adasyn => adasyn(x, y, spec),
    }
}

/// Duplicates uniformly chosen minority rows until the target ratio is met.
pub fn random_oversample<T: Scalar>(x: &Matrix<T>, y: &[bool], spec: &ResampleSpec) -> Result<ResampleOutcome<T>> {
    spec.validate()?;
    check_shape(x, y)?;
    let classes = Classes::of(y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = Builder::new(x, y, classes.minority_label);
    for _ in 0..classes.needed(spec.target_ratio) {
        let of = classes.minority[rng.gen_range(0..classes.minority.len())];
        b.push(x.row(of), Provenance::Duplicate { of });
    }
    Ok(b.finish())
}

fn minority_knn<T: Scalar>(x: &Matrix<T>, classes: &Classes, k: usize) -> Vec<Vec<usize>> {
    classes
        .minority
        .iter()
        .map(|&i| nearest_neighbors(x, i, &classes.minority, k))
        .collect()
}

/// Interpolates between random minority seeds and one of their `k` nearest minority neighbors.
pub fn smote<T: Scalar>(x: &Matrix<T>, y: &[bool], spec: &ResampleSpec) -> Result<ResampleOutcome<T>> {
    spec.validate()?;
    check_shape(x, y)?;
    let classes = Classes::of(y)?;
    require_neighbors(&classes, spec.k_neighbors)?;
    let needed = classes.needed(spec.target_ratio);
    let mut b = Builder::new(x, y, classes.minority_label);
    if needed == 0 {
        return Ok(b.finish());
    }
    let knn = minority_knn(x, &classes, spec.k_neighbors);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..needed {
        let s = rng.gen_range(0..classes.minority.len());
        let nb = knn[s][rng.gen_range(0..knn[s].len())];
        b.interpolated(classes.minority[s], nb, rng.gen::<f64>());
    }
    Ok(b.finish())
}

/// Danger class of a minority point from the majority count among its `m` neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    Safe,
    Danger,
    Noise,
}

pub fn zone(majority_neighbors: usize, m: usize) -> Zone {
    if majority_neighbors >= m {
        Zone::Noise
    } else if 2 * majority_neighbors >= m {
        Zone::Danger
    } else {
        Zone::Safe
    }
}

/// Zone of every minority point (in minority order) under the `m`-nearest-neighbor test.
pub fn minority_zones<T: Scalar>(x: &Matrix<T>, y: &[bool], m: usize) -> Result<Vec<(usize, Zone)>> {
    check_shape(x, y)?;
    let classes = Classes::of(y)?;
    Ok(classes
        .minority
        .iter()
        .map(|&i| {
            let nn = nearest_neighbors(x, i, &classes.all, m);
            (i, zone(classes.majority_count(y, &nn), m))
        })
        .collect())
}

/// Borderline-SMOTE (variant 1): only DANGER minority points seed synthetics, interpolating
/// toward minority neighbors.
pub fn borderline_smote<T: Scalar>(x: &Matrix<T>, y: &[bool], spec: &ResampleSpec) -> Result<ResampleOutcome<T>> {
    spec.validate()?;
    check_shape(x, y)?;
    let classes = Classes::of(y)?;
    require_neighbors(&classes, spec.k_neighbors)?;
    let needed = classes.needed(spec.target_ratio);
    if needed == 0 {
        return Ok(ResampleOutcome::unchanged(x, y, None));
    }
    let danger: Vec<usize> = minority_zones(x, y, spec.m_neighbors)?
        .into_iter()
        .filter(|&(_, z)| z == Zone::Danger)
        .map(|(i, _)| i)
        .collect();
    if danger.is_empty() {
        return Ok(ResampleOutcome::unchanged(x, y, Some(ResampleWarning::EmptyDangerSet)));
    }
    let knn: Vec<Vec<usize>> = danger
        .iter()
        .map(|&i| nearest_neighbors(x, i, &classes.minority, spec.k_neighbors))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = Builder::new(x, y, classes.minority_label);
    for _ in 0..needed {
        let s = rng.gen_range(0..danger.len());
        let nb = knn[s][rng.gen_range(0..knn[s].len())];
        b.interpolated(danger[s], nb, rng.gen::<f64>());
    }
    Ok(b.finish())
}

/// Minority rows whose functional margin under the fitted linear SVM is at most 1.
pub fn minority_support_vectors<T: Scalar>(x: &Matrix<T>, y: &[bool], spec: &ResampleSpec) -> Result<Vec<usize>> {
    let classes = Classes::of(y)?;
    let svm_spec = CostModelSpec {
        learner: Learner::LinearSvm(spec.svm),
        weights: Weighting::Balanced,
        seed: spec.seed,
    };
    let names: Vec<String> = (0..x.cols()).map(|j| format!("x{j}")).collect();
    let model = train_linear_svm(&svm_spec, x, y, &names)?;
    let sign = if classes.minority_label { T::one() } else { -T::one() };
    Ok(classes
        .minority
        .iter()
        .copied()
        .filter(|&i| sign * model.score_row(x.row(i)) <= T::one())
        .collect())
}

/// SVM-SMOTE: minority support vectors seed synthetics. A seed with at least half of its
/// `m` neighbors in the majority interpolates toward a minority neighbor; a seed in a
/// mostly-minority neighborhood extrapolates away from it (λ ≤ 1).
pub fn svm_smote<T: Scalar>(x: &Matrix<T>, y: &[bool], spec: &ResampleSpec) -> Result<ResampleOutcome<T>> {
    spec.validate()?;
    check_shape(x, y)?;
    let classes = Classes::of(y)?;
    require_neighbors(&classes, spec.k_neighbors)?;
    let needed = classes.needed(spec.target_ratio);
    if needed == 0 {
        return Ok(ResampleOutcome::unchanged(x, y, None));
    }
    let seeds = minority_support_vectors(x, y, spec)?;
    if seeds.is_empty() {
        return Ok(ResampleOutcome::unchanged(
            x,
            y,
            Some(ResampleWarning::NoSupportVectors),
        ));
    }
    let plan: Vec<(usize, bool, Vec<usize>)> = seeds
        .iter()
        .map(|&i| {
            let nn = nearest_neighbors(x, i, &classes.all, spec.m_neighbors);
            let crowded = 2 * classes.majority_count(y, &nn) >= nn.len();
            (i, crowded, nearest_neighbors(x, i, &classes.minority, spec.k_neighbors))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = Builder::new(x, y, classes.minority_label);
    for _ in 0..needed {
        let (seed, crowded, knn) = &plan[rng.gen_range(0..plan.len())];
        let nb = knn[rng.gen_range(0..knn.len())];
        let lambda = rng.gen::<f64>();
        if *crowded {
            b.interpolated(*seed, nb, lambda);
        } else {
            b.extrapolated(*seed, nb, lambda);
        }
    }
    Ok(b.finish())
}

/// Per-minority-point ADASYN allocation round(r̂_i·G), with G = (n_maj − n_min)·ratio.
pub fn adasyn_allocation<T: Scalar>(x: &Matrix<T>, y: &[bool], spec: &ResampleSpec) -> Result<Vec<(usize, usize)>> {
    let classes = Classes::of(y)?;
    let r: Vec<f64> = classes
        .minority
        .iter()
        .map(|&i| {
            let nn = nearest_neighbors(x, i, &classes.all, spec.k_neighbors);
            classes.majority_count(y, &nn) as f64 / nn.len().max(1) as f64
        })
        .collect();
    let total: f64 = r.iter().sum();
    if total == 0.0 {
        return Ok(Vec::new());
    }
    let g = (classes.n_major - classes.minority.len()) as f64 * spec.target_ratio;
    Ok(classes
        .minority
        .iter()
        .zip(&r)
        .map(|(&i, &ri)| (i, (ri / total * g).round() as usize))
        .collect())
}

/// ADASYN: more synthetics for minority points whose neighborhoods hold more majority rows.
pub fn adasyn<T: Scalar>(x: &Matrix<T>, y: &[bool], spec: &ResampleSpec) -> Result<ResampleOutcome<T>> {
    spec.validate()?;
    check_shape(x, y)?;
    let classes = Classes::of(y)?;
    require_neighbors(&classes, spec.k_neighbors)?;
    let allocation = adasyn_allocation(x, y, spec)?;
    if allocation.is_empty() {
        return Ok(ResampleOutcome::unchanged(
            x,
            y,
            Some(ResampleWarning::NoMajorityContamination),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = Builder::new(x, y, classes.minority_label);
    for (i, count) in allocation {
        if count == 0 {
            continue;
        }
        let knn = nearest_neighbors(x, i, &classes.minority, spec.k_neighbors);
        for _ in 0..count {
            let nb = knn[rng.gen_range(0..knn.len())];
            b.interpolated(i, nb, rng.gen::<f64>());
        }
    }
    Ok(b.finish())
}
