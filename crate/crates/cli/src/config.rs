//! Flag groups and their layering over a flat JSON config file.
//!
//! Every flag has a same-named key in the config file (`--c-fn` ↔ `"c-fn"`).
//! A flag given on the command line wins over the file; anything left unset
//! falls back to the defaults in [`Resolved`].

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use aquanomaly::evaluation::CvSpec;
use aquanomaly::features::RfeTarget;
use aquanomaly::models::{CostMatrix, CostModelSpec, Learner, Weighting};
use aquanomaly::resampling::{Method, ResampleSpec};
use aquanomaly::stream::{define_task, Span, StreamTaskSpec};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct IoArgs {
    /// Input CSV (`Time,<channels>,EVENT`).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory for artifacts; created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for every random choice of the run [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DiffArgs {
    /// First-difference the cleaned channels before analysis [default: true].
    #[arg(long)]
    pub difference: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SubsampleArgs {
    /// Stratified subsample of this many rows, taken after differencing.
    #[arg(long)]
    pub subsample: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    /// Comma-separated learners: logistic, svm, forest [default: forest].
    #[arg(long)]
    pub model: Option<String>,
    /// Trees per forest [default: 1000].
    #[arg(long)]
    pub trees: Option<usize>,
    /// Features tried per split [default: floor(sqrt(d))].
    #[arg(long)]
    pub max_features: Option<usize>,
    /// Regularization strength of the linear learners.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Epochs (logistic) or subgradient steps (svm).
    #[arg(long)]
    pub iterations: Option<usize>,
    /// balanced, uniform or costs (with --c-fn and --c-fp).
    #[arg(long)]
    pub weights: Option<String>,
    /// Cost of a missed event.
    #[arg(long)]
    pub c_fn: Option<f64>,
    /// Cost of a false alarm.
    #[arg(long)]
    pub c_fp: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CvArgs {
    /// Folds per repeat [default: 10].
    #[arg(long)]
    pub folds: Option<usize>,
    /// Repeats [default: 3].
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ResampleArgs {
    /// Comma-separated resamplers: none, ros, smote, blsmote, svmsmote, adasyn.
    #[arg(long)]
    pub resample: Option<String>,
    /// Minority neighbors used for interpolation [default: 5].
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    /// Neighborhood for the danger test of blsmote and svmsmote [default: 10].
    #[arg(long)]
    pub m_neighbors: Option<usize>,
    /// Minority:majority ratio after resampling [default: 1].
    #[arg(long)]
    pub target_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RfeArgs {
    /// `scan`, or the number of features to keep [default: scan].
    #[arg(long)]
    pub rfe: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StreamArgs {
    /// Task script; overrides --measurement/--period/--every/--out-path.
    #[arg(long)]
    pub task: Option<PathBuf>,
    /// Measurement name accepted on /write [default: water].
    #[arg(long)]
    pub measurement: Option<String>,
    /// Window length such as 5d [default: 5d].
    #[arg(long)]
    pub period: Option<String>,
    /// Emission cadence such as 2h [default: 2h].
    #[arg(long)]
    pub every: Option<String>,
    /// Route serving the latest window [default: /batch].
    #[arg(long)]
    pub out_path: Option<String>,
    /// Reject points that lack any schema channel.
    #[arg(long)]
    pub strict: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelFileArgs {
    /// Persisted model written by `train`.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ServeArgs {
    /// Address to bind [default: 127.0.0.1:9092].
    #[arg(long)]
    pub listen: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    /// Rows at one-minute cadence [default: 30000].
    #[arg(long)]
    pub rows: Option<usize>,
    /// Share of cells left empty [default: 0].
    #[arg(long)]
    pub missing_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArg {
    /// JSON file with flat keys named like the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// A loaded config file. Keys are checked against every flag group at the end.
pub struct ConfigFile {
    map: Map<String, Value>,
    known: BTreeSet<String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let map = match path {
            None => Map::new(),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::input(format!("cannot read config {}: {e}", p.display())))?;
                match serde_json::from_str(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(CliError::usage("config file must hold a JSON object")),
                    Err(e) => return Err(CliError::usage(format!("config {}: {e}", p.display()))),
                }
            }
        };
        Ok(ConfigFile {
            map,
            known: BTreeSet::new(),
        })
    }

    /// `flags` over the file values for the keys of `G`.
    pub fn layer<G: Serialize + DeserializeOwned + Default>(&mut self, flags: &G) -> Result<G, CliError> {
        let Value::Object(keys) = serde_json::to_value(G::default()).expect("flag groups serialize") else {
            unreachable!("flag groups are structs")
        };
        let Value::Object(given) = serde_json::to_value(flags).expect("flag groups serialize") else {
            unreachable!("flag groups are structs")
        };
        let mut merged = Map::new();
        for key in keys.keys() {
            self.known.insert(key.clone());
            match given.get(key) {
                Some(v) if !v.is_null() => {
                    merged.insert(key.clone(), v.clone());
                }
                _ => {
                    if let Some(v) = self.map.get(key) {
                        merged.insert(key.clone(), v.clone());
                    }
                }
            }
        }
        serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::usage(format!("config: {e}")))
    }

    /// Fails on keys no flag group of the subcommand claimed.
    pub fn finish(self) -> Result<(), CliError> {
        let unknown: Vec<&String> = self.map.keys().filter(|k| !self.known.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::usage(format!(
                "config: unknown keys {unknown:?} for this subcommand"
            )))
        }
    }
}

/// Values after layering and defaults; this is what a run records.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub input: Option<PathBuf>,
    /// Where artifacts go; not part of the run's identity.
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
    pub difference: bool,
    pub subsample: Option<usize>,
    pub models: Vec<CostModelSpec>,
    pub cv: CvSpec,
    pub resamplers: Vec<Option<ResampleSpec>>,
    pub rfe: RfeTarget,
    pub task: StreamTaskSpec,
    pub strict: bool,
    pub model_file: Option<PathBuf>,
    pub listen: String,
    pub rows: usize,
    pub missing_rate: f64,
}

pub struct Groups {
    pub io: IoArgs,
    pub diff: DiffArgs,
    pub subsample: SubsampleArgs,
    pub model: ModelArgs,
    pub cv: CvArgs,
    pub resample: ResampleArgs,
    pub rfe: RfeArgs,
    pub stream: StreamArgs,
    pub model_file: ModelFileArgs,
    pub serve: ServeArgs,
    pub synth: SynthArgs,
}

fn list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty())
}

fn model_spec(name: &str, m: &ModelArgs, seed: u64) -> Result<CostModelSpec, CliError> {
    let mut spec = match name {
        "logistic" | "lr" => CostModelSpec::logistic(),
        "svm" | "linear_svm" => CostModelSpec::linear_svm(),
        "forest" | "rf" => CostModelSpec::forest(),
        other => return Err(CliError::usage(format!("unknown model {other:?}"))),
    }
    .with_seed(seed);
    match &mut spec.learner {
        Learner::Logistic(p) => {
            p.lambda = m.lambda.unwrap_or(p.lambda);
            p.max_epochs = m.iterations.unwrap_or(p.max_epochs);
        }
        Learner::LinearSvm(p) => {
            p.lambda = m.lambda.unwrap_or(p.lambda);
            p.iterations = m.iterations.unwrap_or(p.iterations);
        }
        Learner::Forest(p) => {
            p.n_trees = m.trees.unwrap_or(p.n_trees);
            p.max_features = m.max_features.or(p.max_features);
        }
    }
    spec.weights = match m.weights.as_deref().unwrap_or("balanced") {
        "balanced" => Weighting::Balanced,
        "uniform" => Weighting::Uniform,
        "costs" => {
            let (Some(c_fn), Some(c_fp)) = (m.c_fn, m.c_fp) else {
                return Err(CliError::usage("weights \"costs\" needs c-fn and c-fp"));
            };
            Weighting::Costs(CostMatrix::new(c_fn, c_fp).map_err(CliError::from)?)
        }
        other => return Err(CliError::usage(format!("unknown weighting {other:?}"))),
    };
    spec.validate().map_err(CliError::from)?;
    Ok(spec)
}

impl Groups {
    pub fn resolve(&self, subcommand: &str) -> Result<Resolved, CliError> {
        let seed = self.io.seed.unwrap_or(0);
        let models = list(self.model.model.as_deref().unwrap_or("forest"))
            .map(|n| model_spec(n, &self.model, seed))
            .collect::<Result<Vec<_>, _>>()?;
        if models.is_empty() {
            return Err(CliError::usage("no model given"));
        }
        let cv = CvSpec {
            k: self.cv.folds.unwrap_or(10),
            repeats: self.cv.repeats.unwrap_or(3),
            seed,
            weights_with_resampling: false,
        };
        if cv.k < 2 || cv.repeats < 1 {
            return Err(CliError::usage("need at least 2 folds and 1 repeat"));
        }
        let default_resamplers = if subcommand == "resample-eval" {
            "none,ros,smote,blsmote,svmsmote,adasyn"
        } else {
            "none"
        };
        let resamplers = list(self.resample.resample.as_deref().unwrap_or(default_resamplers))
            .map(|name| {
                if name == "none" {
                    return Ok(None);
                }
                let method =
                    Method::from_name(name).ok_or_else(|| CliError::usage(format!("unknown resampler {name:?}")))?;
                let mut spec = ResampleSpec::new(method).with_seed(seed);
                spec.k_neighbors = self.resample.k_neighbors.unwrap_or(spec.k_neighbors);
                spec.m_neighbors = self.resample.m_neighbors.unwrap_or(spec.m_neighbors);
                spec.target_ratio = self.resample.target_ratio.unwrap_or(spec.target_ratio);
                spec.validate().map_err(CliError::from)?;
                Ok(Some(spec))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let rfe = match self.rfe.rfe.as_deref().unwrap_or("scan") {
            "scan" => RfeTarget::Scan,
            n => RfeTarget::Keep(
                n.parse()
                    .map_err(|_| CliError::usage(format!("rfe must be `scan` or a count, got {n:?}")))?,
            ),
        };
        Ok(Resolved {
            input: self.io.input.clone(),
            out: self.io.out.clone().unwrap_or_else(|| PathBuf::from("aquanomaly-out")),
            seed,
            difference: self.diff.difference.unwrap_or(true),
            subsample: self.subsample.subsample,
            models,
            cv,
            resamplers,
            rfe,
            task: self.task()?,
            strict: self.stream.strict.unwrap_or(false),
            model_file: self.model_file.model_file.clone(),
            listen: self.serve.listen.clone().unwrap_or_else(|| "127.0.0.1:9092".into()),
            rows: self.synth.rows.unwrap_or(30_000),
            missing_rate: self.synth.missing_rate.unwrap_or(0.0),
        })
    }

    fn task(&self) -> Result<StreamTaskSpec, CliError> {
        let s = &self.stream;
        if let Some(path) = &s.task {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read task {}: {e}", path.display())))?;
            return define_task(&text).map_err(CliError::from);
        }
        let span = |v: &Option<String>, default: Span| -> Result<Span, CliError> {
            v.as_deref()
                .map_or(Ok(default), |t| t.parse().map_err(|e: String| CliError::usage(e)))
        };
        let d = StreamTaskSpec::default();
        let task = StreamTaskSpec {
            measurement: s.measurement.clone().unwrap_or(d.measurement),
            period: span(&s.period, d.period)?,
            every: span(&s.every, d.every)?,
            out_path: s.out_path.clone().unwrap_or(d.out_path),
        };
        task.validate().map_err(CliError::from)?;
        Ok(task)
    }
}
