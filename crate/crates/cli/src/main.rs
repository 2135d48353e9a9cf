//! `aquanomaly`: command-line front end for the anomaly-detection pipeline.

mod commands;
mod config;
mod run;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{
    ConfigArg, ConfigFile, CvArgs, DiffArgs, Groups, IoArgs, ModelArgs, ModelFileArgs, ResampleArgs, RfeArgs,
    ServeArgs, StreamArgs, SubsampleArgs, SynthArgs,
};

#[derive(Parser)]
#[command(
    name = "aquanomaly",
    version,
    about = "Cost-sensitive anomaly detection for water-quality sensor series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward-fill gaps and write cleaned.csv.
    Clean {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Per-channel augmented Dickey-Fuller table (adf.csv).
    Adf {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        diff: DiffArgs,
    },
    /// Mutual information of each channel with the label (mi.csv).
    Mi {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        diff: DiffArgs,
    },
    /// Fit one model on the whole input and persist it (model.json).
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        diff: DiffArgs,
        #[command(flatten)]
        subsample: SubsampleArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        resample: ResampleArgs,
    },
    /// Repeated stratified CV of each model (evaluate_summary.csv, evaluate_folds.csv).
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        diff: DiffArgs,
        #[command(flatten)]
        subsample: SubsampleArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cv: CvArgs,
    },
    /// Repeated stratified CV of one model under each resampler (resample_summary.csv, resample_folds.csv).
    ResampleEval {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        diff: DiffArgs,
        #[command(flatten)]
        subsample: SubsampleArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cv: CvArgs,
        #[command(flatten)]
        resample: ResampleArgs,
    },
    /// Recursive feature elimination (rfe_ranking.csv, rfe_scan.csv in scan mode).
    Rfe {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        diff: DiffArgs,
        #[command(flatten)]
        subsample: SubsampleArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cv: CvArgs,
        #[command(flatten)]
        rfe: RfeArgs,
    },
    /// Run the stream engine behind HTTP: POST /write, GET <out-path>, GET /alerts.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        stream: StreamArgs,
        #[command(flatten)]
        model_file: ModelFileArgs,
        #[command(flatten)]
        serve: ServeArgs,
    },
    /// Replay a CSV through the stream engine (windows.csv, latest_batch.json, alerts.jsonl).
    Replay {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        stream: StreamArgs,
        #[command(flatten)]
        model_file: ModelFileArgs,
    },
    /// Score every row of a CSV offline (alerts.jsonl).
    Score {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        diff: DiffArgs,
        #[command(flatten)]
        model_file: ModelFileArgs,
    },
    /// Write a seeded surrogate dataset (synth.csv).
    Synth {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        synth: SynthArgs,
    },
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const USAGE: u8 = 2;
    pub const INPUT: u8 = 3;
    pub const NUMERICAL: u8 = 4;

    pub fn usage(m: impl Into<String>) -> Self {
        CliError {
            code: Self::USAGE,
            message: m.into(),
        }
    }

    pub fn input(m: impl Into<String>) -> Self {
        CliError {
            code: Self::INPUT,
            message: m.into(),
        }
    }
}

impl From<aquanomaly::Error> for CliError {
    fn from(e: aquanomaly::Error) -> Self {
        use aquanomaly::Error as E;
        let code = match &e {
            _ if e.is_numerical() => Self::NUMERICAL,
            E::Argument(_) | E::TaskSyntax { .. } | E::TaskValidation(_) => Self::USAGE,
            _ => Self::INPUT,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Default)]
struct Given {
    io: IoArgs,
    diff: DiffArgs,
    subsample: SubsampleArgs,
    model: ModelArgs,
    cv: CvArgs,
    resample: ResampleArgs,
    rfe: RfeArgs,
    stream: StreamArgs,
    model_file: ModelFileArgs,
    serve: ServeArgs,
    synth: SynthArgs,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Clean { .. } => "clean",
            Command::Adf { .. } => "adf",
            Command::Mi { .. } => "mi",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::ResampleEval { .. } => "resample-eval",
            Command::Rfe { .. } => "rfe",
            Command::Serve { .. } => "serve",
            Command::Replay { .. } => "replay",
            Command::Score { .. } => "score",
            Command::Synth { .. } => "synth",
        }
    }

    /// Layers each flag group the subcommand accepts over the config file.
    fn groups(self) -> Result<Groups, CliError> {
        let mut g = Given::default();
        let mut used: Vec<&'static str> = Vec::new();
        let config = match self {
            Command::Clean { config, io } => {
                g.io = io;
                config
            }
            Command::Adf { config, io, diff } | Command::Mi { config, io, diff } => {
                (g.io, g.diff) = (io, diff);
                used.push("diff");
                config
            }
            Command::Train {
                config,
                io,
                diff,
                subsample,
                model,
                resample,
            } => {
                (g.io, g.diff, g.subsample, g.model, g.resample) = (io, diff, subsample, model, resample);
                used.extend(["diff", "subsample", "model", "resample"]);
                config
            }
            Command::Evaluate {
                config,
                io,
                diff,
                subsample,
                model,
                cv,
            } => {
                (g.io, g.diff, g.subsample, g.model, g.cv) = (io, diff, subsample, model, cv);
                used.extend(["diff", "subsample", "model", "cv"]);
                config
            }
            Command::ResampleEval {
                config,
                io,
                diff,
                subsample,
                model,
                cv,
                resample,
            } => {
                (g.io, g.diff, g.subsample, g.model, g.cv, g.resample) = (io, diff, subsample, model, cv, resample);
                used.extend(["diff", "subsample", "model", "cv", "resample"]);
                config
            }
            Command::Rfe {
                config,
                io,
                diff,
                subsample,
                model,
                cv,
                rfe,
            } => {
                (g.io, g.diff, g.subsample, g.model, g.cv, g.rfe) = (io, diff, subsample, model, cv, rfe);
                used.extend(["diff", "subsample", "model", "cv", "rfe"]);
                config
            }
            Command::Serve {
                config,
                stream,
                model_file,
                serve,
            } => {
                (g.stream, g.model_file, g.serve) = (stream, model_file, serve);
                used.extend(["stream", "model_file", "serve"]);
                config
            }
            Command::Replay {
                config,
                io,
                stream,
                model_file,
            } => {
                (g.io, g.stream, g.model_file) = (io, stream, model_file);
                used.extend(["stream", "model_file"]);
                config
            }
            Command::Score {
                config,
                io,
                diff,
                model_file,
            } => {
                (g.io, g.diff, g.model_file) = (io, diff, model_file);
                used.extend(["diff", "model_file"]);
                config
            }
            Command::Synth { config, io, synth } => {
                (g.io, g.synth) = (io, synth);
                used.push("synth");
                config
            }
        };
        let mut file = ConfigFile::load(config.config.as_deref())?;
        let on = |name: &str| used.contains(&name);
        let groups = Groups {
            io: file.layer(&g.io)?,
            diff: if on("diff") { file.layer(&g.diff)? } else { g.diff },
            subsample: if on("subsample") {
                file.layer(&g.subsample)?
            } else {
                g.subsample
            },
            model: if on("model") { file.layer(&g.model)? } else { g.model },
            cv: if on("cv") { file.layer(&g.cv)? } else { g.cv },
            resample: if on("resample") {
                file.layer(&g.resample)?
            } else {
                g.resample
            },
            rfe: if on("rfe") { file.layer(&g.rfe)? } else { g.rfe },
            stream: if on("stream") { file.layer(&g.stream)? } else { g.stream },
            model_file: if on("model_file") {
                file.layer(&g.model_file)?
            } else {
                g.model_file
            },
            serve: if on("serve") { file.layer(&g.serve)? } else { g.serve },
            synth: if on("synth") { file.layer(&g.synth)? } else { g.synth },
        };
        file.finish()?;
        Ok(groups)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let result = cli.command.groups().and_then(|g| commands::run(name, &g));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aquanomaly {name}: {e}");
            ExitCode::from(e.code)
        }
    }
}
