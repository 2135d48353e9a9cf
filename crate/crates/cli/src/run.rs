//! Artifact bookkeeping: every run writes its files plus a `run.json` sidecar
//! holding the resolved config, its digest and a sha256 per artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Resolved;
use crate::CliError;

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Identity<'a> {
    subcommand: &'a str,
    config: &'a Resolved,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    subcommand: &'a str,
    config_digest: &'a str,
    config: &'a Resolved,
    input_sha256: Option<String>,
    artifacts: &'a BTreeMap<String, String>,
}

pub struct Run<'a> {
    subcommand: &'a str,
    config: &'a Resolved,
    digest: String,
    dir: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl<'a> Run<'a> {
    pub fn start(subcommand: &'a str, config: &'a Resolved) -> Result<Self, CliError> {
        let identity = serde_json::to_vec(&Identity { subcommand, config }).expect("config serializes");
        fs::create_dir_all(&config.out)
            .map_err(|e| CliError::input(format!("cannot create {}: {e}", config.out.display())))?;
        Ok(Run {
            subcommand,
            config,
            digest: hex(&identity),
            dir: config.out.clone(),
            artifacts: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        self.artifacts.insert(name.to_string(), hex(bytes));
        Ok(())
    }

    pub fn finish(self) -> Result<(), CliError> {
        let input_sha256 = match &self.config.input {
            Some(p) => Some(hex(&read(p)?)),
            None => None,
        };
        let sidecar = Sidecar {
            subcommand: self.subcommand,
            config_digest: &self.digest,
            config: self.config,
            input_sha256,
            artifacts: &self.artifacts,
        };
        let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        text.push('\n');
        let path = self.path("run.json");
        fs::write(&path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        for name in self.artifacts.keys() {
            println!("{}", self.path(name).display());
        }
        Ok(())
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))
}
