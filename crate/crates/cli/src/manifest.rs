use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Replay record written next to every command's outputs. Everything except
/// `wall_time_s` is a function of the inputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub input_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub solver: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<OutputFile>,
    pub wall_time_s: f64,
}

/// Collects outputs of one run and writes them with a manifest.
pub struct Run {
    started: Instant,
    dir: PathBuf,
    manifest_name: String,
    command: Vec<String>,
    input: Vec<u8>,
    pub solver: BTreeMap<String, serde_json::Value>,
    outputs: Vec<OutputFile>,
}

impl Run {
    pub fn new(dir: &Path, manifest_name: &str, command: Vec<String>, input: &[u8]) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Run {
            started: Instant::now(),
            dir: dir.to_path_buf(),
            manifest_name: manifest_name.to_string(),
            command,
            input: input.to_vec(),
            solver: BTreeMap::new(),
            outputs: vec![],
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(OutputFile { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(path)
    }

    pub fn finish(self) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            tool: "gism".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            input_sha256: sha256_hex(&self.input),
            seeds: BTreeMap::from([("sample_points".to_string(), gism::synth::SAMPLE_SEED)]),
            solver: self.solver,
            outputs: self.outputs,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join(&self.manifest_name);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}
