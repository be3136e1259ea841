use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct Input {
    path: String,
    sha256: String,
}

/// Everything that determines a run's artifacts. Wall-clock times are kept
/// apart so that the hash only covers reproducible content.
#[derive(Serialize)]
pub struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    inputs: Vec<Input>,
    outputs: Vec<String>,
    seed: Option<u64>,
    config: Value,
}

impl RunManifest {
    pub fn new(command: &'static str, seed: Option<u64>, config: Value) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
            config,
        }
    }

    pub fn configure(&mut self, seed: Option<u64>, config: Value) {
        self.seed = seed;
        self.config = config;
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(Input {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("manifest serializes").as_bytes())
    }

    /// Writes the manifest with its hash and stage timings.
    pub fn write(&self, path: &Path, timings: &Timings, code: u8) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct File<'a> {
            manifest: &'a RunManifest,
            manifest_hash: String,
            wall_clock_seconds: &'a BTreeMap<String, f64>,
        }
        let file = File {
            manifest: self,
            manifest_hash: self.hash(),
            wall_clock_seconds: &timings.stages,
        };
        write_text(path, &serde_json::to_string_pretty(&file).expect("manifest serializes"), code)
    }
}

#[derive(Default)]
pub struct Timings {
    stages: BTreeMap<String, f64>,
}

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.insert(stage.to_string(), start.elapsed().as_secs_f64());
        out
    }
}

pub fn read_bytes(path: &Path, code: u8) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::new(code, format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str, code: u8) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::new(code, format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::new(code, format!("cannot write {}: {e}", path.display())))
}

/// `out.csv` -> `out.<suffix>`
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}
