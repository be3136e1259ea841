use std::path::Path;

use serde::Deserialize;

use crate::CliError;

/// Defaults read from `--config`. Every key is optional; an explicit flag
/// always wins.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub rows: Option<usize>,
    pub noise: Option<f64>,
    pub preset: Option<String>,
    pub i: Option<usize>,
    pub bits: Option<usize>,
    pub n_max: Option<i64>,
    pub max_len: Option<usize>,
    pub k: Option<usize>,
    pub kmax: Option<usize>,
    pub tau: Option<f64>,
    pub epsilon: Option<f64>,
    pub seeds_per_k: Option<usize>,
    pub secret_widths: Option<Vec<usize>>,
    pub public_widths: Option<Vec<usize>>,
    pub joint_widths: Option<Vec<usize>>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub test_fraction: Option<f64>,
    pub cap: Option<u64>,
    pub budget: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>, code: u8) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(code, format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::new(code, format!("bad config {}: {e}", path.display())))
    }
}
