//! Shannon leakage of a class census under a uniform prior on secrets.
//!
//! With capped class sizes `B_1..B_K` and `B = sum B_i`, the initial entropy is
//! `log2 B`, the remaining entropy `(1/B) sum B_i log2 B_i`, and the leak their
//! difference.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::counter::{feasible_classes, ClassCensus, CounterError};

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("census has no feasible class")]
    EmptyCensus,
    #[error("census is incomplete; entropy would be unsound")]
    IncompleteCensus,
    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),
}

impl From<CounterError> for QuantError {
    fn from(_: CounterError) -> Self {
        QuantError::IncompleteCensus
    }
}

fn sizes(census: &ClassCensus) -> Result<Vec<u64>, QuantError> {
    let sizes: Vec<u64> = feasible_classes(census)?.into_iter().map(|(_, c)| c).collect();
    if sizes.is_empty() {
        return Err(QuantError::EmptyCensus);
    }
    Ok(sizes)
}

fn total(sizes: &[u64]) -> f64 {
    sizes.iter().map(|&b| b as f64).sum()
}

pub fn initial_entropy_of_sizes(sizes: &[u64]) -> f64 {
    total(sizes).log2()
}

pub fn remaining_entropy_of_sizes(sizes: &[u64]) -> f64 {
    let b = total(sizes);
    sizes
        .iter()
        .filter(|&&s| s > 1)
        .map(|&s| {
            let s = s as f64;
            s * s.log2()
        })
        .sum::<f64>()
        / b
}

/// Computed as `sum (B_i/B) log2(B/B_i)`, which is exactly 0 for one class.
pub fn shannon_leak_of_sizes(sizes: &[u64]) -> f64 {
    let b = total(sizes);
    sizes
        .iter()
        .map(|&s| {
            let p = s as f64 / b;
            p * (b / s as f64).log2()
        })
        .sum::<f64>()
        .max(0.0)
}

pub fn initial_entropy(census: &ClassCensus) -> Result<f64, QuantError> {
    Ok(initial_entropy_of_sizes(&sizes(census)?))
}

pub fn remaining_entropy(census: &ClassCensus) -> Result<f64, QuantError> {
    Ok(remaining_entropy_of_sizes(&sizes(census)?))
}

pub fn shannon_leak(census: &ClassCensus) -> Result<f64, QuantError> {
    Ok(shannon_leak_of_sizes(&sizes(census)?))
}

/// What the report needs to know about the sweep that chose the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub chosen_k: usize,
    pub k_max: usize,
    pub tau: f64,
    pub verdict: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_hash: Option<String>,
    pub census_hash: String,
    pub sweep: Option<SweepSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
}

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakReport {
    pub version: u32,
    pub k: usize,
    /// Number of feasible classes.
    #[serde(rename = "K")]
    pub classes: usize,
    pub cap: Option<u64>,
    /// Sum of capped class sizes.
    #[serde(rename = "B")]
    pub total: u64,
    pub se_i: f64,
    pub se_o: f64,
    pub se_l: f64,
    pub class_sizes: Vec<ClassSize>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSize {
    pub valuation: String,
    pub size: u64,
    pub capped: bool,
}

/// Hex SHA-256 of the census JSON.
pub fn census_hash(census: &ClassCensus) -> String {
    hex::encode(Sha256::digest(census.to_json().as_bytes()))
}

pub fn build_report(
    census: &ClassCensus,
    sweep: Option<&SweepSummary>,
    model_hash: Option<&str>,
) -> Result<LeakReport, QuantError> {
    if let Some(s) = sweep {
        if s.chosen_k != census.k {
            return Err(QuantError::InconsistentInputs(format!(
                "census has k = {}, sweep chose k = {}",
                census.k, s.chosen_k
            )));
        }
    }
    if let (Some(a), Some(b)) = (model_hash, census.model_hash.as_deref()) {
        if a != b {
            return Err(QuantError::InconsistentInputs(format!(
                "census was computed from model {b}, not {a}"
            )));
        }
    }
    let feasible = feasible_classes(census)?;
    if feasible.is_empty() {
        return Err(QuantError::EmptyCensus);
    }
    let sizes: Vec<u64> = feasible.iter().map(|(_, c)| *c).collect();
    let se_i = initial_entropy_of_sizes(&sizes);
    let se_o = remaining_entropy_of_sizes(&sizes);
    let class_sizes = feasible
        .into_iter()
        .map(|(valuation, size)| ClassSize {
            valuation,
            size,
            capped: census.cap.is_some_and(|c| size >= c),
        })
        .collect();
    Ok(LeakReport {
        version: REPORT_VERSION,
        k: census.k,
        classes: sizes.len(),
        cap: census.cap,
        total: sizes.iter().sum(),
        se_i,
        se_o,
        se_l: shannon_leak_of_sizes(&sizes),
        class_sizes,
        provenance: Provenance {
            model_hash: model_hash.map(str::to_string).or_else(|| census.model_hash.clone()),
            census_hash: census_hash(census),
            sweep: sweep.cloned(),
            manifest_hash: None,
        },
    })
}

impl LeakReport {
    pub fn summary(&self) -> String {
        format!(
            "k={}, K={}, SE_I={:.2}, SE_O={:.2}, leak={:.2} bits",
            self.k, self.classes, self.se_i, self.se_o, self.se_l
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
