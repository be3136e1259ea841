use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::TriBranchNetwork;
use super::train::Metrics;
use super::NetworkError;

pub const MODEL_FORMAT: &str = "timeleak-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    #[serde(flatten)]
    net: TriBranchNetwork,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metrics: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest_hash: Option<String>,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<u32>,
}

/// Serialized model plus optional metrics and producer hash.
pub fn to_json(
    net: &TriBranchNetwork,
    metrics: Option<Metrics>,
    manifest_hash: Option<String>,
) -> String {
    let env = Envelope {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        net: net.clone(),
        metrics,
        manifest_hash,
    };
    serde_json::to_string_pretty(&env).expect("model serializes")
}

pub fn from_json(text: &str) -> Result<(TriBranchNetwork, Option<Metrics>), NetworkError> {
    let header: Header =
        serde_json::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
    let found = format!(
        "{}/{}",
        header.format.as_deref().unwrap_or("?"),
        header.version.map_or("?".to_string(), |v| v.to_string())
    );
    if header.format.as_deref() != Some(MODEL_FORMAT) || header.version != Some(MODEL_VERSION) {
        return Err(NetworkError::SchemaVersionMismatch {
            found,
            expected: format!("{MODEL_FORMAT}/{MODEL_VERSION}"),
        });
    }
    let env: Envelope = serde_json::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
    check_shapes(&env.net)?;
    Ok((env.net, env.metrics))
}

fn check_shapes(net: &TriBranchNetwork) -> Result<(), NetworkError> {
    net.architecture.validate()?;
    let rebuilt = TriBranchNetwork::zeros(&net.architecture, net.schema.clone())?;
    let want: Vec<(usize, usize)> = rebuilt.params.layers().iter().map(|d| (d.inputs, d.outputs)).collect();
    let got: Vec<(usize, usize)> = net.params.layers().iter().map(|d| (d.inputs, d.outputs)).collect();
    let consistent = net
        .params
        .layers()
        .iter()
        .all(|d| d.weights.len() == d.inputs * d.outputs && d.bias.len() == d.outputs);
    if want != got || !consistent {
        return Err(NetworkError::Parse(format!(
            "layer shapes {got:?} do not match the architecture {want:?}"
        )));
    }
    if net.normalizer.public.len() != net.architecture.m || net.normalizer.secret.len() != net.architecture.n {
        return Err(NetworkError::Parse("normalizer does not match the architecture".into()));
    }
    Ok(())
}

pub fn save(net: &TriBranchNetwork, path: impl AsRef<Path>) -> Result<(), NetworkError> {
    std::fs::write(path, to_json(net, None, None))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<TriBranchNetwork, NetworkError> {
    from_json(&std::fs::read_to_string(path)?).map(|(n, _)| n)
}
