//! Versioned JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AftModel, TreeNode};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: AftModel,
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

/// Structural checks beyond what deserialization enforces.
fn validate(model: &AftModel) -> Result<()> {
    let p = model.feature_names.len();
    if model.transform.names != model.feature_names || model.transform.tables.len() != p {
        return Err(schema("quantile tables do not match the feature list"));
    }
    if !(model.sigma > 0.0) || !model.base_score.is_finite() || !(model.learning_rate > 0.0 && model.learning_rate <= 1.0) {
        return Err(schema("invalid sigma, base score or learning rate"));
    }
    for table in model.transform.tables.iter().flatten() {
        if table.len() < 2 || table.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(schema("quantile table must be sorted with at least two values"));
        }
    }
    for (k, tree) in model.trees.iter().enumerate() {
        let n = tree.nodes.len();
        if n == 0 {
            return Err(schema(format!("tree {k} is empty")));
        }
        // children point forward, so the node graph is acyclic and every
        // index is reachable from at most one parent
        let mut parents = vec![0u32; n];
        for (i, node) in tree.nodes.iter().enumerate() {
            match *node {
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    if feature >= p || !threshold.is_finite() || left <= i || right <= i || left >= n || right >= n || left == right {
                        return Err(schema(format!("tree {k} node {i} is malformed")));
                    }
                    parents[left] += 1;
                    parents[right] += 1;
                }
                TreeNode::Leaf { weight, .. } => {
                    if !weight.is_finite() {
                        return Err(schema(format!("tree {k} leaf {i} is not finite")));
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&c| c != 1) {
            return Err(schema(format!("tree {k} is not a binary tree")));
        }
    }
    Ok(())
}

pub fn model_to_json(model: &AftModel) -> Result<String> {
    let file = ModelFile { format_version: FORMAT_VERSION, model: model.clone() };
    serde_json::to_string_pretty(&file).map_err(|e| schema(e.to_string()))
}

pub fn model_from_json(text: &str) -> Result<AftModel> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| schema(format!("not JSON: {e}")))?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(schema(format!("unsupported format version {v}"))),
        None => return Err(schema("missing format_version")),
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| schema(e.to_string()))?;
    validate(&file.model)?;
    Ok(file.model)
}

pub fn save_model(model: &AftModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model)?).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<AftModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    model_from_json(&text)
}
