//! Checkpoints are a single JSON document:
//!
//! ```text
//! {"format": "longicause-checkpoint", "version": 1,
//!  "config": {...}, "standardizer": {...} | null,
//!  "tensors": [{"name": "history.layer0.wx", "shape": [128, 22], "data": [...]}, ...]}
//! ```
//!
//! Tensors are row-major and listed in parameter-visit order; loading
//! matches them by name and checks shapes.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CdvaeConfig, CdvaeError, CdvaeModel, Standardizer};
use crate::nn::Params;

pub const CHECKPOINT_FORMAT: &str = "longicause-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: u32,
    config: CdvaeConfig,
    standardizer: Option<Standardizer>,
    tensors: Vec<Tensor>,
}

pub fn save_checkpoint(model: &CdvaeModel, path: &Path) -> Result<(), CdvaeError> {
    let mut tensors = Vec::new();
    model.params.visit("", &mut |name, data, shape| {
        tensors.push(Tensor { name: name.to_string(), shape: shape.to_vec(), data: data.to_vec() })
    });
    let doc = Document {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        standardizer: model.standardizer.clone(),
        tensors,
    };
    let text = serde_json::to_string(&doc).map_err(|e| CdvaeError::Checkpoint(e.to_string()))?;
    fs::write(path, text).map_err(|source| CdvaeError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<CdvaeModel, CdvaeError> {
    let text = fs::read_to_string(path).map_err(|source| CdvaeError::Io { path: path.to_path_buf(), source })?;
    let doc: Document = serde_json::from_str(&text).map_err(|e| CdvaeError::Checkpoint(e.to_string()))?;
    if doc.format != CHECKPOINT_FORMAT {
        return Err(CdvaeError::Checkpoint(format!("unknown format {:?}", doc.format)));
    }
    if doc.version != CHECKPOINT_VERSION {
        return Err(CdvaeError::Checkpoint(format!("unsupported version {}", doc.version)));
    }
    let mut model = CdvaeModel::new(doc.config)?;
    model.standardizer = doc.standardizer;
    let mut by_name: HashMap<String, Tensor> = doc.tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
    let mut expected = Vec::new();
    model.params.visit("", &mut |name, _, shape| expected.push((name.to_string(), shape.to_vec())));
    for (name, shape) in &expected {
        let t = by_name.get(name).ok_or_else(|| CdvaeError::Checkpoint(format!("missing tensor {name}")))?;
        if &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
            return Err(CdvaeError::Checkpoint(format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape)));
        }
    }
    let mut err = None;
    model.params.visit_mut("", &mut |name, slot| match by_name.remove(name) {
        Some(t) => slot.copy_from_slice(&t.data),
        None => err = Some(name.to_string()),
    });
    if let Some(name) = err {
        return Err(CdvaeError::Checkpoint(format!("missing tensor {name}")));
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(CdvaeError::Checkpoint(format!("unexpected tensor {extra}")));
    }
    Ok(model)
}
