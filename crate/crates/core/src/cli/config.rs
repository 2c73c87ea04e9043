use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::cdvae::CdvaeConfig;
use crate::synth::SynthConfig;
use crate::train::{GradcheckConfig, TrainConfig};
use crate::tumor::TumorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Synthetic,
    Tumor,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// JSONL panel to read when `source` is `file`.
    pub path: Option<PathBuf>,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { source: DataSource::Synthetic, path: None, split: [0.7, 0.15, 0.15], split_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CheckpointConfig {
    /// Checkpoint read by `evaluate`.
    pub path: Option<PathBuf>,
}

/// Model variants compared by `ablate` and `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoIpm,
    NoIpmNoMm,
    /// β held at 1 instead of cycling.
    ConstantBeta,
    /// No latent variable (and so no KL or moment-matching term).
    ZAblated,
}

impl Variant {
    pub const ABLATION: [Variant; 4] = [Variant::Full, Variant::NoIpm, Variant::NoIpmNoMm, Variant::ConstantBeta];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoIpm => "no_ipm",
            Variant::NoIpmNoMm => "no_ipm_no_mm",
            Variant::ConstantBeta => "constant_beta",
            Variant::ZAblated => "z_ablated",
        }
    }

    pub fn apply(self, base: &CdvaeConfig) -> CdvaeConfig {
        let mut c = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoIpm => c.lambda_ipm = 0.0,
            Variant::NoIpmNoMm => {
                c.lambda_ipm = 0.0;
                c.lambda_mm = 0.0;
            }
            Variant::ConstantBeta => c.annealing.cyclic = false,
            Variant::ZAblated => {
                c.z_dim = 0;
                c.lambda_mm = 0.0;
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
    pub variants: Vec<Variant>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            gammas: (0..10).map(|k| (2 * k + 1) as f64 / 10.0).collect(),
            variants: vec![Variant::Full, Variant::ZAblated],
        }
    }
}

/// Everything a command may read, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunFile {
    pub synth: SynthConfig,
    pub tumor: TumorConfig,
    pub data: DataConfig,
    pub model: CdvaeConfig,
    pub train: TrainConfig,
    pub checkpoint: CheckpointConfig,
    pub gradcheck: GradcheckConfig,
    pub sweep: SweepConfig,
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Sets `key` (dot-separated) in `doc`. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Validation(format!("malformed override key {key:?}")));
    }
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Validation(format!("override {key:?}: {} is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last key")
}

/// Defaults, overlaid with the config file (if any), then the overrides.
/// Unknown keys anywhere are an error.
pub fn resolve(file: Option<&str>, overrides: &[String]) -> Result<RunFile, CliError> {
    let mut doc = serde_json::to_value(RunFile::default()).expect("defaults serialise");
    if let Some(text) = file {
        let patch: Value = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config file: {e}")))?;
        if !patch.is_object() {
            return Err(CliError::Validation("config file must hold a JSON object".into()));
        }
        merge(&mut doc, patch);
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    serde_json::from_value(doc).map_err(|e| CliError::Validation(format!("config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let rf = resolve(Some(r#"{"synth": {"n": 50}}"#), &["model.z_dim=3".into(), "synth.T=7".into()]).unwrap();
        assert_eq!(rf.synth.n, 50);
        assert_eq!(rf.synth.steps, 7);
        assert_eq!(rf.model.z_dim, 3);
        assert_eq!(rf.synth.d_x, SynthConfig::default().d_x);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(resolve(Some(r#"{"synth": {"nn": 50}}"#), &[]).is_err());
        assert!(resolve(None, &["modle.z_dim=3".into()]).is_err());
        assert!(resolve(None, &["model.zdim=3".into()]).is_err());
        assert!(resolve(None, &["model".into()]).is_err());
    }

    #[test]
    fn string_values_fall_back_to_strings() {
        let rf = resolve(None, &["data.source=tumor".into(), "model.weight_scheme=iptw".into()]).unwrap();
        assert_eq!(rf.data.source, DataSource::Tumor);
        assert_eq!(rf.model.weight_scheme, crate::weighting::WeightScheme::Iptw);
    }

    #[test]
    fn default_sweep_grid() {
        let g = SweepConfig::default().gammas;
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[9], 1.9);
        assert!((g[4] - 0.9).abs() < 1e-15);
    }
}
