//! The causal dynamic variational autoencoder.
//!
//! An inference LSTM summarises a unit's whole trajectory into a Gaussian
//! posterior over a static latent `z`. A second LSTM encodes the observed
//! history up to `t - 1`; together with the current covariates it yields the
//! representation `Φ_t`, which feeds two outcome heads (one per arm, both
//! also reading `z`) and a propensity head. Training minimises a weighted
//! Gaussian reconstruction loss plus KL, IPM, moment-matching and propensity
//! terms; every gradient is computed analytically.

mod checkpoint;
mod config;
mod model;
mod schedule;
mod standardize;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{AnnealingConfig, CdvaeConfig};
pub use model::{
    backward, decode_potential_outcomes, encode_posterior, forward, kl_to_standard_normal, moment_matching_penalty,
    predict, propensity_score, represent_history, sample_latent, sample_noise, weighted_reconstruction_loss,
    CdvaeParams, Encoder, ForwardState, Frozen, LossBreakdown, PosteriorStats, Prediction, StepOt, VAR_FLOOR,
};
pub use schedule::beta_at_iteration;
pub use standardize::Standardizer;

pub use crate::weighting::WeightScheme;

use std::path::PathBuf;

use ndarray::Array2;
use thiserror::Error;

use crate::nn::Params;
use crate::panel::{Batch, PanelDataset};
use crate::weighting::OtError;

#[derive(Debug, Error)]
pub enum CdvaeError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

/// Parameters together with the configuration and input scaling they were
/// trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct CdvaeModel {
    pub config: CdvaeConfig,
    pub params: CdvaeParams,
    pub standardizer: Option<Standardizer>,
}

impl CdvaeModel {
    /// Freshly initialised model; weights are drawn from the config seed.
    pub fn new(config: CdvaeConfig) -> Result<Self, CdvaeError> {
        config.validate()?;
        let params = CdvaeParams::init(&config);
        Ok(CdvaeModel { config, params, standardizer: None })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// Applies the stored scaling (identity when there is none).
    pub fn prepare(&self, batch: &Batch) -> Batch {
        match &self.standardizer {
            Some(s) => s.apply(batch),
            None => batch.clone(),
        }
    }

    /// Predictions in the original outcome units, using the posterior mean.
    pub fn predict(&self, batch: &Batch) -> Result<Prediction, CdvaeError> {
        let mut pred = predict(&self.config, &self.params, &self.prepare(batch))?;
        if let Some(s) = &self.standardizer {
            s.restore(&mut pred);
        }
        Ok(pred)
    }

    pub fn predict_ite(&self, batch: &Batch) -> Result<Array2<f64>, CdvaeError> {
        Ok(self.predict(batch)?.tau)
    }

    /// Predictions for every unit of `d` listed in `idx`, evaluated in
    /// chunks to bound memory.
    pub fn predict_dataset(&self, d: &PanelDataset, idx: &[usize]) -> Result<Prediction, CdvaeError> {
        let steps = d.steps();
        let mut out = Prediction::zeros(idx.len(), steps);
        for (c, chunk) in idx.chunks(512).enumerate() {
            let p = self.predict(&Batch::gather(d, chunk))?;
            let start = c * 512;
            out.assign_rows(start, &p);
        }
        Ok(out)
    }
}
