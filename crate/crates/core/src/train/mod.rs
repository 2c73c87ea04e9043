//! Optimisation loop, validation and the finite-difference gradient check.

mod gradcheck;
mod optim;

pub use gradcheck::{check_gradients, GradcheckConfig, GradcheckReport, TensorReport};
pub use optim::{clip_global_norm, AdamW};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdvae::{
    backward, beta_at_iteration, forward, sample_noise, CdvaeConfig, CdvaeError, CdvaeModel, LossBreakdown, Standardizer,
};
use crate::nn::Params;
use crate::panel::{make_batches, Batch, DataSplit, PanelDataset, PanelError};
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwaConfig {
    pub enabled: bool,
    pub lr: f64,
    pub anneal_epochs: usize,
    /// First epoch whose end-of-epoch weights enter the average; defaults
    /// to `max_epochs / 2 + 1`.
    pub start_epoch: Option<usize>,
}

impl Default for SwaConfig {
    fn default() -> Self {
        SwaConfig { enabled: false, lr: 1e-2, anneal_epochs: 3, start_epoch: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub learning_rate: f64,
    pub swa: SwaConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_epochs: 100,
            patience: 4,
            weight_decay: 1e-4,
            clip_norm: 0.5,
            learning_rate: 3e-4,
            swa: SwaConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning_rate and clip_norm must be positive, weight_decay non-negative");
        }
        if self.swa.enabled && !(self.swa.lr > 0.0) {
            return bad("swa.lr must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch-size weighted mean over the epoch's training batches.
    pub train: LossBreakdown,
    pub val: LossBreakdown,
    pub learning_rate: f64,
    pub mean_grad_norm: f64,
    pub ipm_unconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (by validation `recon_sq`).
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub n_iter: usize,
    pub final_beta: f64,
    /// Number of epoch snapshots averaged; 0 when SWA was off or never began.
    pub swa_epochs: usize,
    pub wall_time_secs: f64,
}

impl TrainLog {
    /// Validation weighted reconstruction error per epoch.
    pub fn val_criterion(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val.recon_sq).collect()
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] PanelError),
    #[error(transparent)]
    Model(#[from] CdvaeError),
    #[error("training diverged at epoch {epoch}, iteration {iteration}: {source}")]
    NonFinite {
        epoch: usize,
        iteration: usize,
        source: CdvaeError,
        /// Parameters before the failing update.
        last_good: Box<CdvaeModel>,
    },
}

/// Result of [`evaluate_epoch`]: unit-weighted means over the evaluated
/// units. `criterion` is the weighted reconstruction error (`recon_sq`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub breakdown: LossBreakdown,
    pub criterion: f64,
    pub units: usize,
}

const EVAL_CHUNK: usize = 128;

/// Loss terms of `model` on the units `idx`, evaluated in chunks of 128 in
/// index order with `z` fixed at the posterior mean. Pure and deterministic.
pub fn evaluate_epoch(model: &CdvaeModel, d: &PanelDataset, idx: &[usize], beta: f64) -> Result<EvalReport, TrainError> {
    if idx.is_empty() {
        return Err(TrainError::Data(PanelError::EmptyIndex));
    }
    let mut acc = LossBreakdown::default();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let batch = model.prepare(&Batch::gather(d, chunk));
        let noise = ndarray::Array2::zeros((chunk.len(), model.config.z_dim));
        let st = forward(&model.config, &model.params, &batch, noise.view(), beta, None)?;
        accumulate(&mut acc, &st.breakdown, chunk.len() as f64);
    }
    let breakdown = scaled(acc, 1.0 / idx.len() as f64, beta);
    Ok(EvalReport { breakdown, criterion: breakdown.recon_sq, units: idx.len() })
}

fn accumulate(acc: &mut LossBreakdown, b: &LossBreakdown, w: f64) {
    acc.total += w * b.total;
    acc.recon += w * b.recon;
    acc.recon_sq += w * b.recon_sq;
    acc.kl += w * b.kl;
    acc.ipm += w * b.ipm;
    acc.mm += w * b.mm;
    acc.bce += w * b.bce;
    acc.beta += w * b.beta;
}

fn scaled(b: LossBreakdown, s: f64, beta: f64) -> LossBreakdown {
    LossBreakdown {
        total: b.total * s,
        recon: b.recon * s,
        recon_sq: b.recon_sq * s,
        kl: b.kl * s,
        ipm: b.ipm * s,
        mm: b.mm * s,
        bce: b.bce * s,
        beta,
    }
}

/// Trains a fresh model on `split.train_idx`, validating on
/// `split.val_idx` after every epoch.
///
/// Early stopping watches the validation total loss (with β = 1); the
/// returned parameters are those with the lowest validation weighted
/// reconstruction error, or the SWA average when SWA ran.
pub fn train_model(
    model_cfg: &CdvaeConfig,
    train_cfg: &TrainConfig,
    d: &PanelDataset,
    split: &DataSplit,
) -> Result<(CdvaeModel, TrainLog), TrainError> {
    let started = Instant::now();
    train_cfg.validate()?;
    let mut cfg = model_cfg.clone();
    if cfg.d_x == 0 {
        cfg.d_x = d.d_x();
    }
    if cfg.d_x != d.d_x() {
        return Err(TrainError::Config(format!("model d_x {} does not match data d_x {}", cfg.d_x, d.d_x())));
    }
    if split.train_idx.is_empty() || split.val_idx.is_empty() {
        return Err(TrainError::Data(PanelError::EmptyIndex));
    }
    let mut model = CdvaeModel::new(cfg)?;
    if model.config.standardize {
        model.standardizer = Some(Standardizer::fit(d, &split.train_idx));
    }
    let cfg = model.config.clone();

    let per_epoch = split.train_idx.len().div_ceil(train_cfg.batch_size);
    let n_iter = per_epoch * train_cfg.max_epochs;
    let mut theta = model.params.flatten();
    let mut opt = AdamW::new(theta.len(), train_cfg.learning_rate, train_cfg.weight_decay);
    let swa_start = train_cfg.swa.start_epoch.unwrap_or(train_cfg.max_epochs / 2 + 1);
    let mut swa_sum: Option<Vec<f64>> = None;
    let mut swa_epochs = 0;

    let mut epochs = Vec::new();
    let mut best_total = f64::INFINITY;
    let mut since_best = 0;
    let mut best_criterion = f64::INFINITY;
    let mut best_params = theta.clone();
    let mut best_epoch = 0;
    let mut iteration = 0;
    let mut beta = 0.0;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=train_cfg.max_epochs {
        let lr = if train_cfg.swa.enabled && epoch >= swa_start {
            let k = (epoch - swa_start + 1) as f64 / train_cfg.swa.anneal_epochs.max(1) as f64;
            let k = k.min(1.0);
            train_cfg.learning_rate + k * (train_cfg.swa.lr - train_cfg.learning_rate)
        } else {
            train_cfg.learning_rate
        };
        opt.lr = lr;
        let mut acc = LossBreakdown::default();
        let mut grad_norm_sum = 0.0;
        let mut unconverged = 0;
        let batches = make_batches(d, &split.train_idx, train_cfg.batch_size, train_cfg.seed, epoch as u64)?;
        let n_batches = batches.len();
        for raw in batches {
            iteration += 1;
            beta = if cfg.annealing.cyclic {
                beta_at_iteration(iteration, n_iter, cfg.annealing.cycles, cfg.annealing.ratio)
            } else {
                1.0
            };
            let batch = model.prepare(&raw);
            let noise = sample_noise(&mut substream(train_cfg.seed, Purpose::Latent, iteration as u64), batch.len(), cfg.z_dim);
            let fail = |source: CdvaeError, model: &CdvaeModel| TrainError::NonFinite {
                epoch,
                iteration,
                source,
                last_good: Box::new(model.clone()),
            };
            let st = match forward(&cfg, &model.params, &batch, noise.view(), beta, None) {
                Ok(st) => st,
                Err(e @ CdvaeError::NonFinite(_)) => return Err(fail(e, &model)),
                Err(e) => return Err(e.into()),
            };
            let mut g = backward(&cfg, &model.params, &batch, &st).flatten();
            if g.iter().any(|v| !v.is_finite()) {
                return Err(fail(CdvaeError::NonFinite("gradient"), &model));
            }
            grad_norm_sum += clip_global_norm(&mut g, train_cfg.clip_norm);
            opt.step(&mut theta, &g);
            model.params.assign(&theta);
            accumulate(&mut acc, &st.breakdown, batch.len() as f64);
            unconverged += st.ipm_unconverged;
        }
        let train = scaled(acc, 1.0 / split.train_idx.len() as f64, beta);
        let val = evaluate_epoch(&model, d, &split.val_idx, 1.0)?.breakdown;
        epochs.push(EpochRecord {
            epoch,
            train,
            val,
            learning_rate: lr,
            mean_grad_norm: grad_norm_sum / n_batches as f64,
            ipm_unconverged: unconverged,
        });

        if train_cfg.swa.enabled && epoch >= swa_start {
            let sum = swa_sum.get_or_insert_with(|| vec![0.0; theta.len()]);
            sum.iter_mut().zip(&theta).for_each(|(s, t)| *s += t);
            swa_epochs += 1;
        }
        if val.recon_sq < best_criterion {
            best_criterion = val.recon_sq;
            best_params.clone_from(&theta);
            best_epoch = epoch;
        }
        if val.total < best_total {
            best_total = val.total;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= train_cfg.patience {
                stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }

    match swa_sum {
        Some(sum) => {
            let avg: Vec<f64> = sum.iter().map(|s| s / swa_epochs as f64).collect();
            model.params.assign(&avg);
        }
        None => model.params.assign(&best_params),
    }
    let log = TrainLog {
        epochs,
        best_epoch,
        stop_reason,
        iterations: iteration,
        n_iter,
        final_beta: beta,
        swa_epochs,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, log))
}
