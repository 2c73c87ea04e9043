//! Counterfactual regression for longitudinal observational panels.
//!
//! The crate is organised around a single data model ([`panel::PanelDataset`])
//! and the pieces that produce or consume it:
//!
//! * [`synth`] and [`tumor`] simulate panels with known potential outcomes.
//! * [`weighting`] computes propensity-based balancing weights and the
//!   entropic Wasserstein discrepancy between treated and control groups.
//! * [`cdvae`] is the causal dynamic variational autoencoder: two LSTM
//!   encoders, a shared history representation, two outcome heads and a
//!   propensity head, with every loss term and its analytic gradient.
//! * [`train`] runs the optimisation loop and the finite-difference
//!   gradient check.
//! * [`metrics`] scores ITE estimates and compares model variants across
//!   seeds.
//! * [`cli`] binds everything into the `longicause` command-line tool.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cdvae;
pub mod cli;
pub mod metrics;
pub mod nn;
pub mod panel;
pub mod rng;
pub mod synth;
pub mod train;
pub mod tumor;
pub mod weighting;

pub use cdvae::{CdvaeConfig, CdvaeModel, CdvaeParams, WeightScheme};
pub use metrics::{compute_metrics, paired_tests, MetricsReport};
pub use panel::{load_dataset, make_batches, save_dataset, split_dataset, Batch, DataSplit, PanelDataset};
pub use synth::{generate_dataset, SynthConfig};
pub use train::{train_model, TrainConfig, TrainLog};
pub use tumor::{generate_cohort, TumorConfig};
