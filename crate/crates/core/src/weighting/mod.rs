//! Propensity-based balancing weights and the entropic Wasserstein
//! discrepancy between treated and control representations.

mod sinkhorn;
mod wasserstein;
mod weights;

pub use sinkhorn::{sinkhorn_knopp, sinkhorn_knopp_log, TransportPlan};
pub use wasserstein::{
    cost_gradient, cost_matrix, ipm_regularizer, weighted_wasserstein, IpmResult, OtSettings, StepTransport,
    WassersteinResult,
};
pub use weights::{
    balancing_weights, clamp_propensity, normalize_panel_weights, raw_weight, tilting, BalancingWeights, WeightScheme,
    PROPENSITY_FLOOR,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OtError {
    #[error("propensity {0} is outside (0, 1)")]
    PropensityOutOfRange(f64),
    #[error("treatment value {0} is not 0 or 1")]
    NonBinaryTreatment(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("kernel entry ({0}, {1}) = {2} is not strictly positive and finite")]
    Kernel(usize, usize, f64),
    #[error("marginal is not a probability vector: {0}")]
    Marginal(String),
    #[error("empty {0} group")]
    EmptyGroup(&'static str),
}
