use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::OtError;

/// Propensities are clamped to `[PROPENSITY_FLOOR, 1 - PROPENSITY_FLOOR]`
/// before weighting.
pub const PROPENSITY_FLOOR: f64 = 1e-3;

/// Tilting function `a(e)` in `α ∝ a(e) / (w e + (1 - w)(1 - e))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// `a = 1`
    Iptw,
    /// `a = min(e, 1 - e)`
    Matching,
    /// `a = e (1 - e)`
    #[default]
    Overlap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancingWeights {
    pub alpha: Vec<f64>,
    pub scheme: WeightScheme,
    pub normalized: bool,
}

pub fn clamp_propensity(e: f64) -> f64 {
    e.clamp(PROPENSITY_FLOOR, 1.0 - PROPENSITY_FLOOR)
}

pub fn tilting(scheme: WeightScheme, e: f64) -> f64 {
    match scheme {
        WeightScheme::Iptw => 1.0,
        WeightScheme::Matching => e.min(1.0 - e),
        WeightScheme::Overlap => e * (1.0 - e),
    }
}

/// Unnormalised weight of a unit with propensity `e` and treatment `w`.
pub fn raw_weight(scheme: WeightScheme, e: f64, w: f64) -> f64 {
    tilting(scheme, e) / (w * e + (1.0 - w) * (1.0 - e))
}

/// Weights for one time step. When `normalize` is set, the treated and the
/// control weights are each rescaled to mean 1.
pub fn balancing_weights(e: &[f64], w: &[f64], scheme: WeightScheme, normalize: bool) -> Result<BalancingWeights, OtError> {
    if e.len() != w.len() {
        return Err(OtError::LengthMismatch(e.len(), w.len()));
    }
    let mut alpha = Vec::with_capacity(e.len());
    for (&ei, &wi) in e.iter().zip(w) {
        if !(ei > 0.0 && ei < 1.0) {
            return Err(OtError::PropensityOutOfRange(ei));
        }
        if wi != 0.0 && wi != 1.0 {
            return Err(OtError::NonBinaryTreatment(wi));
        }
        alpha.push(raw_weight(scheme, ei, wi));
    }
    if normalize {
        for arm in [0.0, 1.0] {
            let (sum, count) = alpha
                .iter()
                .zip(w)
                .filter(|(_, &wi)| wi == arm)
                .fold((0.0, 0usize), |(s, c), (a, _)| (s + a, c + 1));
            if count > 0 {
                let scale = count as f64 / sum;
                alpha.iter_mut().zip(w).filter(|(_, &wi)| wi == arm).for_each(|(a, _)| *a *= scale);
            }
        }
    }
    Ok(BalancingWeights { alpha, scheme, normalized: normalize })
}

/// Normalised weights for a `[units, steps]` panel of propensities; each
/// `(step, arm)` group gets mean 1. Propensities are clamped first.
pub fn normalize_panel_weights(e: ArrayView2<f64>, w: ArrayView2<f64>, scheme: WeightScheme) -> Array2<f64> {
    let mut alpha = Array2::zeros(e.raw_dim());
    for t in 0..e.ncols() {
        let et: Vec<f64> = e.column(t).iter().map(|&v| clamp_propensity(v)).collect();
        let wt: Vec<f64> = w.column(t).to_vec();
        let bw = balancing_weights(&et, &wt, scheme, true).expect("clamped propensities and binary treatments");
        alpha.column_mut(t).iter_mut().zip(bw.alpha).for_each(|(d, s)| *d = s);
    }
    alpha
}
