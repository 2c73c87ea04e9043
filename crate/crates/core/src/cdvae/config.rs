use serde::{Deserialize, Serialize};

use super::CdvaeError;
use crate::nn::LEAKY_SLOPE;
use crate::weighting::{OtSettings, WeightScheme};

/// Cyclical KL annealing. With `cyclic = false` the KL weight is held at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealingConfig {
    /// Number of cycles `M` over the whole run.
    pub cycles: usize,
    /// Fraction `R` of each cycle spent ramping β from 0 to 1.
    pub ratio: f64,
    pub cyclic: bool,
}

impl Default for AnnealingConfig {
    fn default() -> Self {
        AnnealingConfig { cycles: 6, ratio: 0.5, cyclic: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdvaeConfig {
    /// Covariate width. 0 means "take it from the data" wherever a dataset
    /// is at hand; a model cannot be built with 0.
    pub d_x: usize,
    pub lstm_hidden: usize,
    pub phi_dim: usize,
    /// Latent width; 0 removes the inference network (and with it the KL
    /// and moment-matching terms).
    pub z_dim: usize,
    pub lstm_layers: usize,
    pub leaky_slope: f64,
    pub sigma_y: f64,
    pub lambda_w: f64,
    pub lambda_ipm: f64,
    pub lambda_mm: f64,
    pub weight_scheme: WeightScheme,
    pub annealing: AnnealingConfig,
    pub ot: OtSettings,
    /// Rescale covariates and outcomes to zero mean and unit variance using
    /// the training split.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for CdvaeConfig {
    fn default() -> Self {
        CdvaeConfig {
            d_x: 0,
            lstm_hidden: 32,
            phi_dim: 36,
            z_dim: 22,
            lstm_layers: 1,
            leaky_slope: LEAKY_SLOPE,
            sigma_y: 0.1,
            lambda_w: 0.65,
            lambda_ipm: 0.45,
            lambda_mm: 3.75,
            weight_scheme: WeightScheme::Overlap,
            annealing: AnnealingConfig::default(),
            ot: OtSettings::default(),
            standardize: true,
            seed: 0,
        }
    }
}

impl CdvaeConfig {
    pub fn validate(&self) -> Result<(), CdvaeError> {
        let bad = |m: &str| Err(CdvaeError::Config(m.to_string()));
        if self.d_x == 0 {
            return bad("d_x must be at least 1");
        }
        if self.lstm_hidden == 0 || self.phi_dim == 0 || self.lstm_layers == 0 {
            return bad("lstm_hidden, phi_dim and lstm_layers must be at least 1");
        }
        if !(self.sigma_y > 0.0) || !self.sigma_y.is_finite() {
            return bad("sigma_y must be positive");
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky_slope must be finite");
        }
        for (name, v) in [("lambda_w", self.lambda_w), ("lambda_ipm", self.lambda_ipm), ("lambda_mm", self.lambda_mm)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(CdvaeError::Config(format!("{name} must be a non-negative number")));
            }
        }
        if self.annealing.cycles == 0 {
            return bad("annealing.cycles must be at least 1");
        }
        if !(self.annealing.ratio > 0.0 && self.annealing.ratio <= 1.0) {
            return bad("annealing.ratio must lie in (0, 1]");
        }
        if !(self.ot.lambda > 0.0) || !(self.ot.tol > 0.0) || self.ot.max_iter == 0 {
            return bad("ot.lambda and ot.tol must be positive and ot.max_iter at least 1");
        }
        Ok(())
    }
}
