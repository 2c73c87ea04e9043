use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::cdvae::{backward, forward, sample_noise, CdvaeConfig, CdvaeModel, LossBreakdown};
use crate::nn::Params;
use crate::panel::Batch;
use crate::rng::{substream, Purpose};
use crate::synth::{generate_dataset, SynthConfig};

/// A deliberately tiny model and panel on which every parameter can be
/// perturbed individually.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub units: usize,
    pub steps: usize,
    pub d_x: usize,
    pub hidden: usize,
    pub phi_dim: usize,
    pub z_dim: usize,
    pub beta: f64,
    /// Relative finite-difference step: `h = step * max(|θ|, 1)`.
    pub step: f64,
    pub tolerance: f64,
    pub lambda_w: f64,
    pub lambda_ipm: f64,
    pub lambda_mm: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            units: 5,
            steps: 4,
            d_x: 3,
            hidden: 3,
            phi_dim: 3,
            z_dim: 2,
            beta: 0.37,
            step: 1e-5,
            tolerance: 1e-3,
            lambda_w: 0.65,
            lambda_ipm: 0.45,
            lambda_mm: 3.75,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorReport {
    pub name: String,
    pub numel: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tensors: Vec<TensorReport>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Loss terms at the unperturbed parameters.
    pub breakdown: LossBreakdown,
    /// Seed of the panel actually used (the first one, counting up from the
    /// configured seed, whose every step has both arms).
    pub data_seed: u64,
}

/// `|a - n| / max(|a|, |n|, 1e-6)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the analytic gradient of the total loss with central finite
/// differences, one parameter at a time. Balancing weights, transport
/// plans and the latent noise are held fixed at their unperturbed values.
pub fn check_gradients(gc: &GradcheckConfig) -> Result<GradcheckReport, TrainError> {
    let mut data_seed = gc.seed;
    let data = loop {
        let scfg = SynthConfig {
            n: gc.units,
            steps: gc.steps,
            d_x: gc.d_x,
            d_u: gc.d_x,
            p: 2,
            seed: data_seed,
            ..SynthConfig::default()
        };
        let d = generate_dataset(&scfg).map_err(|e| TrainError::Config(e.to_string()))?;
        let both_arms = (0..gc.steps).all(|t| {
            let col = d.w.column(t);
            col.iter().any(|&w| w == 1.0) && col.iter().any(|&w| w == 0.0)
        });
        if both_arms {
            break d;
        }
        data_seed += 1;
        if data_seed > gc.seed + 1000 {
            return Err(TrainError::Config("no panel with both arms at every step".into()));
        }
    };
    let cfg = CdvaeConfig {
        d_x: gc.d_x,
        lstm_hidden: gc.hidden,
        phi_dim: gc.phi_dim,
        z_dim: gc.z_dim,
        lambda_w: gc.lambda_w,
        lambda_ipm: gc.lambda_ipm,
        lambda_mm: gc.lambda_mm,
        standardize: false,
        seed: gc.seed,
        ..CdvaeConfig::default()
    };
    let mut model = CdvaeModel::new(cfg.clone())?;
    let units: Vec<usize> = (0..gc.units).collect();
    let batch = Batch::gather(&data, &units);
    let noise = sample_noise(&mut substream(gc.seed, Purpose::Probe, 0), gc.units, gc.z_dim);

    let base = forward(&cfg, &model.params, &batch, noise.view(), gc.beta, None)?;
    let analytic = backward(&cfg, &model.params, &batch, &base).flatten();
    let frozen = base.frozen.clone();
    let theta = model.params.flatten();

    let mut names = Vec::new();
    model.params.visit("", &mut |name, s, _| names.push((name.to_string(), s.len())));
    let mut tensors = Vec::with_capacity(names.len());
    let mut pos = 0;
    let mut probe = theta.clone();
    for (name, numel) in names {
        let mut worst: f64 = 0.0;
        for k in pos..pos + numel {
            let h = gc.step * theta[k].abs().max(1.0);
            probe[k] = theta[k] + h;
            model.params.assign(&probe);
            let fp = forward(&cfg, &model.params, &batch, noise.view(), gc.beta, Some(&frozen))?.breakdown.total;
            probe[k] = theta[k] - h;
            model.params.assign(&probe);
            let fm = forward(&cfg, &model.params, &batch, noise.view(), gc.beta, Some(&frozen))?.breakdown.total;
            probe[k] = theta[k];
            worst = worst.max(relative_error(analytic[k], (fp - fm) / (2.0 * h)));
        }
        pos += numel;
        tensors.push(TensorReport { name, numel, max_rel_error: worst });
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        tensors,
        max_rel_error,
        tolerance: gc.tolerance,
        passed: max_rel_error < gc.tolerance,
        breakdown: base.breakdown,
        data_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(relative_error(0.0, 1e-9), 1e-3);
    }

    #[test]
    fn tiny_config_passes() {
        let r = check_gradients(&GradcheckConfig::default()).unwrap();
        for t in &r.tensors {
            eprintln!("{:32} {:>4} {:.3e}", t.name, t.numel, t.max_rel_error);
        }
        eprintln!("{:?}", r.breakdown);
        assert!(r.passed, "max relative error {}", r.max_rel_error);
        assert!(r.breakdown.kl > 0.0 && r.breakdown.ipm > 0.0 && r.breakdown.mm > 0.0 && r.breakdown.bce > 0.0);
    }
}
