//! Discrete-time PK-PD tumour growth with confounded radiotherapy.
//!
//! Volume follows a Gompertz growth term minus a linear-quadratic radiation
//! kill term plus multiplicative noise:
//!
//! ```text
//! V(t) = (1 + Λ log(K / V(t-1)) - (κ_rd Rd(t) + υ Rd(t)²) + e_t) V(t-1)
//! ```
//!
//! Radiotherapy is assigned with probability `σ(γ_r / D_max · (D̄(t) - δ_r))`
//! where `D̄(t)` is the mean tumour diameter over the preceding `window` days.
//! Patients fall into two hidden clusters; cluster 1 has a radiosensitivity
//! prior mean scaled by `cluster_multiplier`.
//!
//! Parameter priors and the noise level are configuration, not ground truth:
//! the defaults are conventional choices for this family of simulators.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{PanelDataset, Provenance};
use crate::rng::{substream, Purpose};

const MIN_VOLUME: f64 = 1e-6;
const MAX_PRIOR_RETRIES: usize = 100;

#[derive(Debug, Error)]
pub enum TumorError {
    #[error("invalid tumour configuration: {0}")]
    Config(String),
    #[error("could not draw a positive `{param}` for patient {patient} in {MAX_PRIOR_RETRIES} tries")]
    NonPositive { param: &'static str, patient: usize },
    #[error("patient {patient}: volume became non-finite on day {day}")]
    NonFinite { patient: usize, day: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorFamily {
    LogNormal,
    /// Normal, resampled until positive.
    Normal,
}

/// A positive prior given by its mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub family: PriorFamily,
    pub mean: f64,
    pub sd: f64,
}

impl PriorSpec {
    fn draw(&self, mean: f64, rng: &mut ChaCha8Rng, param: &'static str, patient: usize) -> Result<f64, TumorError> {
        match self.family {
            PriorFamily::LogNormal => {
                let s2 = (1.0 + (self.sd / mean).powi(2)).ln();
                let dist = LogNormal::new(mean.ln() - s2 / 2.0, s2.sqrt())
                    .map_err(|e| TumorError::Config(format!("{param}: {e}")))?;
                Ok(dist.sample(rng))
            }
            PriorFamily::Normal => {
                let dist = Normal::new(mean, self.sd).map_err(|e| TumorError::Config(format!("{param}: {e}")))?;
                (0..MAX_PRIOR_RETRIES)
                    .map(|_| dist.sample(rng))
                    .find(|&v| v > 0.0)
                    .ok_or(TumorError::NonPositive { param, patient })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TumorConfig {
    pub n_patients: usize,
    #[serde(rename = "T_days")]
    pub days: usize,
    pub gamma_r: f64,
    /// cm
    pub d_max: f64,
    /// cm; `None` means `d_max / 2`.
    pub delta_r: Option<f64>,
    /// Gy per treated day.
    pub dose: f64,
    pub window: usize,
    pub cluster_multiplier: f64,
    /// cm³
    pub v_max: f64,
    pub growth: PriorSpec,
    /// Multiplies draws from `growth`.
    pub growth_scale: f64,
    /// Carrying capacity in cm³; `None` means the volume of a `d_max` sphere.
    pub carrying_capacity: Option<f64>,
    pub kappa_rd: PriorSpec,
    /// `υ = upsilon_ratio · κ_rd`.
    pub upsilon_ratio: f64,
    pub noise_sd: f64,
    /// Initial diameter range in cm, sampled uniformly.
    pub initial_diameter: (f64, f64),
    pub seed: u64,
}

impl Default for TumorConfig {
    fn default() -> Self {
        TumorConfig {
            n_patients: 1000,
            days: 60,
            gamma_r: 5.0,
            d_max: 13.0,
            delta_r: None,
            dose: 2.0,
            window: 15,
            cluster_multiplier: 1.5,
            v_max: 1150.34,
            growth: PriorSpec { family: PriorFamily::LogNormal, mean: 7.0e-5, sd: 3.5e-5 },
            growth_scale: 100.0,
            carrying_capacity: None,
            kappa_rd: PriorSpec { family: PriorFamily::LogNormal, mean: 0.0398, sd: 0.0199 },
            upsilon_ratio: 0.1,
            noise_sd: 0.01,
            initial_diameter: (1.0, 4.0),
            seed: 0,
        }
    }
}

impl TumorConfig {
    pub fn validate(&self) -> Result<(), TumorError> {
        let bad = |m: &str| Err(TumorError::Config(m.to_string()));
        if !(self.d_max > 0.0) {
            return bad("d_max must be positive");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if !(self.dose >= 0.0) {
            return bad("dose must be non-negative");
        }
        if !(self.v_max > 0.0) {
            return bad("v_max must be positive");
        }
        if self.days == 0 {
            return bad("T_days must be at least 1");
        }
        if !(self.noise_sd >= 0.0) || !(self.growth_scale > 0.0) || !(self.cluster_multiplier > 0.0) {
            return bad("noise_sd, growth_scale and cluster_multiplier must be non-negative/positive");
        }
        let (lo, hi) = self.initial_diameter;
        if !(lo > 0.0 && hi > lo) {
            return bad("initial_diameter must be an increasing positive range");
        }
        for (name, p) in [("growth", &self.growth), ("kappa_rd", &self.kappa_rd)] {
            if !(p.mean > 0.0 && p.sd >= 0.0) {
                return Err(TumorError::Config(format!("{name} prior needs positive mean and non-negative sd")));
            }
            if p.family == PriorFamily::LogNormal && p.sd == 0.0 {
                return Err(TumorError::Config(format!("{name}: lognormal prior needs sd > 0")));
            }
        }
        Ok(())
    }

    pub fn delta_r(&self) -> f64 {
        self.delta_r.unwrap_or(self.d_max / 2.0)
    }

    pub fn capacity(&self) -> f64 {
        self.carrying_capacity.unwrap_or_else(|| volume_from_diameter(self.d_max))
    }
}

/// Sphere volume for a diameter.
pub fn volume_from_diameter(d: f64) -> f64 {
    std::f64::consts::PI / 6.0 * d.powi(3)
}

/// Sphere diameter `2 (3V / 4π)^{1/3}`.
pub fn diameter_from_volume(v: f64) -> f64 {
    2.0 * (3.0 * v / (4.0 * std::f64::consts::PI)).cbrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientParams {
    pub lambda_g: f64,
    pub k_cap: f64,
    pub kappa_rd: f64,
    pub upsilon: f64,
    /// Hidden cluster label, 1 or 2.
    pub s: u8,
    pub v0: f64,
}

pub fn sample_patient_params(cfg: &TumorConfig, patient: usize) -> Result<PatientParams, TumorError> {
    let mut rng = substream(cfg.seed, Purpose::PatientParams, patient as u64);
    let s: u8 = if rng.random_bool(0.5) { 1 } else { 2 };
    let lambda_g = cfg.growth_scale * cfg.growth.draw(cfg.growth.mean, &mut rng, "growth", patient)?;
    let kappa_mean = if s == 1 { cfg.cluster_multiplier * cfg.kappa_rd.mean } else { cfg.kappa_rd.mean };
    let kappa_rd = cfg.kappa_rd.draw(kappa_mean, &mut rng, "kappa_rd", patient)?;
    let (lo, hi) = cfg.initial_diameter;
    let v0 = volume_from_diameter(rng.random_range(lo..hi));
    Ok(PatientParams { lambda_g, k_cap: cfg.capacity(), kappa_rd, upsilon: cfg.upsilon_ratio * kappa_rd, s, v0 })
}

/// One patient's daily record. `volume[0]` is the initial volume; every other
/// vector is indexed by day `1..=T`, shifted to start at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientTrajectory {
    pub volume: Vec<f64>,
    pub mean_diameter: Vec<f64>,
    pub w: Vec<f64>,
    pub v1: Vec<f64>,
    pub v0: Vec<f64>,
    pub clip_events: usize,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Treatment logit `γ_r / D_max · (D̄ - δ_r)`.
pub fn assignment_logit(cfg: &TumorConfig, mean_diameter: f64) -> f64 {
    cfg.gamma_r / cfg.d_max * (mean_diameter - cfg.delta_r())
}

/// One step of the volume recursion, before clipping.
pub fn next_volume(params: &PatientParams, v: f64, dose: f64, noise: f64) -> f64 {
    let growth = params.lambda_g * (params.k_cap / v).ln();
    let radiation = params.kappa_rd * dose + params.upsilon * dose * dose;
    (1.0 + growth - radiation + noise) * v
}

pub fn simulate_patient(
    cfg: &TumorConfig,
    params: &PatientParams,
    patient: usize,
) -> Result<PatientTrajectory, TumorError> {
    let mut rng = substream(cfg.seed, Purpose::PatientDynamics, patient as u64);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| TumorError::Config(e.to_string()))?;
    let days = cfg.days;
    let mut volume = Vec::with_capacity(days + 1);
    volume.push(params.v0);
    let mut diameters = vec![diameter_from_volume(params.v0)];
    let mut traj = PatientTrajectory {
        volume: Vec::new(),
        mean_diameter: Vec::with_capacity(days),
        w: Vec::with_capacity(days),
        v1: Vec::with_capacity(days),
        v0: Vec::with_capacity(days),
        clip_events: 0,
    };
    let clip = |v: f64, events: &mut usize| {
        if v > cfg.v_max {
            *events += 1;
            cfg.v_max
        } else if v < MIN_VOLUME {
            *events += 1;
            MIN_VOLUME
        } else {
            v
        }
    };

    for day in 1..=days {
        let span = cfg.window.min(day);
        let d_bar = diameters[day - span..day].iter().sum::<f64>() / span as f64;
        let prob = sigmoid(assignment_logit(cfg, d_bar));
        let treated = rng.random::<f64>() < prob;
        let e_t = noise.sample(&mut rng);

        let prev = volume[day - 1];
        let raw1 = next_volume(params, prev, cfg.dose, e_t);
        let raw0 = next_volume(params, prev, 0.0, e_t);
        if !raw1.is_finite() || !raw0.is_finite() {
            return Err(TumorError::NonFinite { patient, day });
        }
        let v1 = clip(raw1, &mut traj.clip_events);
        let v0 = clip(raw0, &mut traj.clip_events);
        let v = if treated { v1 } else { v0 };

        traj.mean_diameter.push(d_bar);
        traj.w.push(if treated { 1.0 } else { 0.0 });
        traj.v1.push(v1);
        traj.v0.push(v0);
        volume.push(v);
        diameters.push(diameter_from_volume(v));
    }
    traj.volume = volume;
    Ok(traj)
}

/// Simulates the cohort as a panel.
///
/// * `x_t = [V(t-1) / V_max, D̄(t) / D_max]`: what is known before treating on day `t`.
/// * `y_t = V(t) / V_max`, with both one-step potential outcomes.
/// * `u = [Λ, K / V_max, κ_rd, υ]` and the cluster label are stored as ground
///   truth only; they never enter `x`.
pub fn generate_cohort(cfg: &TumorConfig) -> Result<PanelDataset, TumorError> {
    cfg.validate()?;
    let (n, days) = (cfg.n_patients, cfg.days);
    let mut x = Array3::zeros((n, days, 2));
    let mut w = Array2::zeros((n, days));
    let mut y = Array2::zeros((n, days));
    let mut y1 = Array2::zeros((n, days));
    let mut y0 = Array2::zeros((n, days));
    let mut u = Array2::zeros((n, 4));
    let mut cluster = Vec::with_capacity(n);
    let mut clip_events = 0usize;
    for i in 0..n {
        let params = sample_patient_params(cfg, i)?;
        let tr = simulate_patient(cfg, &params, i)?;
        clip_events += tr.clip_events;
        for t in 0..days {
            x[[i, t, 0]] = tr.volume[t] / cfg.v_max;
            x[[i, t, 1]] = tr.mean_diameter[t] / cfg.d_max;
            w[[i, t]] = tr.w[t];
            y1[[i, t]] = tr.v1[t] / cfg.v_max;
            y0[[i, t]] = tr.v0[t] / cfg.v_max;
            y[[i, t]] = if tr.w[t] == 1.0 { y1[[i, t]] } else { y0[[i, t]] };
        }
        u[[i, 0]] = params.lambda_g;
        u[[i, 1]] = params.k_cap / cfg.v_max;
        u[[i, 2]] = params.kappa_rd;
        u[[i, 3]] = params.upsilon;
        cluster.push(params.s as i64);
    }
    let tau = &y1 - &y0;
    Ok(PanelDataset {
        x,
        w,
        y,
        y1: Some(y1),
        y0: Some(y0),
        tau: Some(tau),
        u: Some(u),
        cluster: Some(cluster),
        meta: Provenance {
            generator: serde_json::json!({
                "kind": "tumor",
                "config": cfg,
                "clip_events": clip_events,
                "cluster_observed": false,
            }),
            seed: cfg.seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(lambda_g: f64, v0: f64) -> PatientParams {
        PatientParams { lambda_g, k_cap: 1150.34, kappa_rd: 0.04, upsilon: 0.004, s: 2, v0 }
    }

    #[test]
    fn sphere_conversions_invert() {
        let v = volume_from_diameter(13.0);
        assert!((v - 1150.346).abs() < 1e-2);
        assert!((diameter_from_volume(v) - 13.0).abs() < 1e-12);
    }

    #[test]
    fn capacity_is_a_fixed_point() {
        let p = quiet(0.01, 10.0);
        assert_eq!(next_volume(&p, p.k_cap, 0.0, 0.0), p.k_cap);
    }

    #[test]
    fn balanced_diameter_gives_even_odds() {
        let cfg = TumorConfig::default();
        assert_eq!(assignment_logit(&cfg, 6.5), 0.0);
        assert_eq!(sigmoid(assignment_logit(&cfg, cfg.d_max / 2.0)), 0.5);
    }

    #[test]
    fn untreated_noise_free_growth_is_monotone() {
        let p = quiet(0.05, 5.0);
        let mut v = p.v0;
        for _ in 0..2000 {
            let next = next_volume(&p, v, 0.0, 0.0);
            assert!(next >= v && next <= p.k_cap, "{v} -> {next}");
            assert!(next > v || (p.k_cap - v) / p.k_cap < 1e-12);
            v = next;
        }
        assert!((p.k_cap - v) / p.k_cap < 1e-3);
    }

    #[test]
    fn cluster_one_is_more_radiosensitive() {
        let cfg = TumorConfig { seed: 4, ..TumorConfig::default() };
        let (mut s1, mut s2) = (Vec::new(), Vec::new());
        for i in 0..20_000 {
            let p = sample_patient_params(&cfg, i).unwrap();
            assert!(p.lambda_g > 0.0 && p.kappa_rd > 0.0 && p.upsilon > 0.0 && p.v0 > 0.0);
            if p.s == 1 { s1.push(p.kappa_rd) } else { s2.push(p.kappa_rd) }
        }
        let stats = |v: &[f64]| {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            (m, var / n)
        };
        let (m1, v1) = stats(&s1);
        let (m2, v2) = stats(&s2);
        let ratio = m1 / m2;
        // delta-method standard error of the ratio
        let se = ratio * (v1 / (m1 * m1) + v2 / (m2 * m2)).sqrt();
        assert!((ratio - 1.5).abs() < 3.0 * se, "ratio {ratio} se {se}");

        let frac = s1.len() as f64 / 20_000.0;
        let se = (0.25f64 / 20_000.0).sqrt();
        assert!((frac - 0.5).abs() < 3.0 * se, "cluster frequency {frac}");
    }

    #[test]
    fn normal_priors_resample_to_positive() {
        let cfg = TumorConfig {
            kappa_rd: PriorSpec { family: PriorFamily::Normal, mean: 0.0398, sd: 0.168 },
            ..TumorConfig::default()
        };
        for i in 0..500 {
            assert!(sample_patient_params(&cfg, i).unwrap().kappa_rd > 0.0);
        }
        let hopeless = TumorConfig {
            kappa_rd: PriorSpec { family: PriorFamily::Normal, mean: 1e-9, sd: 1.0 },
            ..TumorConfig::default()
        };
        // With a tiny mean half the draws are negative; 100 in a row is
        // vanishingly rare, so this mostly succeeds and must never panic.
        for i in 0..50 {
            let _ = sample_patient_params(&hopeless, i);
        }
    }

    #[test]
    fn params_are_deterministic() {
        let cfg = TumorConfig::default();
        assert_eq!(sample_patient_params(&cfg, 3).unwrap(), sample_patient_params(&cfg, 3).unwrap());
    }

    #[test]
    fn trajectories_stay_in_range() {
        let cfg = TumorConfig { n_patients: 50, days: 40, ..TumorConfig::default() };
        let d = generate_cohort(&cfg).unwrap();
        d.validate().unwrap();
        assert!(d.y.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert_eq!(d.d_x(), 2);
    }
}
