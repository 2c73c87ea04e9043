//! Synthetic longitudinal panel with confounded treatment assignment.
//!
//! Covariates follow a time-varying AR(p) with feedback from past
//! treatments, treatment is logistic in lagged treatments, covariates and
//! responses, and the two potential outcomes depend on lagged covariates
//! through a Hadamard product with a static unobserved adjustment vector
//! `u` drawn from a three-component Gaussian mixture.
//!
//! All regression coefficients are population-level: they are drawn once per
//! dataset and shared by every unit. Series values before `t = 1` are zero.

use ndarray::{Array2, Array3, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{PanelDataset, Provenance};
use crate::rng::{substream, Purpose};

/// Standard deviation of the treatment-model coefficients around `sin(t/pi)`.
const TREATMENT_COEF_SD: f64 = 0.01;
const TREATMENT_NOISE_SD: f64 = 0.01;
const OUTCOME_NOISE_SD: f64 = 0.01;
const MIXTURE_COMPONENTS: usize = 3;
const MIXTURE_HALF_WIDTH: f64 = 10.0;
const ADJUSTMENT_VAR: f64 = 0.4;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("numeric overflow simulating unit {unit} at step {t}")]
    Overflow { unit: usize, t: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    #[serde(rename = "T")]
    pub steps: usize,
    pub d_x: usize,
    pub d_u: usize,
    pub p: usize,
    pub rho: f64,
    pub sigma2: f64,
    /// Mean of the treated-arm coefficients on `x ⊙ u`.
    pub gamma1_yx: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { n: 10_000, steps: 35, d_x: 100, d_u: 100, p: 8, rho: 0.3, sigma2: 0.2, gamma1_yx: 0.9, seed: 0 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.d_u != self.d_x {
            return bad(format!("d_u ({}) must equal d_x ({})", self.d_u, self.d_x));
        }
        if self.d_x == 0 {
            return bad("d_x must be at least 1".into());
        }
        if self.p == 0 {
            return bad("p must be at least 1".into());
        }
        if self.steps == 0 {
            return bad("T must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho={} must lie in [0, 1)", self.rho));
        }
        if !(self.sigma2 > 0.0) {
            return bad(format!("sigma2={} must be positive", self.sigma2));
        }
        if !self.gamma1_yx.is_finite() {
            return bad("gamma1_yx must be finite".into());
        }
        Ok(())
    }

    /// Covariance of the covariate noise: `rho * 11^T + (1 - rho) * sigma2 * I`.
    pub fn covariate_noise_cov(&self) -> Array2<f64> {
        let mut cov = Array2::from_elem((self.d_x, self.d_x), self.rho);
        for j in 0..self.d_x {
            cov[[j, j]] += (1.0 - self.rho) * self.sigma2;
        }
        cov
    }
}

/// Outcome-model coefficients for one treatment arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmCoefficients {
    /// `[T, p]`, on lagged treatments.
    pub yw: Array2<f64>,
    /// `[T, p, d_x]`, on lagged `x ⊙ u`.
    pub yx: Array3<f64>,
    /// `[T, p]`, on lagged responses.
    pub y: Array2<f64>,
}

/// Every population-level coefficient of one generated dataset. The leading
/// axis is the time step `t - 1`, the second the lag `k - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub x: Array3<f64>,
    pub xw: Array3<f64>,
    pub w: Array2<f64>,
    pub wx: Array3<f64>,
    pub wy: Array2<f64>,
    /// Index 0 is the control arm, index 1 the treated arm.
    pub arms: [ArmCoefficients; 2],
    /// `[3, d_u]`
    pub mixture_means: Array2<f64>,
}

fn normals2(rng: &mut ChaCha8Rng, shape: (usize, usize), mean: impl Fn(usize) -> f64, sd: f64) -> Array2<f64> {
    Array2::from_shape_fn(shape, |(t, _)| {
        let z: f64 = StandardNormal.sample(rng);
        mean(t) + sd * z
    })
}

fn normals3(rng: &mut ChaCha8Rng, shape: (usize, usize, usize), mean: impl Fn(usize) -> f64, sd: f64) -> Array3<f64> {
    Array3::from_shape_fn(shape, |(t, _, _)| {
        let z: f64 = StandardNormal.sample(rng);
        mean(t) + sd * z
    })
}

/// `sin(t / pi)` for the 1-based step `t = ti + 1`.
fn seasonal(ti: usize) -> f64 {
    ((ti + 1) as f64 / std::f64::consts::PI).sin()
}

pub fn sample_population_coefficients(cfg: &SynthConfig) -> Result<CoefficientSet, SynthError> {
    cfg.validate()?;
    let (steps, p, d) = (cfg.steps, cfg.p, cfg.d_x);

    let mut rng = substream(cfg.seed, Purpose::CovariateCoefficients, 0);
    let x = normals3(&mut rng, (steps, p, d), |_| 0.0, 1.0);
    let xw = normals3(&mut rng, (steps, p, d), |_| 0.0, 1.0);

    let mut rng = substream(cfg.seed, Purpose::TreatmentCoefficients, 0);
    let w = normals2(&mut rng, (steps, p), seasonal, TREATMENT_COEF_SD);
    let wy = normals2(&mut rng, (steps, p), seasonal, TREATMENT_COEF_SD);
    let wx = normals3(&mut rng, (steps, p, d), seasonal, TREATMENT_COEF_SD);

    // The treated-arm `yx` mean is the swept parameter; only the shift
    // changes between sweeps, the standard normals are the same.
    let mut rng = substream(cfg.seed, Purpose::OutcomeCoefficients, 0);
    let treated = ArmCoefficients {
        yw: normals2(&mut rng, (steps, p), |_| 0.5, 0.1),
        yx: normals3(&mut rng, (steps, p, d), |_| cfg.gamma1_yx, 0.1),
        y: normals2(&mut rng, (steps, p), |_| 0.8, 0.1),
    };
    let control = ArmCoefficients {
        yw: normals2(&mut rng, (steps, p), |_| 0.2, 0.1),
        yx: normals3(&mut rng, (steps, p, d), |_| 1.0, 0.1),
        y: normals2(&mut rng, (steps, p), |_| 0.5, 0.01),
    };

    let mut rng = substream(cfg.seed, Purpose::MixtureMeans, 0);
    let mixture_means = Array2::from_shape_fn((MIXTURE_COMPONENTS, cfg.d_u), |_| {
        rng.random_range(-MIXTURE_HALF_WIDTH..MIXTURE_HALF_WIDTH)
    });

    Ok(CoefficientSet { x, xw, w, wx, wy, arms: [control, treated], mixture_means })
}

/// One draw of the correlated covariate noise vector.
pub fn covariate_noise(cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<f64> {
    let common: f64 = StandardNormal.sample(rng);
    let common = cfg.rho.sqrt() * common;
    let idio = ((1.0 - cfg.rho) * cfg.sigma2).sqrt();
    (0..cfg.d_x)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            common + idio * z
        })
        .collect()
}

/// Full trajectory of one unit, including both potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitTrajectory {
    /// `[T, d_x]`
    pub x: Array2<f64>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    pub u: Vec<f64>,
    /// Mixture component of `u`, in `0..3`.
    pub component: usize,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.dot(&b)
}

/// Simulates unit `unit` under `coeffs`. Each kind of noise comes from its
/// own `(seed, purpose, unit)` substream.
pub fn simulate_unit(cfg: &SynthConfig, coeffs: &CoefficientSet, unit: usize) -> Result<UnitTrajectory, SynthError> {
    let (steps, p, d) = (cfg.steps, cfg.p, cfg.d_x);
    let id = unit as u64;
    let mut adj_rng = substream(cfg.seed, Purpose::Adjustment, id);
    let mut x_rng = substream(cfg.seed, Purpose::CovariateNoise, id);
    let mut w_rng = substream(cfg.seed, Purpose::TreatmentNoise, id);
    let mut y_rng = substream(cfg.seed, Purpose::OutcomeNoise, id);

    let component = adj_rng.random_range(0..MIXTURE_COMPONENTS);
    let u: Vec<f64> = (0..cfg.d_u)
        .map(|j| {
            let z: f64 = StandardNormal.sample(&mut adj_rng);
            coeffs.mixture_means[[component, j]] + ADJUSTMENT_VAR.sqrt() * z
        })
        .collect();
    let u_view = ArrayView1::from(&u);

    let mut x = Array2::<f64>::zeros((steps, d));
    let mut w = vec![0.0; steps];
    let mut y = vec![0.0; steps];
    let mut y1 = vec![0.0; steps];
    let mut y0 = vec![0.0; steps];
    // x_{t-k} ⊙ u, cached per step.
    let mut xu = Array2::<f64>::zeros((steps, d));
    let inv_p = 1.0 / p as f64;
    let inv_dp = 1.0 / (d * p) as f64;

    for t in 0..steps {
        let lags = 1..=p.min(t);

        let eps = covariate_noise(cfg, &mut x_rng);
        for j in 0..d {
            let mut v = 0.0;
            for k in lags.clone() {
                v += coeffs.x[[t, k - 1, j]] * x[[t - k, j]] + coeffs.xw[[t, k - 1, j]] * w[t - k];
            }
            x[[t, j]] = inv_p * v + eps[j];
        }

        let mut logit = 0.0;
        for k in lags.clone() {
            logit += inv_p * coeffs.w[[t, k - 1]] * w[t - k]
                + inv_dp * dot(coeffs.wx.slice(ndarray::s![t, k - 1, ..]), x.row(t - k))
                + inv_p * coeffs.wy[[t, k - 1]] * y[t - k];
        }
        let e_w: f64 = StandardNormal.sample(&mut w_rng);
        logit += TREATMENT_NOISE_SD * e_w;
        let draw: f64 = w_rng.random();
        w[t] = if draw < sigmoid(logit) { 1.0 } else { 0.0 };

        let e_y: f64 = StandardNormal.sample(&mut y_rng);
        let mut potential = [0.0; 2];
        for (arm, out) in potential.iter_mut().enumerate() {
            let c = &coeffs.arms[arm];
            let mut v = 0.0;
            for k in lags.clone() {
                v += inv_p * c.yw[[t, k - 1]] * w[t - k]
                    + inv_dp * dot(c.yx.slice(ndarray::s![t, k - 1, ..]), xu.row(t - k))
                    + inv_p * c.y[[t, k - 1]] * y[t - k];
            }
            *out = v + OUTCOME_NOISE_SD * e_y;
        }
        y0[t] = potential[0];
        y1[t] = potential[1];
        y[t] = if w[t] == 1.0 { y1[t] } else { y0[t] };

        let xu_t = &x.row(t) * &u_view;
        xu.row_mut(t).assign(&xu_t);

        let finite = logit.is_finite() && y1[t].is_finite() && y0[t].is_finite() && x.row(t).iter().all(|v| v.is_finite());
        if !finite {
            return Err(SynthError::Overflow { unit, t: t + 1 });
        }
    }
    Ok(UnitTrajectory { x, w, y, y1, y0, u, component })
}

pub fn generate_dataset(cfg: &SynthConfig) -> Result<PanelDataset, SynthError> {
    let coeffs = sample_population_coefficients(cfg)?;
    let (n, steps) = (cfg.n, cfg.steps);
    let mut x = Array3::zeros((n, steps, cfg.d_x));
    let mut w = Array2::zeros((n, steps));
    let mut y = Array2::zeros((n, steps));
    let mut y1 = Array2::zeros((n, steps));
    let mut y0 = Array2::zeros((n, steps));
    let mut u = Array2::zeros((n, cfg.d_u));
    let mut cluster = Vec::with_capacity(n);
    for i in 0..n {
        let traj = simulate_unit(cfg, &coeffs, i)?;
        x.index_axis_mut(ndarray::Axis(0), i).assign(&traj.x);
        for t in 0..steps {
            w[[i, t]] = traj.w[t];
            y[[i, t]] = traj.y[t];
            y1[[i, t]] = traj.y1[t];
            y0[[i, t]] = traj.y0[t];
        }
        u.row_mut(i).assign(&ArrayView1::from(&traj.u));
        cluster.push(traj.component as i64 + 1);
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
            generator: serde_json::json!({ "kind": "synthetic", "config": cfg }),
            seed: cfg.seed,
        },
    })
}
