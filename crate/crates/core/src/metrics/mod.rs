//! Error metrics for effect and outcome predictions, and the paired
//! statistics used to compare model variants across seeds.

mod stats;

pub use stats::{mean_std, paired_tests, wilcoxon_signed_rank, PairedTests};

use std::fmt::Write;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("degenerate ground truth: sum of |{0}| is zero")]
    DegenerateGroundTruth(&'static str),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape(Vec<usize>, Vec<usize>),
    #[error("{0}")]
    Input(String),
}

/// Single-run metrics. Normalised metrics divide by the mean absolute
/// ground truth; `pehe` is the plain mean squared ITE error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nae_ate: f64,
    pub nmae_tau: f64,
    pub nrmse_tau: f64,
    pub nmae_y: f64,
    pub nrmse_y: f64,
    pub pehe: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    NaeAte,
    NmaeTau,
    NmaeY,
    NrmseTau,
    NrmseY,
    Pehe,
}

impl Metric {
    pub const ALL: [Metric; 6] =
        [Metric::NaeAte, Metric::NmaeTau, Metric::NmaeY, Metric::NrmseTau, Metric::NrmseY, Metric::Pehe];

    pub fn name(self) -> &'static str {
        match self {
            Metric::NaeAte => "nae_ate",
            Metric::NmaeTau => "nmae_tau",
            Metric::NmaeY => "nmae_y",
            Metric::NrmseTau => "nrmse_tau",
            Metric::NrmseY => "nrmse_y",
            Metric::Pehe => "pehe",
        }
    }

    pub fn of(self, r: &MetricsReport) -> f64 {
        match self {
            Metric::NaeAte => r.nae_ate,
            Metric::NmaeTau => r.nmae_tau,
            Metric::NmaeY => r.nmae_y,
            Metric::NrmseTau => r.nrmse_tau,
            Metric::NrmseY => r.nrmse_y,
            Metric::Pehe => r.pehe,
        }
    }
}

fn check_shapes(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<(), MetricsError> {
    if a.shape() != b.shape() {
        return Err(MetricsError::Shape(a.shape().to_vec(), b.shape().to_vec()));
    }
    if a.is_empty() {
        return Err(MetricsError::Input("no predictions".into()));
    }
    Ok(())
}

/// `(NMAE, NRMSE)` of `hat` against `truth`.
fn normalised_errors(truth: ArrayView2<f64>, hat: ArrayView2<f64>, what: &'static str) -> Result<(f64, f64), MetricsError> {
    let n = truth.len() as f64;
    let scale = truth.iter().map(|v| v.abs()).sum::<f64>() / n;
    if scale == 0.0 {
        return Err(MetricsError::DegenerateGroundTruth(what));
    }
    let mae = truth.iter().zip(hat.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let mse = truth.iter().zip(hat.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    Ok((mae / scale, mse.sqrt() / scale))
}

pub fn pehe(tau: ArrayView2<f64>, tau_hat: ArrayView2<f64>) -> Result<f64, MetricsError> {
    check_shapes(tau, tau_hat)?;
    Ok(tau.iter().zip(tau_hat.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / tau.len() as f64)
}

/// All metrics for one run; inputs are `[units, steps]`.
pub fn compute_metrics(
    tau: ArrayView2<f64>,
    tau_hat: ArrayView2<f64>,
    y: ArrayView2<f64>,
    y_hat: ArrayView2<f64>,
) -> Result<MetricsReport, MetricsError> {
    check_shapes(tau, tau_hat)?;
    check_shapes(y, y_hat)?;
    let (nmae_tau, nrmse_tau) = normalised_errors(tau, tau_hat, "tau")?;
    let (nmae_y, nrmse_y) = normalised_errors(y, y_hat, "y")?;
    let n = tau.len() as f64;
    let ate_den = (tau.sum() / n).abs();
    if ate_den == 0.0 {
        return Err(MetricsError::DegenerateGroundTruth("sum of tau"));
    }
    let nae_ate = ((tau.sum() - tau_hat.sum()) / n).abs() / ate_den;
    Ok(MetricsReport { nae_ate, nmae_tau, nrmse_tau, nmae_y, nrmse_y, pehe: pehe(tau, tau_hat)? })
}

/// Mean and sample standard deviation of every metric across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n_seeds: usize,
    pub mean: MetricsReport,
    pub std: MetricsReport,
    pub per_seed: Vec<MetricsReport>,
}

pub fn summarize(runs: &[MetricsReport]) -> MetricsSummary {
    let mut mean = MetricsReport::default();
    let mut std = MetricsReport::default();
    for m in Metric::ALL {
        let (mu, sd) = mean_std(&runs.iter().map(|r| m.of(r)).collect::<Vec<_>>());
        let (dm, ds) = match m {
            Metric::NaeAte => (&mut mean.nae_ate, &mut std.nae_ate),
            Metric::NmaeTau => (&mut mean.nmae_tau, &mut std.nmae_tau),
            Metric::NmaeY => (&mut mean.nmae_y, &mut std.nmae_y),
            Metric::NrmseTau => (&mut mean.nrmse_tau, &mut std.nrmse_tau),
            Metric::NrmseY => (&mut mean.nrmse_y, &mut std.nrmse_y),
            Metric::Pehe => (&mut mean.pehe, &mut std.pehe),
        };
        *dm = mu;
        *ds = sd;
    }
    MetricsSummary { n_seeds: runs.len(), mean, std, per_seed: runs.to_vec() }
}

/// One cell of a γ sweep: the per-seed values of `metric` for `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub gamma: f64,
    pub model: String,
    pub metric: String,
    pub values: Vec<f64>,
}

/// CSV with header `gamma,model,metric,mean,std`, rows sorted by gamma
/// (then model and metric). Needs at least two distinct gammas.
pub fn gamma_sweep_report(entries: &[SweepEntry]) -> Result<String, MetricsError> {
    let mut gammas: Vec<f64> = entries.iter().map(|e| e.gamma).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    if gammas.len() < 2 {
        return Err(MetricsError::Input("a sweep needs at least two gamma values".into()));
    }
    let mut sorted: Vec<&SweepEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then_with(|| a.model.cmp(&b.model)).then_with(|| a.metric.cmp(&b.metric)));
    let mut out = String::from("gamma,model,metric,mean,std\n");
    for e in sorted {
        let (m, s) = mean_std(&e.values);
        writeln!(out, "{},{},{},{:.6},{:.6}", e.gamma, e.model, e.metric, m, s).expect("string write");
    }
    Ok(out)
}
