use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::Prediction;
use crate::panel::{Batch, PanelDataset};

/// Per-feature affine scaling of covariates and a scalar scaling of
/// outcomes. Spreads below `1e-12` are replaced by 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

fn spread(var: f64) -> f64 {
    let s = var.max(0.0).sqrt();
    if s < 1e-12 {
        1.0
    } else {
        s
    }
}

impl Standardizer {
    /// Fits on all `(unit, step)` cells of the units in `idx`.
    pub fn fit(d: &PanelDataset, idx: &[usize]) -> Standardizer {
        let dx = d.d_x();
        let cells = (idx.len() * d.steps()).max(1) as f64;
        let mut x_mean = vec![0.0; dx];
        let mut y_mean = 0.0;
        for &i in idx {
            for t in 0..d.steps() {
                for (k, m) in x_mean.iter_mut().enumerate() {
                    *m += d.x[[i, t, k]];
                }
                y_mean += d.y[[i, t]];
            }
        }
        x_mean.iter_mut().for_each(|m| *m /= cells);
        y_mean /= cells;
        let mut x_var = vec![0.0; dx];
        let mut y_var = 0.0;
        for &i in idx {
            for t in 0..d.steps() {
                for (k, v) in x_var.iter_mut().enumerate() {
                    *v += (d.x[[i, t, k]] - x_mean[k]).powi(2);
                }
                y_var += (d.y[[i, t]] - y_mean).powi(2);
            }
        }
        Standardizer {
            x_std: x_var.iter().map(|v| spread(v / cells)).collect(),
            x_mean,
            y_mean,
            y_std: spread(y_var / cells),
        }
    }

    pub fn apply(&self, batch: &Batch) -> Batch {
        let mut out = batch.clone();
        for (k, mut lane) in out.x.axis_iter_mut(Axis(2)).enumerate() {
            lane.mapv_inplace(|v| (v - self.x_mean[k]) / self.x_std[k]);
        }
        out.y.mapv_inplace(|v| (v - self.y_mean) / self.y_std);
        out
    }

    /// Maps standardized predictions back to outcome units.
    pub fn restore(&self, pred: &mut Prediction) {
        for a in [&mut pred.y1, &mut pred.y0, &mut pred.y_factual] {
            a.mapv_inplace(|v| v * self.y_std + self.y_mean);
        }
        pred.tau.mapv_inplace(|v| v * self.y_std);
    }
}
