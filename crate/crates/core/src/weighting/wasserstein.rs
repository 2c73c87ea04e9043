use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::sinkhorn::{sinkhorn_knopp, sinkhorn_knopp_log, TransportPlan};
use super::OtError;

/// Below this smallest kernel entry the solver switches to log-domain
/// potentials; the plain scalings would otherwise overflow.
const KERNEL_UNDERFLOW: f64 = 1e-100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OtSettings {
    /// Entropic regularisation strength; the kernel is `exp(-lambda * M)`.
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OtSettings {
    fn default() -> Self {
        OtSettings { lambda: 10.0, tol: 1e-6, max_iter: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct WassersteinResult {
    pub distance: f64,
    pub plan: TransportPlan,
    pub cost: Array2<f64>,
}

/// Pairwise Euclidean distances between the rows of `a` and the rows of `b`.
pub fn cost_matrix(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    })
}

fn normalise(alpha: ArrayView1<f64>, group: &'static str) -> Result<Array1<f64>, OtError> {
    if alpha.is_empty() {
        return Err(OtError::EmptyGroup(group));
    }
    let s = alpha.sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(OtError::Marginal(format!("{group} weights sum to {s}")));
    }
    Ok(alpha.mapv(|v| v / s))
}

/// Entropic optimal-transport discrepancy between weighted treated and
/// control representations: `sum(T * M)` for the Sinkhorn plan `T`.
pub fn weighted_wasserstein(
    treated: ArrayView2<f64>,
    control: ArrayView2<f64>,
    alpha_treated: ArrayView1<f64>,
    alpha_control: ArrayView1<f64>,
    settings: &OtSettings,
) -> Result<WassersteinResult, OtError> {
    if treated.nrows() != alpha_treated.len() {
        return Err(OtError::LengthMismatch(treated.nrows(), alpha_treated.len()));
    }
    if control.nrows() != alpha_control.len() {
        return Err(OtError::LengthMismatch(control.nrows(), alpha_control.len()));
    }
    let a = normalise(alpha_treated, "treated")?;
    let b = normalise(alpha_control, "control")?;
    let cost = cost_matrix(treated, control);
    let log_kernel = cost.mapv(|m| -settings.lambda * m);
    let min_log = log_kernel.iter().copied().fold(f64::INFINITY, f64::min);
    let plan = if min_log < KERNEL_UNDERFLOW.ln() {
        sinkhorn_knopp_log(log_kernel.view(), a.view(), b.view(), settings.tol, settings.max_iter)?
    } else {
        let kernel = log_kernel.mapv(f64::exp);
        sinkhorn_knopp(kernel.view(), a.view(), b.view(), settings.tol, settings.max_iter)?
    };
    let distance = (&plan.plan * &cost).sum();
    Ok(WassersteinResult { distance, plan, cost })
}

/// Gradient of `sum(T * M)` with respect to both point sets, holding `T`
/// fixed. Coincident points contribute zero.
pub fn cost_gradient(
    treated: ArrayView2<f64>,
    control: ArrayView2<f64>,
    plan: ArrayView2<f64>,
    cost: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let mut gt = Array2::zeros(treated.raw_dim());
    let mut gc = Array2::zeros(control.raw_dim());
    let dim = treated.ncols();
    for i in 0..treated.nrows() {
        for j in 0..control.nrows() {
            let m = cost[[i, j]];
            if m <= 0.0 {
                continue;
            }
            let c = plan[[i, j]] / m;
            for k in 0..dim {
                let d = c * (treated[[i, k]] - control[[j, k]]);
                gt[[i, k]] += d;
                gc[[j, k]] -= d;
            }
        }
    }
    (gt, gc)
}

#[derive(Debug, Clone)]
pub struct StepTransport {
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
    pub result: WassersteinResult,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub total: f64,
    /// One entry per time step; `None` where an arm was empty.
    pub steps: Vec<Option<StepTransport>>,
    pub skipped: usize,
    pub unconverged: usize,
}

/// Sum over time steps of the weighted discrepancy between treated and
/// control rows of `reps[t]`. Steps with an empty arm are skipped.
pub fn ipm_regularizer(
    reps: &[ArrayView2<f64>],
    alpha: ArrayView2<f64>,
    w: ArrayView2<f64>,
    settings: &OtSettings,
) -> Result<IpmResult, OtError> {
    if reps.len() != w.ncols() {
        return Err(OtError::LengthMismatch(reps.len(), w.ncols()));
    }
    let mut out = IpmResult { total: 0.0, steps: Vec::with_capacity(reps.len()), skipped: 0, unconverged: 0 };
    for (t, r) in reps.iter().enumerate() {
        let col = w.column(t);
        let treated: Vec<usize> = (0..col.len()).filter(|&i| col[i] == 1.0).collect();
        let control: Vec<usize> = (0..col.len()).filter(|&i| col[i] != 1.0).collect();
        if treated.is_empty() || control.is_empty() {
            out.skipped += 1;
            out.steps.push(None);
            continue;
        }
        let rt = r.select(ndarray::Axis(0), &treated);
        let rc = r.select(ndarray::Axis(0), &control);
        let at: Array1<f64> = treated.iter().map(|&i| alpha[[i, t]]).collect();
        let ac: Array1<f64> = control.iter().map(|&i| alpha[[i, t]]).collect();
        let result = weighted_wasserstein(rt.view(), rc.view(), at.view(), ac.view(), settings)?;
        out.total += result.distance;
        if !result.plan.converged {
            out.unconverged += 1;
        }
        out.steps.push(Some(StepTransport { treated, control, result }));
    }
    Ok(out)
}
