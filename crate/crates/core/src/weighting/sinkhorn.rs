use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::OtError;

/// Output of a Sinkhorn solve. `residual` is the largest absolute marginal
/// violation of `plan` after the last iteration.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub plan: Array2<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_marginal(name: &str, m: ArrayView1<f64>) -> Result<(), OtError> {
    if m.is_empty() {
        return Err(OtError::Marginal(format!("{name} is empty")));
    }
    if m.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(OtError::Marginal(format!("{name} has a non-positive entry")));
    }
    let s = m.sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(OtError::Marginal(format!("{name} sums to {s}")));
    }
    Ok(())
}

fn check_shapes(k: ArrayView2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<(), OtError> {
    if k.nrows() != a.len() {
        return Err(OtError::LengthMismatch(k.nrows(), a.len()));
    }
    if k.ncols() != b.len() {
        return Err(OtError::LengthMismatch(k.ncols(), b.len()));
    }
    check_marginal("row marginal", a)?;
    check_marginal("column marginal", b)
}

fn marginal_residual(plan: &Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let rows = plan.sum_axis(Axis(1));
    let cols = plan.sum_axis(Axis(0));
    let r = rows.iter().zip(a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    cols.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(r, f64::max)
}

/// Alternating matrix scaling `u = a / (K v)`, `v = b / (Kᵀ u)`; the plan is
/// `diag(u) K diag(v)`. Stops once the marginal residual is at most `tol`.
pub fn sinkhorn_knopp(
    kernel: ArrayView2<f64>,
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<TransportPlan, OtError> {
    check_shapes(kernel, a, b)?;
    for ((i, j), &v) in kernel.indexed_iter() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(OtError::Kernel(i, j, v));
        }
    }
    let mut v = Array1::<f64>::ones(b.len());
    let mut u = Array1::<f64>::ones(a.len());
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        u = &a / &kernel.dot(&v);
        v = &b / &kernel.t().dot(&u);
        // After the column update the column marginals are exact, so only
        // the rows can be off.
        let rows = &u * &kernel.dot(&v);
        residual = rows.iter().zip(a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if residual <= tol {
            break;
        }
    }
    let plan = &kernel * &u.view().insert_axis(Axis(1)) * v.view().insert_axis(Axis(0));
    let residual = marginal_residual(&plan, a, b).max(residual);
    let residual = if residual.is_nan() { f64::INFINITY } else { residual };
    Ok(TransportPlan { plan, residual, iterations, converged: residual <= tol })
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(it: I) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Same iteration carried out on dual potentials `f = ln u`, `g = ln v`,
/// with `log_kernel = ln K`. Usable when `K` underflows.
pub fn sinkhorn_knopp_log(
    log_kernel: ArrayView2<f64>,
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<TransportPlan, OtError> {
    check_shapes(log_kernel, a, b)?;
    for ((i, j), &v) in log_kernel.indexed_iter() {
        if !v.is_finite() {
            return Err(OtError::Kernel(i, j, v.exp()));
        }
    }
    let (n, m) = log_kernel.dim();
    let ln_a = a.mapv(f64::ln);
    let ln_b = b.mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            let row = log_kernel.row(i);
            f[i] = ln_a[i] - log_sum_exp((0..m).map(|j| row[j] + g[j]));
        }
        for j in 0..m {
            let col = log_kernel.column(j);
            g[j] = ln_b[j] - log_sum_exp((0..n).map(|i| col[i] + f[i]));
        }
        residual = (0..n)
            .map(|i| {
                let row = log_kernel.row(i);
                let s: f64 = (0..m).map(|j| (f[i] + row[j] + g[j]).exp()).sum();
                (s - a[i]).abs()
            })
            .fold(0.0, f64::max);
        if residual <= tol {
            break;
        }
    }
    let plan = Array2::from_shape_fn((n, m), |(i, j)| (f[i] + log_kernel[[i, j]] + g[j]).exp());
    let residual = marginal_residual(&plan, a, b).max(residual);
    Ok(TransportPlan { plan, residual, iterations, converged: residual <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_by_two_concentrates_on_the_diagonal() {
        let lambda: f64 = 50.0;
        let k = array![[1.0, (-lambda).exp()], [(-lambda).exp(), 1.0]];
        let a = array![0.5, 0.5];
        let p = sinkhorn_knopp(k.view(), a.view(), a.view(), 1e-9, 100).unwrap();
        assert!(p.converged);
        assert!((p.plan[[0, 0]] - 0.5).abs() < 1e-6);
        assert!(p.plan[[0, 1]].abs() < 1e-6);
        let lp = sinkhorn_knopp_log(k.mapv(f64::ln).view(), a.view(), a.view(), 1e-9, 100).unwrap();
        assert!((lp.plan[[1, 1]] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn uniform_kernel_gives_product_plan() {
        let k = Array2::ones((3, 2));
        let a = array![0.2, 0.3, 0.5];
        let b = array![0.6, 0.4];
        let p = sinkhorn_knopp(k.view(), a.view(), b.view(), 1e-12, 10).unwrap();
        assert_eq!(p.iterations, 1);
        for i in 0..3 {
            for j in 0..2 {
                assert!((p.plan[[i, j]] - a[i] * b[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        let a = array![0.5, 0.5];
        let k = array![[1.0, 0.0], [1.0, 1.0]];
        assert!(matches!(sinkhorn_knopp(k.view(), a.view(), a.view(), 1e-6, 10), Err(OtError::Kernel(0, 1, _))));
        let k = Array2::ones((2, 2));
        let bad = array![0.5, 0.6];
        assert!(matches!(sinkhorn_knopp(k.view(), bad.view(), a.view(), 1e-6, 10), Err(OtError::Marginal(_))));
        let short = array![1.0];
        assert!(sinkhorn_knopp(k.view(), short.view(), a.view(), 1e-6, 10).is_err());
    }
}
