/// KL weight at optimiser iteration `l` (1-based) of `n_iter`, for `m`
/// cycles whose first fraction `r` ramps linearly from 0 to 1.
///
/// # Panics
///
/// If `l`, `n_iter` or `m` is zero.
pub fn beta_at_iteration(l: usize, n_iter: usize, m: usize, r: f64) -> f64 {
    assert!(l >= 1 && n_iter >= 1 && m >= 1, "iteration, n_iter and cycles must be positive");
    let period = n_iter.div_ceil(m);
    let delta = ((l - 1) % period) as f64 / (n_iter as f64 / m as f64);
    if delta <= r {
        (delta / r).min(1.0)
    } else {
        1.0
    }
}
