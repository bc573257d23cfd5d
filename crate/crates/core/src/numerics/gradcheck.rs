use super::ParamSet;

/// Central finite differences `(L(θ+h) - L(θ-h)) / 2h` for every scalar of `params`.
///
/// `loss` receives the perturbed parameter set; `params` is restored afterwards.
pub fn finite_diff_grad<F>(mut loss: F, params: &mut ParamSet, h: f64) -> Vec<f64>
where
    F: FnMut(&ParamSet) -> f64,
{
    assert!(h > 0.0, "finite difference step must be positive");
    let n = params.scalar_count();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let orig = params.scalar(k);
        params.set_scalar(k, orig + h);
        let plus = loss(params);
        params.set_scalar(k, orig - h);
        let minus = loss(params);
        params.set_scalar(k, orig);
        out.push((plus - minus) / (2.0 * h));
    }
    out
}

/// Denominator floor used by [`relative_error`]; below it the comparison is
/// effectively absolute, which keeps near-zero gradients from amplifying
/// finite-difference round-off (about `eps * |L| / h`).
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}
