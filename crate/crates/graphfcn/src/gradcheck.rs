//! Central finite-difference gradient checking.
//!
//! The checker only evaluates a forward closure, so it stays independent of
//! the tape's backward rules. Used by unit tests, the acceptance suite, and
//! the `check-grads` CLI command.

/// Central difference df/dx_i with step `h` for the parameter at `idx`.
pub fn central_difference<F>(f: &F, params: &[f64], idx: usize, h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut p = params.to_vec();
    p[idx] = params[idx] + h;
    let fp = f(&p);
    p[idx] = params[idx] - h;
    let fm = f(&p);
    (fp - fm) / (2.0 * h)
}

/// Relative error between an analytic and a numeric derivative, guarded
/// against both being near zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-8 {
        return 0.0;
    }
    (analytic - numeric).abs() / denom
}

/// Checks analytic gradients for the parameter indices in `indices`.
/// Returns the worst relative error and its index.
pub fn check_indices<F>(
    f: &F,
    params: &[f64],
    analytic: &[f64],
    indices: &[usize],
    step: f64,
) -> (f64, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let mut worst = 0.0;
    let mut worst_idx = 0;
    for &i in indices {
        let numeric = central_difference(f, params, i, step);
        let err = relative_error(analytic[i], numeric);
        if err > worst {
            worst = err;
            worst_idx = i;
        }
    }
    (worst, worst_idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivative() {
        let f = |p: &[f64]| p[0] * p[0];
        let d = central_difference(&f, &[3.0], 0, 1e-5);
        assert!((d - 6.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_zero_guard() {
        assert_eq!(relative_error(0.0, 1e-12), 0.0);
    }
}
