//! Central finite differences, used as the independent oracle for every
//! analytic gradient in the crate.

/// Gradient of the scalar function `f` at `x` via central differences with
/// step `h`. Panics if `f` is non-finite at a probe point.
pub fn finite_diff_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite difference step must be positive");
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let up = f(&probe);
        probe[k] = x[k] - h;
        let down = f(&probe);
        probe[k] = x[k];
        assert!(
            up.is_finite() && down.is_finite(),
            "non-finite objective at probe {k}"
        );
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_under_central_differences() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = finite_diff_grad(|_| 42.0, &[1.0, -2.0, 0.5], 1e-5);
        assert!(g.iter().all(|&v| v == 0.0));
    }
}
