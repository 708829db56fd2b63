use alloc::vec::Vec;

use crate::{Error, Result};

/// Central differences `(f(θ + εe_j) − f(θ − εe_j)) / 2ε` per coordinate.
pub fn finite_diff_gradient<F>(mut f: F, theta: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!("finite-difference step must be positive, got {eps}")));
    }
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        probe[j] = theta[j] + eps;
        let up = f(&probe);
        probe[j] = theta[j] - eps;
        let down = f(&probe);
        probe[j] = theta[j];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(alloc::format!("function value at coordinate {j}")));
        }
        grad.push((up - down) / (2.0 * eps));
    }
    Ok(grad)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| crate::math::sqrt(v.iter().map(|x| x * x).sum());
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let theta = [0.5, -1.5, 2.0];
        let g = finite_diff_gradient(|t| t.iter().map(|x| x * x).sum(), &theta, 1e-5).unwrap();
        for (gi, ti) in g.iter().zip(&theta) {
            assert!((gi - 2.0 * ti).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_is_exact_for_any_step() {
        for eps in [1e-3, 0.5, 4.0] {
            let g = finite_diff_gradient(|t| 3.0 * t[0] - 2.0 * t[1], &[0.25, 0.5], eps).unwrap();
            assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] + 2.0).abs() < 1e-12, "{g:?}");
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert!(finite_diff_gradient(|t| 1.0 / t[0], &[0.0], 1e-5).is_ok());
        assert!(finite_diff_gradient(|t| libm::log(t[0]), &[0.0], 1e-5).is_err());
    }
}
