//! Central finite differences, used as an independent oracle for every
//! analytic gradient in the crate.
//!
//! Kept out of `#[cfg(test)]` so integration tests and the acceptance suite
//! can call it; nothing here is used on any training path.

/// Central difference df/dx_i ≈ (f(x+h e_i) − f(x−h e_i)) / 2h for every
/// coordinate of `x`.
pub fn central_gradient<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Relative error between an analytic gradient and its finite-difference
/// estimate: max_i |a_i − n_i| / max(1, |a_i|, |n_i|).
///
/// The 1 in the denominator keeps coordinates near zero from blowing up the
/// ratio on pure rounding noise.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_quadratic_gradient() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let x = [1.0, -2.0, 0.5];
        let g = central_gradient(f, &x, 1e-5);
        let expected = [2.0, -4.0, 1.0];
        assert!(max_relative_error(&expected, &g) < 1e-9);
    }
}
