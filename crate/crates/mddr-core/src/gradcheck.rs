//! Central finite differences for verifying analytic gradients.

/// Central-difference gradient of a scalar function at `point`:
/// (f(x + εe_i) − f(x − εe_i)) / 2ε per coordinate.
pub fn central_difference<F>(mut f: F, point: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grads = Vec::with_capacity(point.len());
    let mut x = point.to_vec();
    for i in 0..point.len() {
        x[i] = point[i] + eps;
        let plus = f(&x);
        x[i] = point[i] - eps;
        let minus = f(&x);
        x[i] = point[i];
        grads.push((plus - minus) / (2.0 * eps));
    }
    grads
}

/// Largest relative deviation max_i |a_i − b_i| / max(|b_i|, floor).
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let f = |v: &[f64]| v[0] * v[0] + 3.0 * v[0] * v[1];
        let g = central_difference(f, &[2.0, -1.0], 1e-6);
        assert!((g[0] - 1.0).abs() < 1e-6); // 2x + 3y at (2, -1)
        assert!((g[1] - 6.0).abs() < 1e-6); // 3x
    }
}
