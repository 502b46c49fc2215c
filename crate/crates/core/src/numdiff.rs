//! Finite-difference oracles used by the gradient checks.

/// Coordinates whose magnitude falls below this are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_difference<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i - b_i| / max(|a_i|, |b_i|, RELATIVE_ERROR_FLOOR)`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(RELATIVE_ERROR_FLOOR))
        .fold(0.0, f64::max)
}
