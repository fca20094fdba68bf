//! Central finite differences for checking hand-derived gradients.

use super::Matrix;

/// Default probe step. With f64 and O(1) inputs this balances truncation
/// (∝ h²) against cancellation (∝ ε/h).
pub const DEFAULT_STEP: f64 = 1e-5;

/// `∂f/∂x` estimated entry by entry as `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h`.
pub fn central_difference<F>(mut f: F, x: &Matrix, step: f64) -> Matrix
where
    F: FnMut(&Matrix) -> f64,
{
    let mut probe = x.clone();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for k in 0..x.as_slice().len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + step;
        let up = f(&probe);
        probe.as_mut_slice()[k] = orig - step;
        let down = f(&probe);
        probe.as_mut_slice()[k] = orig;
        out.as_mut_slice()[k] = (up - down) / (2.0 * step);
    }
    out
}

/// Directional derivative `(f(x + h d) − f(x − h d)) / 2h`.
pub fn directional_difference<F>(mut f: F, x: &Matrix, dir: &Matrix, step: f64) -> f64
where
    F: FnMut(&Matrix) -> f64,
{
    let shifted = |s: f64| {
        let mut m = x.clone();
        for (v, d) in m.as_mut_slice().iter_mut().zip(dir.as_slice()) {
            *v += s * d;
        }
        m
    };
    (f(&shifted(step)) - f(&shifted(-step))) / (2.0 * step)
}

/// `‖a − b‖_F / max(‖a‖_F, ‖b‖_F)`, or 0 when both vanish.
///
/// # Panics
/// If the shapes differ.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "relative_error shape mismatch");
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    if scale == 0.0 {
        return 0.0;
    }
    let diff: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    diff / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_recovered() {
        let x = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let g = central_difference(|m| m.as_slice().iter().map(|v| v * v).sum(), &x, DEFAULT_STEP);
        assert!(relative_error(&g, &x.scale(2.0)) < 1e-9);
    }

    #[test]
    fn directional_matches_inner_product() {
        let x = Matrix::from_rows(&[[0.3, 0.7, -1.1]]);
        let d = Matrix::from_rows(&[[1.0, -1.0, 2.0]]);
        let f = |m: &Matrix| m.as_slice().iter().map(|v| v.sin()).sum::<f64>();
        let got = directional_difference(f, &x, &d, 1e-5);
        let want: f64 = x.as_slice().iter().zip(d.as_slice()).map(|(v, d)| v.cos() * d).sum();
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn relative_error_edge_cases() {
        let z = Matrix::zeros(2, 2);
        assert_eq!(relative_error(&z, &z), 0.0);
        let a = Matrix::filled(1, 1, 2.0);
        let b = Matrix::filled(1, 1, 1.0);
        assert_eq!(relative_error(&a, &b), 0.5);
    }
}
