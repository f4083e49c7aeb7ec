//! Least-squares fits used by the exponent diagnostics.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Power-law fit `y ~ C x^{-exponent}` from ordinary least squares on
/// log-log coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailFit {
    /// Decay exponent (positive for decaying sequences).
    pub exponent: f64,
    /// Multiplicative constant `C`.
    pub constant: f64,
    /// Window `(x_min, x_max)` the fit was taken over.
    pub fit_window: (f64, f64),
    /// Max relative deviation of the data from the fitted law on the window.
    pub residual: f64,
}

/// OLS slope/intercept for `y = slope * x + intercept`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// OLS slope with its standard error (residual-based).
pub fn linear_fit_with_stderr(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let (slope, intercept) = linear_fit(points);
    let n = points.len() as f64;
    let mean_x: f64 = points.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let dof = (points.len().saturating_sub(2)).max(1) as f64;
    let stderr = (ss_res / dof / sxx).sqrt();
    (slope, intercept, stderr)
}

/// Power-law fit on a positive sequence, sampled at roughly half-dyadic
/// points of the window to avoid over-weighting the dense far end.
///
/// `value(x)` must be positive on the window; `x` runs over integers in
/// `[x_min, x_max]`. Requires at least 8 sample points.
pub fn tail_fit<F: Fn(usize) -> f64>(x_min: usize, x_max: usize, value: F) -> Result<TailFit> {
    let xs = half_dyadic_points(x_min, x_max);
    if xs.len() < 8 {
        return Err(Error::WindowTooSmall(format!(
            "window [{x_min}, {x_max}] yields {} sample points, need 8",
            xs.len()
        )));
    }
    let mut pts = Vec::with_capacity(xs.len());
    for &x in &xs {
        let v = value(x);
        if !(v > 0.0) {
            return Err(Error::WindowTooSmall(format!(
                "non-positive value {v} at x = {x}"
            )));
        }
        pts.push(((x as f64).ln(), v.ln()));
    }
    let (slope, intercept) = linear_fit(&pts);
    let constant = intercept.exp();
    let exponent = -slope;
    let mut residual = 0.0f64;
    for &x in &xs {
        let fitted = constant * (x as f64).powf(-exponent);
        let rel = (value(x) - fitted).abs() / fitted;
        residual = residual.max(rel);
    }
    Ok(TailFit {
        exponent,
        constant,
        fit_window: (x_min as f64, x_max as f64),
        residual,
    })
}

/// Fit `y = a * ln x + b` through `(x, y)` points; returns `(a, b, max
/// relative residual in y)`.
pub fn log_affine_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let logged: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y)).collect();
    let (a, b) = linear_fit(&logged);
    let mut residual = 0.0f64;
    for &(x, y) in points {
        let fitted = a * x.ln() + b;
        residual = residual.max((y - fitted).abs() / y.abs().max(1e-300));
    }
    (a, b, residual)
}

/// Integer sample points spaced by factors of roughly sqrt(2), always
/// including both window ends.
pub fn half_dyadic_points(x_min: usize, x_max: usize) -> Vec<usize> {
    let mut xs = Vec::new();
    let mut x = x_min.max(1) as f64;
    while (x as usize) < x_max {
        let xi = x.round() as usize;
        if xs.last() != Some(&xi) {
            xs.push(xi);
        }
        x *= std::f64::consts::SQRT_2;
    }
    if xs.last() != Some(&x_max) {
        xs.push(x_max);
    }
    xs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_power_law() {
        let fit = tail_fit(8, 512, |x| 3.0 * (x as f64).powf(-2.5)).unwrap();
        assert!((fit.exponent - 2.5).abs() < 1e-9);
        assert!((fit.constant - 3.0).abs() < 1e-8);
        assert!(fit.residual < 1e-10);
    }

    #[test]
    fn rejects_tiny_windows() {
        assert!(tail_fit(8, 12, |x| x as f64).is_err());
    }

    #[test]
    fn log_affine_recovery() {
        let pts: Vec<(f64, f64)> = [32.0, 64.0, 128.0, 256.0]
            .iter()
            .map(|&x: &f64| (x, 1.7 * x.ln() + 0.3))
            .collect();
        let (a, b, res) = log_affine_fit(&pts);
        assert!((a - 1.7).abs() < 1e-12);
        assert!((b - 0.3).abs() < 1e-12);
        assert!(res < 1e-12);
    }
}
