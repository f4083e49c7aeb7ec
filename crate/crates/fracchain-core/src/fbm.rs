//! Fractional-Brownian-motion reference covariances and shape matching.
//!
//! The dictionary between the chain exponent `alpha`, the Hurst index and
//! the fractional power of the Laplacian is `H = (alpha - 2)/2` and
//! `u = (alpha - 1)/2 = H + 1/2`. Free-line fBm has the textbook
//! covariance; the Dirichlet field on `(-1, 1)` has kernel
//! `(k(H)/beta) |x-y|^{2H} int_0^Z (v+1)^{-1/2} v^{H-1/2} dv` with
//! `Z = (1-x^2)(1-y^2)/|x-y|^2`, known only up to the constant `k(H)`; all
//! comparisons against chain covariances therefore fit one scalar.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// `H = (alpha - 2) / 2`.
pub fn hurst_from_alpha(alpha: f64) -> f64 {
    (alpha - 2.0) / 2.0
}

/// `u = (alpha - 1) / 2 = H + 1/2`.
pub fn fractional_power_from_alpha(alpha: f64) -> f64 {
    (alpha - 1.0) / 2.0
}

/// Covariance of free-line fBm pinned at zero:
/// `(|s|^{2H} + |t|^{2H} - |s-t|^{2H}) / 2`.
pub fn fbm_cov_free(h: f64, s: f64, t: f64) -> f64 {
    0.5 * (s.abs().powf(2.0 * h) + t.abs().powf(2.0 * h) - (s - t).abs().powf(2.0 * h))
}

/// Covariance of the Dirichlet fBm on `(-1, 1)` with `k(H) = 1`.
pub fn fbm_cov_dirichlet(h: f64, beta: f64, x: f64, y: f64, tol: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&h) || h == 0.0 {
        return Err(Error::InvalidParameter(format!(
            "Dirichlet fBm kernel needs H in (0, 1/2), got {h}"
        )));
    }
    if x.abs() >= 1.0 || y.abs() >= 1.0 {
        return Err(Error::InvalidParameter("points must lie in (-1, 1)".into()));
    }
    if x == y {
        return Err(Error::InvalidParameter(
            "coincident points: use the variance profile instead".into(),
        ));
    }
    let z = (1.0 - x * x) * (1.0 - y * y) / ((x - y) * (x - y));
    let integral = boundary_integral(h, z, tol)?;
    Ok((x - y).abs().powf(2.0 * h) * integral / beta)
}

/// `int_0^Z (v+1)^{-1/2} v^{H-1/2} dv`, with the endpoint singularity
/// absorbed by the substitution `v = w^{1/(H+1/2)}` and the long tail
/// handled logarithmically.
fn boundary_integral(h: f64, z: f64, tol: f64) -> Result<f64> {
    let p = 1.0 / (h + 0.5);
    let head_end = z.min(1.0);
    // int_0^min(Z,1): dv = p w^{p-1} dw, v^{H-1/2} w-part cancels exactly
    let head = simpson_adaptive(
        &|w: f64| p / (w.powf(p) + 1.0).sqrt(),
        0.0,
        head_end.powf(1.0 / p),
        tol,
    )?;
    if z <= 1.0 {
        return Ok(head);
    }
    // int_1^Z via v = e^t
    let tail = simpson_adaptive(
        &|t: f64| {
            let v = t.exp();
            v.powf(h + 0.5) / (v + 1.0).sqrt()
        },
        0.0,
        z.ln(),
        tol,
    )?;
    Ok(head + tail)
}

fn simpson_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 {
            return Err(Error::Quadrature("adaptive Simpson hit max depth".into()));
        }
        if delta.abs() <= 15.0 * tol {
            Ok(left + right + delta / 15.0)
        } else {
            Ok(step(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)?
                + step(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)?)
        }
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, fa, b, fb, whole, m, fm, tol, 40)
}

/// A chain covariance rescaled onto `(1/n) Z`: amplitudes scale with
/// `n^{-2H}`, indices with `1/n`.
#[derive(Debug, Clone)]
pub struct RescaledCovariance {
    pub n: usize,
    pub h: f64,
}

impl RescaledCovariance {
    /// Chain index for a macroscopic position `t` in `(-1, 1)`.
    pub fn site(&self, t: f64) -> i64 {
        (t * self.n as f64).floor() as i64
    }

    /// `Cov(phibar(s), phibar(t)) = n^{-2H} Cov(phi(ns), phi(nt))`.
    pub fn scale(&self, raw_cov: f64) -> f64 {
        raw_cov * (self.n as f64).powf(-2.0 * self.h)
    }
}

/// Scalar least-squares fit `empirical ~ K * target` with the max relative
/// residual on the fitted entries.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShapeFit {
    pub k: f64,
    pub residual: f64,
}

pub fn shape_fit(empirical: &[f64], target: &[f64]) -> Result<ShapeFit> {
    if empirical.len() != target.len() || empirical.is_empty() {
        return Err(Error::InvalidParameter("shape fit needs matched samples".into()));
    }
    let num: f64 = empirical.iter().zip(target).map(|(e, t)| e * t).sum();
    let den: f64 = target.iter().map(|t| t * t).sum();
    if den == 0.0 {
        return Err(Error::InvalidParameter("degenerate target".into()));
    }
    let k = num / den;
    let mut residual = 0.0f64;
    for (e, t) in empirical.iter().zip(target) {
        let fitted = k * t;
        residual = residual.max((e - fitted).abs() / fitted.abs().max(1e-300));
    }
    Ok(ShapeFit { k, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_cov_basics() {
        assert!((fbm_cov_free(0.5, 1.0, 2.0) - 1.0).abs() < 1e-14); // min(s, t)
        assert!((fbm_cov_free(0.3, 1.0, 1.0) - 1.0).abs() < 1e-14);
        assert_eq!(fbm_cov_free(0.3, 0.0, 2.0), 0.0);
    }

    #[test]
    fn free_cov_self_similarity_and_increments() {
        for &h in &[0.1, 0.25, 0.4] {
            for &(s, t) in &[(0.2, 0.7), (-0.5, 0.3), (1.0, 2.5)] {
                for &lam in &[0.5, 2.0, 7.0] {
                    let lhs = fbm_cov_free(h, lam * s, lam * t);
                    let rhs = lam.powf(2.0 * h) * fbm_cov_free(h, s, t);
                    assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
                }
                let incr = fbm_cov_free(h, s, s) + fbm_cov_free(h, t, t)
                    - 2.0 * fbm_cov_free(h, s, t);
                assert!(((t - s).abs().powf(2.0 * h) - incr).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dirichlet_cov_symmetries() {
        let h = 0.25;
        let a = fbm_cov_dirichlet(h, 1.0, 0.3, -0.2, 1e-12).unwrap();
        let b = fbm_cov_dirichlet(h, 1.0, -0.2, 0.3, 1e-12).unwrap();
        let c = fbm_cov_dirichlet(h, 1.0, -0.3, 0.2, 1e-12).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((a - c).abs() < 1e-12);
        // beta enters as 1/beta
        let d = fbm_cov_dirichlet(h, 4.0, 0.3, -0.2, 1e-12).unwrap();
        assert!((a / d - 4.0).abs() < 1e-10);
    }

    #[test]
    fn dirichlet_variance_profile_exponent() {
        // Var(x) ~ (1-x^2)^{2H} recovered by near-diagonal evaluation; the
        // kernel has an eps^{2H} cusp, so eps must be tiny
        let h = 0.25;
        let eps = 1e-7;
        let profile = |x: f64| fbm_cov_dirichlet(h, 1.0, x - eps, x + eps, 1e-11).unwrap();
        let pts: Vec<(f64, f64)> = [0.0, 0.3, 0.5, 0.7, 0.85]
            .iter()
            .map(|&x: &f64| ((1.0 - x * x).ln(), profile(x).ln()))
            .collect();
        let (slope, _) = crate::fit::linear_fit(&pts);
        assert!(
            (slope - 2.0 * h).abs() < 1e-3,
            "profile exponent {slope} vs {}",
            2.0 * h
        );
    }

    #[test]
    fn dirichlet_integral_against_closed_form_at_h_quarter() {
        // for H = 1/4 the integrand is (v(v+1))^{-1/2} sqrt(v)/v^{1/4}...
        // cross-check the quadrature against a slow Riemann evaluation
        let h = 0.25;
        let z = 3.7;
        let fine = {
            let m = 4_000_000;
            let mut acc = 0.0;
            for i in 0..m {
                let v = (i as f64 + 0.5) * z / m as f64;
                acc += (v + 1.0).powf(-0.5) * v.powf(h - 0.5);
            }
            acc * z / m as f64
        };
        let fast = boundary_integral(h, z, 1e-12).unwrap();
        assert!((fine - fast).abs() < 1e-5, "{fine} vs {fast}");
    }

    #[test]
    fn shape_fit_identity() {
        let e = vec![1.0, 2.0, 3.0];
        let fit = shape_fit(&e, &e).unwrap();
        assert!((fit.k - 1.0).abs() < 1e-14);
        assert!(fit.residual < 1e-14);
        let t = vec![0.5, 1.0, 1.5];
        let fit2 = shape_fit(&e, &t).unwrap();
        assert!((fit2.k - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rescaling_is_bilinear() {
        let r = RescaledCovariance { n: 64, h: 0.25 };
        let raw = 3.0;
        assert!((r.scale(raw) - raw * 64f64.powf(-0.5)).abs() < 1e-14);
        let r0 = RescaledCovariance { n: 64, h: 0.0 };
        assert_eq!(r0.scale(raw), raw);
    }
}
