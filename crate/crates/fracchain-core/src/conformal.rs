//! Conformal radius of the open square `(-1, 1)^2` via Jacobi elliptic
//! functions.
//!
//! The map `F(w) = sn(K (x + i(y + 1)), k)` sends the square conformally
//! onto the upper half-plane when the modulus `k` satisfies `K'/K = 2`
//! (nome `q = e^{-2 pi}`), because `sn` maps the rectangle
//! `(-K, K) x (0, K')` onto the half-plane. The conformal radius then
//! follows from `r(w) = 2 Im F / |F'|` with `F' = K cn dn`. Everything is
//! evaluated through rapidly converging theta series.

use num_complex::Complex64;

const Q: f64 = 1.867_442_731_707_988_7e-3; // e^{-2 pi}

fn theta1(z: Complex64, q: f64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 0..24u32 {
        let a = q.powf((n as f64 + 0.5) * (n as f64 + 0.5));
        let term = a * ((2.0 * n as f64 + 1.0) * z).sin();
        sum += if n % 2 == 0 { term } else { -term };
        if a < 1e-22 {
            break;
        }
    }
    2.0 * sum
}

fn theta2(z: Complex64, q: f64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 0..24u32 {
        let a = q.powf((n as f64 + 0.5) * (n as f64 + 0.5));
        sum += a * ((2.0 * n as f64 + 1.0) * z).cos();
        if a < 1e-22 {
            break;
        }
    }
    2.0 * sum
}

fn theta3(z: Complex64, q: f64) -> Complex64 {
    let mut sum = Complex64::new(1.0, 0.0);
    for n in 1..24u32 {
        let a = q.powi(n as i32 * n as i32);
        sum += 2.0 * a * ((2.0 * n as f64) * z).cos();
        if a < 1e-22 {
            break;
        }
    }
    sum
}

fn theta4(z: Complex64, q: f64) -> Complex64 {
    let mut sum = Complex64::new(1.0, 0.0);
    for n in 1..24u32 {
        let a = q.powi(n as i32 * n as i32);
        let term = 2.0 * a * ((2.0 * n as f64) * z).cos();
        sum += if n % 2 == 0 { term } else { -term };
        if a < 1e-22 {
            break;
        }
    }
    sum
}

fn theta_zero(q: f64) -> (f64, f64, f64) {
    let z = Complex64::new(0.0, 0.0);
    (theta2(z, q).re, theta3(z, q).re, theta4(z, q).re)
}

/// Jacobi sn, cn, dn at `u` for the nome `Q` (modulus with `K'/K = 2`).
fn jacobi(u: Complex64) -> (Complex64, Complex64, Complex64) {
    let (t2, t3, t4) = theta_zero(Q);
    let z = u / (t3 * t3);
    let th1 = theta1(z, Q);
    let th2 = theta2(z, Q);
    let th3 = theta3(z, Q);
    let th4 = theta4(z, Q);
    let sn = (t3 / t2) * th1 / th4;
    let cn = (t4 / t2) * th2 / th4;
    let dn = (t4 / t3) * th3 / th4;
    (sn, cn, dn)
}

/// Quarter period `K` of the `K'/K = 2` modulus.
fn quarter_period() -> f64 {
    let (_, t3, _) = theta_zero(Q);
    std::f64::consts::FRAC_PI_2 * t3 * t3
}

/// Conformal radius of `(-1, 1)^2` seen from the interior point `(x, y)`.
pub fn conformal_radius_square(x: f64, y: f64) -> f64 {
    assert!(
        x.abs() < 1.0 && y.abs() < 1.0,
        "point ({x}, {y}) outside the open square"
    );
    let k = quarter_period();
    let u = Complex64::new(k * x, k * (y + 1.0));
    let (sn, cn, dn) = jacobi(u);
    let fp = k * cn * dn;
    2.0 * sn.im / fp.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modulus_has_aspect_ratio_two() {
        // K'/K = -ln q / pi / ... with q = e^{-pi K'/K}
        let ratio = -(Q.ln()) / std::f64::consts::PI;
        assert!((ratio - 2.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_identities() {
        let (t2, t3, t4) = theta_zero(Q);
        let k2 = (t2 / t3).powi(4);
        for &(x, y) in &[(0.3, 0.1), (-0.5, 0.4), (0.0, 0.9), (0.7, -0.7)] {
            let kq = quarter_period();
            let u = Complex64::new(kq * x, kq * (y + 1.0));
            let (sn, cn, dn) = jacobi(u);
            let one = sn * sn + cn * cn;
            assert!((one - Complex64::new(1.0, 0.0)).norm() < 1e-10);
            let one2 = dn * dn + k2 * sn * sn;
            assert!((one2 - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        }
        let _ = t4;
    }

    #[test]
    fn square_map_hits_the_half_plane() {
        let kq = quarter_period();
        // interior points map to Im > 0; the bottom edge maps into the reals
        let (sn, _, _) = jacobi(Complex64::new(kq * 0.2, kq * 0.8));
        assert!(sn.im > 0.0);
        let (sn_edge, _, _) = jacobi(Complex64::new(kq * 0.5, 1e-9));
        assert!(sn_edge.im.abs() < 1e-6);
    }

    #[test]
    fn centre_value_matches_gamma_formula() {
        // r(0) = sqrt(2) / K4 with K4 = Gamma(1/4)^2 / (4 sqrt(2 pi)),
        // from the Schwarz-Christoffel disk-to-square map
        use statrs::function::gamma::gamma;
        let k4 = gamma(0.25) * gamma(0.5) / (4.0 * gamma(0.75));
        let expect = 2f64.sqrt() / k4;
        let got = conformal_radius_square(0.0, 0.0);
        assert!((got - expect).abs() < 1e-9, "got {got}, expect {expect}");
    }

    #[test]
    fn symmetries_and_boundary_decay() {
        let r1 = conformal_radius_square(0.3, 0.5);
        assert!((r1 - conformal_radius_square(-0.3, 0.5)).abs() < 1e-10);
        assert!((r1 - conformal_radius_square(0.3, -0.5)).abs() < 1e-10);
        assert!((r1 - conformal_radius_square(0.5, 0.3)).abs() < 1e-10);
        // shrinks towards the boundary, roughly like the distance
        let r_near = conformal_radius_square(0.0, 0.95);
        assert!(r_near < 0.25 && r_near > 0.05, "r_near = {r_near}");
    }
}
