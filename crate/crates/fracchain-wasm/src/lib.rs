//! Browser bindings for three interactive views: coupling-constant tails,
//! Bessel-walk return laws, and the rescaled chain covariance against the
//! Dirichlet fBm kernel. Each call returns a JSON payload the page plots on
//! a canvas; everything is deterministic given the seed.

use fracchain_core::bessel_walk::{
    diamond_trajectory, return_site_histogram, Geometry, WalkSpec,
};
use fracchain_core::couplings::{
    bessel_couplings, fourier_couplings, grid_bessel_couplings, power_law_couplings,
    spitzer_couplings, BesselCouplingParams,
};
use fracchain_core::fbm::{fbm_cov_dirichlet, hurst_from_alpha, shape_fit};
use fracchain_core::gaussian::chain_precision;
use wasm_bindgen::prelude::*;

fn err_json(e: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": format!("{e}") }).to_string()
}

/// Coupling sequence `J(r)` with its fitted tail exponent.
///
/// `source` is one of `spitzer`, `bessel-diamond`, `bessel-grid`,
/// `fourier`, `power-law`; `param` is `s`, `u` or `alpha` as appropriate.
#[wasm_bindgen]
pub fn coupling_curve(source: &str, param: f64, radius: usize) -> String {
    let radius = radius.clamp(32, 512);
    // browser-sized horizons: coarser truncation than the CLI defaults but
    // interactive
    let params = BesselCouplingParams {
        horizon: Some(if source == "bessel-grid" { 40_000 } else { 1 << 17 }),
        tail_tolerance: 1e-2,
        ..BesselCouplingParams::dp(param, radius)
    };
    let seq = match source {
        "spitzer" => spitzer_couplings(radius),
        "power-law" => power_law_couplings(param, radius),
        "fourier" => fourier_couplings(param, radius, 1 << 13),
        "bessel-diamond" => bessel_couplings(&params),
        "bessel-grid" => grid_bessel_couplings(1, &params),
        other => Err(fracchain_core::Error::InvalidParameter(format!(
            "unknown source {other}"
        ))),
    };
    let seq = match seq {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let fit = seq.tail_exponent_fit((radius / 16).max(8), radius).ok();
    let rs: Vec<f64> = (1..=seq.radius).map(|r| r as f64).collect();
    let js: Vec<f64> = (1..=seq.radius).map(|r| seq.j(r)).collect();
    serde_json::json!({
        "rs": rs,
        "js": js,
        "alpha": seq.alpha,
        "mass_at_zero": seq.mass_at_zero,
        "exponent": fit.as_ref().map(|f| f.exponent),
        "constant": fit.as_ref().map(|f| f.constant),
    })
    .to_string()
}

/// Return-site histogram of the diamond Bessel walk against the DP law,
/// plus one sample trajectory.
#[wasm_bindgen]
pub fn walk_demo(s: f64, seed: u64, samples: u32, radius: usize) -> String {
    let radius = radius.clamp(4, 64);
    let spec = WalkSpec {
        geometry: Geometry::Diamond,
        s,
        max_steps: 1 << 20,
        seed,
        reflect: false,
    };
    let hist = match return_site_histogram(&spec, samples as u64, radius) {
        Ok(h) => h,
        Err(e) => return err_json(e),
    };
    let dp = bessel_couplings(&BesselCouplingParams {
        horizon: Some(1 << 16),
        tail_tolerance: 1e-2,
        ..BesselCouplingParams::dp(s, radius)
    });
    let dp = match dp {
        Ok(d) => d,
        Err(e) => return err_json(e),
    };
    let trajectory = match diamond_trajectory(s, seed, 4000) {
        Ok(t) => t,
        Err(e) => return err_json(e),
    };
    let rs: Vec<f64> = (1..=radius).map(|r| r as f64).collect();
    let empirical: Vec<f64> = (1..=radius).map(|r| hist.frequency(r)).collect();
    let stderr: Vec<f64> = (1..=radius).map(|r| hist.stderr(r)).collect();
    let predicted: Vec<f64> = (1..=radius).map(|r| dp.j(r)).collect();
    serde_json::json!({
        "rs": rs,
        "empirical": empirical,
        "stderr": stderr,
        "predicted": predicted,
        "censored": hist.censored,
        "samples": hist.samples,
        "trajectory_x": trajectory.iter().map(|p| p.0).collect::<Vec<f64>>(),
        "trajectory_y": trajectory.iter().map(|p| p.1).collect::<Vec<f64>>(),
    })
    .to_string()
}

/// Rescaled Gaussian-chain covariance profile against the Dirichlet fBm
/// kernel, with the one-scalar shape fit.
#[wasm_bindgen]
pub fn fbm_compare(alpha: f64, n: usize) -> String {
    let n = n.clamp(32, 384);
    if !(2.0..3.0).contains(&alpha) || alpha == 2.0 {
        return err_json("alpha must lie in (2, 3)");
    }
    let h = hurst_from_alpha(alpha);
    let seq = match power_law_couplings(alpha, 2 * n + 2) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let factor = match chain_precision(&seq, n, 1.0).and_then(|p| p.factor()) {
        Ok(f) => f,
        Err(e) => return err_json(e),
    };
    let nf = n as f64;
    let scale = nf.powf(-2.0 * h);
    // covariance slice against the fixed anchor t = -0.4
    let anchor = -0.4;
    let col = factor.covariance_column((anchor * nf) as i64);
    let mut xs = Vec::new();
    let mut emp = Vec::new();
    let mut tgt = Vec::new();
    let mut t = -0.85;
    while t <= 0.85 {
        if (t - anchor).abs() > 0.08 {
            let e = scale * col[((t * nf) as i64 + n as i64) as usize];
            if let Ok(target) = fbm_cov_dirichlet(h, 1.0, anchor, t, 1e-9) {
                xs.push(t);
                emp.push(e);
                tgt.push(target);
            }
        }
        t += 0.025;
    }
    let fit = match shape_fit(&emp, &tgt) {
        Ok(f) => f,
        Err(e) => return err_json(e),
    };
    let fitted: Vec<f64> = tgt.iter().map(|&t| fit.k * t).collect();
    // variance profile across the interval
    let mut px = Vec::new();
    let mut pv = Vec::new();
    let mut x = -0.9;
    while x <= 0.9 {
        let k = (x * nf) as i64;
        pv.push(scale * factor.covariance_column(k)[(k + n as i64) as usize]);
        px.push(x);
        x += 0.05;
    }
    serde_json::json!({
        "anchor": anchor,
        "xs": xs,
        "empirical": emp,
        "fitted_target": fitted,
        "k": fit.k,
        "residual": fit.residual,
        "hurst": h,
        "profile_x": px,
        "profile_var": pv,
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payloads_parse_and_have_no_error() {
        for body in [
            coupling_curve("spitzer", 0.0, 64),
            coupling_curve("power-law", 2.5, 64),
            walk_demo(0.5, 7, 5_000, 16),
            fbm_compare(2.5, 64),
        ] {
            let v: serde_json::Value = serde_json::from_str(&body).unwrap();
            assert!(v.get("error").is_none(), "{body}");
        }
        let v: serde_json::Value =
            serde_json::from_str(&coupling_curve("no-such", 0.0, 64)).unwrap();
        assert!(v.get("error").is_some());
    }
}
