//! Long-range coupling sequences `J(r)` by four independent routes.
//!
//! * [`spitzer_couplings`] — the exact closed form for the trace of the
//!   simple walk on the diamond graph: `J(r) = 2 / (pi (4 r^2 - 1))`, mass
//!   `1 - 2/pi` at the origin.
//! * [`bessel_couplings`] — return-site law of the diamond Bessel walk,
//!   either by exact dynamic programming (vertical first-return law summed
//!   against the horizontal heat kernel) or by seeded Monte Carlo.
//! * [`grid_bessel_couplings`] — return-site law of the grid walk that flips
//!   a fair coin between a vertical Bessel move and a horizontal simple-walk
//!   move; `d = 1` is exact DP, higher dimensions fall back to Monte Carlo.
//! * [`fourier_couplings`] — the kernel of `(1 - cos theta)^u` by numerical
//!   quadrature.
//! * [`power_law_couplings`] — the canonical `J(r) = r^{-alpha}`.
//!
//! A sequence carries its truncation accounting: `truncation_error` bounds
//! the total return mass not captured by the stored values (criteria on mass
//! normalization use it), while `value_truncation` bounds the error of each
//! individual `J(r)` (much smaller, since late returns spread their mass
//! over many sites).

use crate::bessel_walk::{
    first_return_law, return_site_histogram, Geometry, WalkSpec,
};
use crate::error::{Error, Result};
use crate::fit::{tail_fit, TailFit};
use crate::stats::Kahan;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingSource {
    Spitzer,
    BesselDiamond,
    BesselGrid,
    Fourier,
    PowerLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingMethod {
    Dp,
    MonteCarlo,
}

/// A long-range coupling sequence `r -> J(r)`, `1 <= r <= radius`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingSequence {
    pub alpha: f64,
    /// `s = alpha - 2`.
    pub s: f64,
    values: Vec<f64>,
    /// Return-to-start probability; present for walk-derived sequences.
    pub mass_at_zero: Option<f64>,
    pub radius: usize,
    /// Upper bound on the total omitted return mass (horizon tail, mass
    /// landing beyond `radius`, DP edge losses).
    pub truncation_error: f64,
    /// Upper bound on the omitted mass of each individual value.
    pub value_truncation: f64,
    pub source: CouplingSource,
    /// Monte Carlo standard errors, when applicable.
    pub stderr: Option<Vec<f64>>,
    /// Exact exterior row sum when the source provides one analytically.
    analytic_row_sum: Option<f64>,
}

impl CouplingSequence {
    /// `J(r)` for `r >= 1`; `J(0)` is the mass at zero (or 0 if absent).
    pub fn j(&self, r: usize) -> f64 {
        if r == 0 {
            self.mass_at_zero.unwrap_or(0.0)
        } else {
            self.values.get(r - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `sum_{j != i} J(|i - j|)` over the whole line: the Dirichlet-exterior
    /// diagonal mass of the chain precision operator.
    ///
    /// Walk-derived sequences use the exact identity
    /// `mass_at_zero + 2 sum_{r >= 1} J(r) = 1`; power-law and Fourier
    /// sources carry analytic sums.
    pub fn exterior_row_sum(&self) -> f64 {
        if let Some(s) = self.analytic_row_sum {
            return s;
        }
        if let Some(m0) = self.mass_at_zero {
            return 1.0 - m0;
        }
        let mut k = Kahan::default();
        for &v in &self.values {
            k.add(v);
        }
        2.0 * k.value()
    }

    /// `mass_at_zero + 2 sum J(r)` over the stored radius.
    pub fn stored_mass(&self) -> f64 {
        let mut k = Kahan::default();
        for &v in &self.values {
            k.add(2.0 * v);
        }
        k.add(self.mass_at_zero.unwrap_or(0.0));
        k.value()
    }

    /// Log-log tail fit over `[r_min, r_max]`.
    pub fn tail_exponent_fit(&self, r_min: usize, r_max: usize) -> Result<TailFit> {
        if r_max > self.radius || r_min >= r_max {
            return Err(Error::WindowTooSmall(format!(
                "window [{r_min}, {r_max}] outside stored radius {}",
                self.radius
            )));
        }
        tail_fit(r_min, r_max, |r| self.j(r))
    }

    fn check_monotone(&self) -> Result<()> {
        let tol = 4.0 * self.value_truncation
            + self
                .stderr
                .as_ref()
                .map(|e| 6.0 * e.iter().cloned().fold(0.0, f64::max))
                .unwrap_or(0.0)
            + 1e-13;
        for r in 2..self.radius {
            if self.j(r + 1) > self.j(r) + tol {
                return Err(Error::InvalidParameter(format!(
                    "coupling sequence not decreasing at r = {r}: {} -> {}",
                    self.j(r),
                    self.j(r + 1)
                )));
            }
        }
        Ok(())
    }
}

/// Exact Spitzer couplings `J(r) = 2 / (pi (4 r^2 - 1))`.
///
/// The reported truncation error is the analytic tail
/// `2 sum_{r > R} J(r) = 2 / (pi (2R + 1))` (telescoping).
pub fn spitzer_couplings(radius: usize) -> Result<CouplingSequence> {
    if radius < 1 {
        return Err(Error::InvalidParameter("radius must be >= 1".into()));
    }
    let values: Vec<f64> = (1..=radius)
        .map(|r| 2.0 / (PI * (4.0 * (r * r) as f64 - 1.0)))
        .collect();
    Ok(CouplingSequence {
        alpha: 2.0,
        s: 0.0,
        values,
        mass_at_zero: Some(1.0 - 2.0 / PI),
        radius,
        truncation_error: 2.0 / (PI * (2 * radius + 1) as f64),
        value_truncation: 0.0,
        source: CouplingSource::Spitzer,
        stderr: None,
        analytic_row_sum: Some(2.0 / PI),
    })
}

/// `J(r) = r^{-alpha}` with analytic zeta tails.
pub fn power_law_couplings(alpha: f64, radius: usize) -> Result<CouplingSequence> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "power law requires alpha > 1, got {alpha}"
        )));
    }
    if radius < 1 {
        return Err(Error::InvalidParameter("radius must be >= 1".into()));
    }
    let values: Vec<f64> = (1..=radius).map(|r| (r as f64).powf(-alpha)).collect();
    Ok(CouplingSequence {
        alpha,
        s: alpha - 2.0,
        values,
        mass_at_zero: None,
        radius,
        truncation_error: 0.0,
        value_truncation: 0.0,
        source: CouplingSource::PowerLaw,
        stderr: None,
        analytic_row_sum: Some(2.0 * hurwitz_zeta(alpha, 1.0)),
    })
}

/// Nearest-neighbour couplings (`J(1) = 1`, zero beyond), the comparison
/// point for the quadratic-form sandwich in the `alpha > 3` regime.
pub fn nearest_neighbour_couplings(radius: usize) -> CouplingSequence {
    let mut values = vec![0.0; radius.max(1)];
    values[0] = 1.0;
    CouplingSequence {
        alpha: f64::INFINITY,
        s: f64::INFINITY,
        values,
        mass_at_zero: None,
        radius: radius.max(1),
        truncation_error: 0.0,
        value_truncation: 0.0,
        source: CouplingSource::PowerLaw,
        stderr: None,
        analytic_row_sum: Some(2.0),
    }
}

/// Hurwitz zeta `sum_{k >= 0} (k + a)^{-alpha}` by Euler-Maclaurin.
pub fn hurwitz_zeta(alpha: f64, a: f64) -> f64 {
    let cut = 40usize;
    let mut sum = Kahan::default();
    for k in 0..cut {
        sum.add((a + k as f64).powf(-alpha));
    }
    let n = a + cut as f64;
    // integral term + boundary corrections
    let tail = n.powf(1.0 - alpha) / (alpha - 1.0) + 0.5 * n.powf(-alpha)
        + alpha * n.powf(-alpha - 1.0) / 12.0
        - alpha * (alpha + 1.0) * (alpha + 2.0) * n.powf(-alpha - 3.0) / 720.0;
    sum.value() + tail
}

/// Parameters for the walk-derived coupling constructions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BesselCouplingParams {
    pub s: f64,
    pub radius: usize,
    /// Time horizon of the walk (even). `None` picks the default `2^20` for
    /// the diamond walk and `3 * 10^5` vertical steps for the grid walk.
    pub horizon: Option<usize>,
    /// Bound the per-value truncation must satisfy; the run fails with
    /// `HorizonTooSmall` otherwise.
    pub tail_tolerance: f64,
    pub method: CouplingMethod,
    /// Monte Carlo sample count.
    pub samples: u64,
    pub seed: u64,
}

impl BesselCouplingParams {
    pub fn dp(s: f64, radius: usize) -> Self {
        BesselCouplingParams {
            s,
            radius,
            horizon: None,
            tail_tolerance: 1e-4,
            method: CouplingMethod::Dp,
            samples: 0,
            seed: 0,
        }
    }

    pub fn monte_carlo(s: f64, radius: usize, samples: u64, seed: u64) -> Self {
        BesselCouplingParams {
            s,
            radius,
            horizon: None,
            tail_tolerance: 1e-2,
            method: CouplingMethod::MonteCarlo,
            samples,
            seed,
        }
    }
}

fn validate_s(s: f64) -> Result<()> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::InvalidParameter(format!(
            "coupling constructions require s in [0, 1), got {s}"
        )));
    }
    Ok(())
}

/// Return-site law of the diamond Bessel walk.
pub fn bessel_couplings(params: &BesselCouplingParams) -> Result<CouplingSequence> {
    validate_s(params.s)?;
    match params.method {
        CouplingMethod::Dp => diamond_dp(params),
        CouplingMethod::MonteCarlo => {
            let spec = WalkSpec {
                geometry: Geometry::Diamond,
                s: params.s,
                max_steps: params.horizon.unwrap_or(1 << 24) as u64,
                seed: params.seed,
                reflect: false,
            };
            monte_carlo_couplings(&spec, params, CouplingSource::BesselDiamond)
        }
    }
}

fn diamond_dp(params: &BesselCouplingParams) -> Result<CouplingSequence> {
    let radius = params.radius;
    if radius < 1 {
        return Err(Error::InvalidParameter("radius must be >= 1".into()));
    }
    let horizon = params.horizon.unwrap_or(1 << 20);
    let law = first_return_law(params.s, horizon)?;
    let n_max = horizon / 2;

    // Symmetric horizontal heat kernel in r-units: p[r] = P(S_{2n} = 2r).
    let x_cap = radius + (4.0 * (n_max as f64).sqrt()).ceil() as usize + 64;
    let mut p = vec![0.0f64; x_cap + 2];
    let mut q = vec![0.0f64; x_cap + 2];
    p[0] = 1.0;

    let mut j = vec![0.0f64; radius + 1];
    let mut m0 = Kahan::default();
    let mut far = Kahan::default();
    let mut absorbed = Kahan::default();
    let mut top = 0usize;
    for n in 1..=n_max {
        let new_top = (top + 1).min(x_cap);
        q[0] = 0.5 * p[0] + 0.5 * p[1];
        for r in 1..=new_top {
            q[r] = 0.5 * p[r] + 0.25 * (p[r - 1] + p[r + 1]);
        }
        if new_top == x_cap {
            // mass that would step past the cap
            absorbed.add(2.0 * 0.25 * p[x_cap]);
        }
        std::mem::swap(&mut p, &mut q);
        top = new_top;

        let g = law.g(2 * n);
        if g > 0.0 {
            m0.add(g * p[0]);
            let mut in_range = p[0];
            let lim = radius.min(top);
            for r in 1..=lim {
                j[r] += g * p[r];
                in_range += 2.0 * p[r];
            }
            far.add(g * (1.0 - in_range).max(0.0));
        }
    }

    let value_truncation =
        law.tail_mass / (PI * n_max as f64).sqrt() + absorbed.value() + law.height_leak;
    if value_truncation > params.tail_tolerance {
        return Err(Error::HorizonTooSmall(format!(
            "value truncation {value_truncation:.3e} exceeds tolerance {:.1e} at horizon {horizon}",
            params.tail_tolerance
        )));
    }
    let truncation_error =
        law.tail_mass + law.height_leak + far.value() + absorbed.value();
    let seq = CouplingSequence {
        alpha: 2.0 + params.s,
        s: params.s,
        values: j[1..].to_vec(),
        mass_at_zero: Some(m0.value()),
        radius,
        truncation_error,
        value_truncation,
        source: CouplingSource::BesselDiamond,
        stderr: None,
        analytic_row_sum: None,
    };
    seq.check_monotone()?;
    Ok(seq)
}

/// Return-site law of the grid Bessel walk on `Z^{d+1}`.
///
/// `d = 1` runs the exact decomposition: returns at the very first step land
/// at distance one with probability 1/4 per side, and a vertical excursion
/// of `v` Bessel steps carries `v - 1` geometric batches of horizontal
/// moves, each displacing by the two-sided geometric kernel
/// `K(j) = 3^{-1/2} (2 - sqrt 3)^{|j|}`. Higher `d` uses Monte Carlo with
/// shell-averaged per-site frequencies.
pub fn grid_bessel_couplings(
    d: usize,
    params: &BesselCouplingParams,
) -> Result<CouplingSequence> {
    validate_s(params.s)?;
    if d == 0 {
        return Err(Error::InvalidParameter("grid dimension must be >= 1".into()));
    }
    if d == 1 && params.method == CouplingMethod::Dp {
        return grid_dp_1d(params);
    }
    if params.method == CouplingMethod::Dp {
        return Err(Error::InvalidParameter(
            "exact DP for grid couplings is available only for d = 1; use Monte Carlo".into(),
        ));
    }
    let spec = WalkSpec {
        geometry: Geometry::Grid { d },
        s: params.s,
        max_steps: params.horizon.unwrap_or(1 << 24) as u64,
        seed: params.seed,
        reflect: false,
    };
    monte_carlo_couplings(&spec, params, CouplingSource::BesselGrid)
}

/// Convolves a symmetric signal (`w[j]`, `j >= 0`, standing for `w[|j|]`)
/// with the two-sided geometric kernel `K(j) = c rho^{|j|}` in place, via
/// forward/backward first-order recursions. Exact up to roundoff; mass
/// diffusing past the end of the array is dropped.
fn geometric_filter(w: &mut [f64], back: &mut [f64], rho: f64, c: f64) {
    let n = w.len();
    // tail sum S1 = sum_{i >= 1} rho^i w[i] feeds the forward recursion with
    // the contribution of the mirrored negative half-line
    let mut t = 0.0;
    for i in (1..n).rev() {
        t = w[i] + rho * t;
    }
    let s1 = rho * t;
    back[n - 1] = w[n - 1];
    for j in (0..n - 1).rev() {
        back[j] = w[j] + rho * back[j + 1];
    }
    let mut fwd = w[0] + s1;
    w[0] = c * (fwd + back[0] - w[0]);
    for j in 1..n {
        let wj = w[j];
        fwd = wj + rho * fwd;
        w[j] = c * (fwd + back[j] - wj);
    }
}

fn grid_dp_1d(params: &BesselCouplingParams) -> Result<CouplingSequence> {
    let radius = params.radius;
    if radius < 1 {
        return Err(Error::InvalidParameter("radius must be >= 1".into()));
    }
    let v_max = params.horizon.unwrap_or(300_000);
    let law = first_return_law(params.s, v_max + (v_max % 2))?;

    // One geometric batch of horizontal moves displaces by
    // K(j) = 3^{-1/2} (2 - sqrt 3)^{|j|}; W_v = K^{*(v-1)}.
    let rho = 2.0 - 3.0f64.sqrt();
    let c = 1.0 / 3.0f64.sqrt();

    let x_cap = radius + (5.0 * (v_max as f64).sqrt()).ceil() as usize + 96;
    // w[j] = W_v(j) for j >= 0 (symmetric); start at v = 2 with W_2 = K.
    let mut w = vec![0.0f64; x_cap + 1];
    for (j, slot) in w.iter_mut().enumerate() {
        *slot = c * rho.powi(j as i32);
    }
    let mut back = vec![0.0f64; x_cap + 1];
    let sym_mass = |w: &[f64]| -> f64 {
        let mut k = Kahan::default();
        for &x in &w[1..] {
            k.add(2.0 * x);
        }
        k.add(w[0]);
        k.value()
    };
    let mut absorbed = (1.0 - sym_mass(&w)).max(0.0);

    let mut j_acc = vec![0.0f64; radius + 1];
    let mut m0 = Kahan::default();
    let mut far = Kahan::default();

    let mut v = 2usize;
    let mut carried = 1.0 - absorbed;
    while v <= v_max {
        let g = law.g(v);
        if g > 0.0 {
            m0.add(0.5 * g * w[0]);
            let mut in_range = w[0];
            for r in 1..=radius.min(x_cap) {
                j_acc[r] += 0.5 * g * w[r];
                in_range += 2.0 * w[r];
            }
            far.add(0.5 * g * (carried - in_range).max(0.0));
        }
        // advance two vertical steps: W <- W * K * K
        geometric_filter(&mut w, &mut back, rho, c);
        geometric_filter(&mut w, &mut back, rho, c);
        let mass = sym_mass(&w);
        absorbed += (carried - mass).max(0.0);
        carried = mass;
        v += 2;
    }

    // immediate horizontal return: first step horizontal lands at +-1
    if radius >= 1 {
        j_acc[1] += 0.25;
    }

    let tail = law.tail_mass + law.height_leak;
    let value_truncation = 0.5 * tail / (2.0 * PI * v_max as f64).sqrt().max(1.0) + absorbed;
    if value_truncation > params.tail_tolerance {
        return Err(Error::HorizonTooSmall(format!(
            "value truncation {value_truncation:.3e} exceeds tolerance {:.1e} at vertical horizon {v_max}",
            params.tail_tolerance
        )));
    }
    let seq = CouplingSequence {
        alpha: 2.0 + params.s,
        s: params.s,
        values: j_acc[1..].to_vec(),
        mass_at_zero: Some(m0.value()),
        radius,
        truncation_error: 0.5 * tail + far.value() + absorbed,
        value_truncation,
        source: CouplingSource::BesselGrid,
        stderr: None,
        analytic_row_sum: None,
    };
    seq.check_monotone()?;
    Ok(seq)
}

fn monte_carlo_couplings(
    spec: &WalkSpec,
    params: &BesselCouplingParams,
    source: CouplingSource,
) -> Result<CouplingSequence> {
    if params.samples == 0 {
        return Err(Error::InvalidParameter(
            "Monte Carlo construction needs samples > 0".into(),
        ));
    }
    let hist = return_site_histogram(spec, params.samples, params.radius)?;
    let shell_sizes: Vec<f64> = match spec.geometry {
        Geometry::Diamond | Geometry::Grid { d: 1 } => {
            (0..=params.radius).map(|r| if r == 0 { 1.0 } else { 2.0 }).collect()
        }
        Geometry::Grid { d } => (0..=params.radius).map(|r| shell_count(d, r) as f64).collect(),
    };
    let n = hist.samples as f64;
    let mut values = Vec::with_capacity(params.radius);
    let mut stderr = Vec::with_capacity(params.radius);
    for r in 1..=params.radius {
        let freq = hist.counts[r] as f64 / n;
        values.push(freq / shell_sizes[r]);
        stderr.push((freq * (1.0 - freq) / n).sqrt() / shell_sizes[r]);
    }
    let censored_frac = hist.censored as f64 / n;
    Ok(CouplingSequence {
        alpha: 2.0 + params.s,
        s: params.s,
        values,
        mass_at_zero: Some(hist.counts[0] as f64 / n),
        radius: params.radius,
        truncation_error: censored_frac + hist.beyond_radius as f64 / n,
        value_truncation: censored_frac,
        source,
        stderr: Some(stderr),
        analytic_row_sum: None,
    })
}

/// Number of sites of `Z^d` whose Euclidean norm rounds to `r`.
fn shell_count(d: usize, r: usize) -> usize {
    if r == 0 {
        return 1;
    }
    match d {
        1 => 2,
        2 => {
            let mut count = 0usize;
            let hi = r as i64 + 1;
            for x in -hi..=hi {
                for y in -hi..=hi {
                    let norm = ((x * x + y * y) as f64).sqrt().round() as usize;
                    if norm == r {
                        count += 1;
                    }
                }
            }
            count
        }
        _ => {
            // rough volume-shell estimate; MC for d >= 3 is exploratory only
            let rf = r as f64;
            let unit_ball = match d {
                3 => 4.0 * PI / 3.0,
                _ => PI.powf(d as f64 / 2.0) / statrs::function::gamma::gamma(d as f64 / 2.0 + 1.0),
            };
            (unit_ball * ((rf + 0.5).powi(d as i32) - (rf - 0.5).powi(d as i32))).round() as usize
        }
    }
}

/// Fourier-route couplings `J(r) = -(1/2pi) int (1 - cos t)^u cos(rt) dt`.
pub fn fourier_couplings(u: f64, radius: usize, quadrature_points: usize) -> Result<CouplingSequence> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fourier couplings require u in (0, 1], got {u}"
        )));
    }
    if radius < 1 {
        return Err(Error::InvalidParameter("radius must be >= 1".into()));
    }
    let tol = 1e-13;
    let mut values = Vec::with_capacity(radius);
    for r in 1..=radius {
        // -(1/pi) int_0^pi (1 - cos t)^u cos(rt) dt, split at the cosine
        // extrema so the adaptive rule sees one hump at a time
        let f = |t: f64| (1.0 - t.cos()).powf(u) * ((r as f64) * t).cos();
        let mut acc = 0.0;
        let pieces = r.max(1);
        for k in 0..pieces {
            let a = PI * k as f64 / pieces as f64;
            let b = PI * (k + 1) as f64 / pieces as f64;
            acc += adaptive_simpson(&f, a, b, tol / pieces as f64, quadrature_points)?;
        }
        let j = -acc / PI;
        if j < -1e-10 {
            return Err(Error::Quadrature(format!(
                "negative coupling J({r}) = {j:.3e} signals quadrature failure"
            )));
        }
        values.push(j.max(0.0));
    }
    // diagonal symbol mass: (1/pi) int_0^pi (1 - cos t)^u dt equals the
    // exterior row sum because the symbol vanishes at frequency zero
    let diag = adaptive_simpson(&|t: f64| (1.0 - t.cos()).powf(u), 0.0, PI, tol, quadrature_points)? / PI;
    let seq = CouplingSequence {
        alpha: 2.0 * u + 1.0,
        s: 2.0 * u - 1.0,
        values,
        mass_at_zero: None,
        radius,
        truncation_error: 0.0,
        value_truncation: 1e-11,
        source: CouplingSource::Fourier,
        stderr: None,
        analytic_row_sum: Some(diag),
    };
    Ok(seq)
}

/// Adaptive Simpson with an evaluation budget.
fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    max_evals: usize,
) -> Result<f64> {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
        evals: &mut usize,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        *evals += 2;
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1, evals)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1, evals)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    let mut evals = 3usize;
    let out = recurse(f, a, fa, b, fb, whole, m, fm, tol, 48, &mut evals);
    if evals > max_evals.max(1 << 12) {
        return Err(Error::Quadrature(format!(
            "adaptive rule used {evals} evaluations, budget {max_evals}"
        )));
    }
    Ok(out)
}

/// Log-log least-squares tail fit of a coupling sequence.
pub fn tail_exponent_fit(seq: &CouplingSequence, r_min: usize, r_max: usize) -> Result<TailFit> {
    seq.tail_exponent_fit(r_min, r_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spitzer_exact_values() {
        let seq = spitzer_couplings(64).unwrap();
        assert!((seq.j(1) - 2.0 / (3.0 * PI)).abs() < 1e-15);
        assert!((seq.mass_at_zero.unwrap() - (1.0 - 2.0 / PI)).abs() < 1e-15);
        // telescoping: stored mass + tail = 1
        assert!((seq.stored_mass() + seq.truncation_error - 1.0).abs() < 1e-12);
        assert!((seq.exterior_row_sum() - 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn spitzer_tail_exponent_near_two() {
        let seq = spitzer_couplings(128).unwrap();
        let fit = seq.tail_exponent_fit(8, 128).unwrap();
        assert!((fit.exponent - 2.0).abs() < 0.05, "exponent {}", fit.exponent);
    }

    #[test]
    fn power_law_basics() {
        let seq = power_law_couplings(2.5, 32).unwrap();
        assert!((seq.j(1) - 1.0).abs() < 1e-15);
        let seq2 = power_law_couplings(2.0, 8).unwrap();
        assert!((seq2.j(2) - 0.25).abs() < 1e-15);
        let fit = power_law_couplings(3.5, 256)
            .unwrap()
            .tail_exponent_fit(8, 256)
            .unwrap();
        assert!((fit.exponent - 3.5).abs() < 1e-6);
        assert!(power_law_couplings(1.0, 8).is_err());
    }

    #[test]
    fn hurwitz_zeta_matches_reference() {
        // zeta(2) = pi^2/6, zeta(2.5) = 1.341487257250917...
        assert!((hurwitz_zeta(2.0, 1.0) - PI * PI / 6.0).abs() < 1e-12);
        assert!((hurwitz_zeta(2.5, 1.0) - 1.341_487_257_250_917).abs() < 1e-12);
        // shift identity: zeta(a, 1) - 1 = zeta(a, 2)
        assert!((hurwitz_zeta(3.0, 1.0) - 1.0 - hurwitz_zeta(3.0, 2.0)).abs() < 1e-14);
    }

    #[test]
    fn bessel_dp_s0_matches_spitzer() {
        let params = BesselCouplingParams {
            horizon: Some(1 << 18),
            ..BesselCouplingParams::dp(0.0, 32)
        };
        let seq = bessel_couplings(&params).unwrap();
        let spitzer = spitzer_couplings(32).unwrap();
        let budget = seq.value_truncation;
        assert!(budget < 1e-4, "budget {budget}");
        assert!(
            (seq.mass_at_zero.unwrap() - spitzer.mass_at_zero.unwrap()).abs() <= budget,
            "m0 {} vs {}",
            seq.mass_at_zero.unwrap(),
            spitzer.mass_at_zero.unwrap()
        );
        for r in 1..=20 {
            assert!(
                (seq.j(r) - spitzer.j(r)).abs() <= budget,
                "r = {r}: {} vs {}",
                seq.j(r),
                spitzer.j(r)
            );
        }
    }

    #[test]
    fn bessel_dp_mass_accounting() {
        let params = BesselCouplingParams {
            horizon: Some(1 << 16),
            ..BesselCouplingParams::dp(0.5, 64)
        };
        let seq = bessel_couplings(&params).unwrap();
        let total = seq.stored_mass() + seq.truncation_error;
        assert!((total - 1.0).abs() < 1e-9, "total {total}");
        assert!(seq.exterior_row_sum() > 0.0 && seq.exterior_row_sum() < 1.0);
    }

    #[test]
    fn grid_dp_matches_full_plane_dp() {
        // independent oracle: exact DP of the full (x, y) walk up to a
        // finite time, which bounds the omitted mass by the vertical tail
        let t_max = 4000usize;
        let x_max = 260usize;
        let y_max = 140usize;
        let kernel = crate::bessel_walk::BesselKernel::new(0.5).unwrap();
        let width = 2 * x_max + 1;
        let idx = |x: i64, y: usize| (y * width) + (x + x_max as i64) as usize;
        let mut cur = vec![0.0f64; width * (y_max + 1)];
        let mut nxt = vec![0.0f64; width * (y_max + 1)];
        let mut j = vec![0.0f64; x_max + 1];
        let mut m0 = 0.0;
        cur[idx(0, 0)] = 1.0;
        for _t in 1..=t_max {
            for v in nxt.iter_mut() {
                *v = 0.0;
            }
            let mut killed = vec![0.0f64; width];
            for y in 0..=y_max {
                for x in -(x_max as i64)..=(x_max as i64) {
                    let m = cur[idx(x, y)];
                    if m == 0.0 {
                        continue;
                    }
                    // horizontal with prob 1/2 (1/4 each side)
                    if x > -(x_max as i64) {
                        let target = 0.25 * m;
                        if y == 0 {
                            killed[(x - 1 + x_max as i64) as usize] += target;
                        } else {
                            nxt[idx(x - 1, y)] += target;
                        }
                    }
                    if x < x_max as i64 {
                        let target = 0.25 * m;
                        if y == 0 {
                            killed[(x + 1 + x_max as i64) as usize] += target;
                        } else {
                            nxt[idx(x + 1, y)] += target;
                        }
                    }
                    // vertical with prob 1/2
                    if y == 0 {
                        nxt[idx(x, 1)] += 0.5 * m;
                    } else {
                        let up = kernel.up(y as u64);
                        if y + 1 <= y_max {
                            nxt[idx(x, y + 1)] += 0.5 * m * up;
                        }
                        let down = 0.5 * m * (1.0 - up);
                        if y == 1 {
                            killed[(x + x_max as i64) as usize] += down;
                        } else {
                            nxt[idx(x, y - 1)] += down;
                        }
                    }
                }
            }
            for (i, &k) in killed.iter().enumerate() {
                if k > 0.0 {
                    let x = i as i64 - x_max as i64;
                    if x == 0 {
                        m0 += k;
                    } else if x.unsigned_abs() as usize <= x_max {
                        j[x.unsigned_abs() as usize] += 0.5 * k;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut nxt);
        }

        let params = BesselCouplingParams {
            horizon: Some(3000),
            ..BesselCouplingParams::dp(0.5, 32)
        };
        let seq = grid_bessel_couplings(1, &params).unwrap();
        // both computations truncate; returns after ~2000 vertical steps are
        // missing from the oracle, so compare to its own leftover mass
        let alive: f64 = cur.iter().sum();
        let tol = alive + seq.value_truncation + 1e-10;
        assert!(
            (seq.mass_at_zero.unwrap() - m0).abs() < tol,
            "m0 {} vs oracle {m0} (tol {tol})",
            seq.mass_at_zero.unwrap()
        );
        for r in 1..=8usize {
            assert!(
                (seq.j(r) - j[r]).abs() < tol,
                "r = {r}: {} vs oracle {} (tol {tol})",
                seq.j(r),
                j[r]
            );
        }
        assert!((seq.j(1) - 0.25) > 0.0, "immediate return dominates J(1)");
    }

    #[test]
    fn grid_dp_mass_accounting() {
        let params = BesselCouplingParams {
            horizon: Some(60_000),
            ..BesselCouplingParams::dp(0.0, 64)
        };
        let seq = grid_bessel_couplings(1, &params).unwrap();
        let total = seq.stored_mass() + seq.truncation_error;
        assert!((total - 1.0).abs() < 1e-6, "total {total}");
    }

    #[test]
    fn fourier_u1_is_nearest_neighbour() {
        let seq = fourier_couplings(1.0, 8, 1 << 14).unwrap();
        assert!((seq.j(1) - 0.5).abs() < 1e-10, "J(1) = {}", seq.j(1));
        for r in 2..=8 {
            assert!(seq.j(r).abs() < 1e-10, "J({r}) = {}", seq.j(r));
        }
        assert!((seq.exterior_row_sum() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fourier_matches_gamma_ratio_oracle() {
        // independent closed form for the (1 - cos)^u kernel:
        // J(r) = 4^u Gamma(u + 1/2) / (sqrt(pi) |Gamma(-u)|)
        //        * Gamma(r - u) / Gamma(r + 1 + u)
        use statrs::function::gamma::ln_gamma;
        let u = 0.75f64;
        let seq = fourier_couplings(u, 64, 1 << 14).unwrap();
        // our symbol is (1 - cos t)^u = (2 - 2 cos t)^u / 2^u, hence the 2^u
        // in place of the literature's 4^u
        let ln_pref = u * 2.0f64.ln() + ln_gamma(u + 0.5) - 0.5 * PI.ln();
        // |Gamma(-u)| = pi / (sin(pi u) u Gamma(u)) via reflection
        let ln_abs_gamma_minus_u =
            PI.ln() - ((PI * u).sin().abs() * u).ln() - ln_gamma(u);
        for r in [1usize, 2, 5, 16, 64] {
            let rf = r as f64;
            let expect = (ln_pref - ln_abs_gamma_minus_u + ln_gamma(rf - u) - ln_gamma(rf + 1.0 + u)).exp();
            assert!(
                (seq.j(r) - expect).abs() < 1e-9 * expect.max(1e-6),
                "r = {r}: {} vs {expect}",
                seq.j(r)
            );
        }
    }

    #[test]
    fn fourier_tail_picks_the_lower_candidate_exponent() {
        // two candidate dictionaries for the (1 - cos)^u kernel tail give
        // exponents 2u + 1 and 2u + 2; the fit settles the question
        let u = 0.75;
        let seq = fourier_couplings(u, 512, 1 << 14).unwrap();
        let fit = seq.tail_exponent_fit(32, 512).unwrap();
        let low = 2.0 * u + 1.0;
        let high = 2.0 * u + 2.0;
        assert!(
            (fit.exponent - low).abs() < 0.1,
            "exponent {} should sit at {low}",
            fit.exponent
        );
        assert!((fit.exponent - high).abs() > 0.5);
    }

    #[test]
    fn tail_fit_window_validation() {
        let seq = power_law_couplings(2.5, 128).unwrap();
        assert!(seq.tail_exponent_fit(8, 256).is_err(), "window beyond radius");
        assert!(seq.tail_exponent_fit(32, 64).is_err(), "too few points");
        assert!(seq.tail_exponent_fit(8, 128).is_ok());
    }
}
