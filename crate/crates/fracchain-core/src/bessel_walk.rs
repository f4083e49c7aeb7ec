//! Bessel random walks.
//!
//! The vertical ingredient is a nearest-neighbour walk on the non-negative
//! integers with a drift of strength `s` towards the origin:
//!
//! * `Q_s(0, 1) = 1` (the walk is pushed off the origin),
//! * `Q_s(r, r+1) = max(1/2 - s/(4r), 1/4)` for `r >= 1`.
//!
//! Its first-return law decays like `n^{-(3+s)/2}`. Two planar walks are
//! built on top of it: the diamond walk, which moves both coordinates by
//! +-1/2 each step (the vertical one following `Q_s`), and the grid walk,
//! which flips a fair coin between a vertical Bessel move and a horizontal
//! simple-walk move. Their return-site laws furnish the long-range coupling
//! constants in [`crate::couplings`].
//!
//! Everything here works in doubled coordinates: diamond sites `(u, v)` with
//! `u + v` even stand for the plane points `(u/2, v/2)`, so heights and
//! horizontal positions are plain integers.

use crate::error::{Error, Result};
use crate::fit::{tail_fit, TailFit};
use crate::rng::{map_replicas, Stream};
use crate::stats::Kahan;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Vertical transition kernel `Q_s`.
#[derive(Debug, Clone, Copy)]
pub struct BesselKernel {
    pub s: f64,
}

impl BesselKernel {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > -1.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Bessel parameter must satisfy s > -1, got {s}"
            )));
        }
        Ok(BesselKernel { s })
    }

    /// Probability of the up-move `r -> r + 1`.
    pub fn up(&self, r: u64) -> f64 {
        if r == 0 {
            1.0
        } else {
            (0.5 - self.s / (4.0 * r as f64)).max(0.25)
        }
    }

    /// Probability of the down-move `r -> r - 1` (zero at the origin).
    pub fn down(&self, r: u64) -> f64 {
        if r == 0 {
            0.0
        } else {
            1.0 - self.up(r)
        }
    }
}

/// First-return law of the vertical walk: `g[n] = P(tau_0 = n)`, supported
/// on even `n <= horizon`.
#[derive(Debug, Clone)]
pub struct FirstReturnLaw {
    pub s: f64,
    g: Vec<f64>,
    pub horizon: usize,
    /// Mass still alive at the horizon: `1 - sum g - height_leak`.
    pub tail_mass: f64,
    /// Mass dropped at the height cap (kept far below any tolerance).
    pub height_leak: f64,
}

impl FirstReturnLaw {
    pub fn g(&self, n: usize) -> f64 {
        self.g.get(n).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.g
    }

    /// Sum of `g` over even times up to the horizon.
    pub fn returned_mass(&self) -> f64 {
        let mut k = Kahan::default();
        for &x in &self.g {
            k.add(x);
        }
        k.value()
    }

    /// Estimate of the constant `c` in `g(n) ~ c n^{-(3+s)/2}`, read off the
    /// plateau of `g(n) n^{(3+s)/2}` over the last decade of the horizon.
    pub fn plateau_constant(&self) -> f64 {
        let expo = (3.0 + self.s) / 2.0;
        let hi = self.horizon;
        let lo = (hi / 8).max(2);
        let mut sum = 0.0;
        let mut count = 0;
        let mut n = lo + (lo % 2);
        while n <= hi {
            sum += self.g(n) * (n as f64).powf(expo);
            count += 1;
            n += 2;
        }
        sum / count.max(1) as f64
    }

    /// Analytic tail estimate for the mass beyond time `t` using the plateau
    /// constant.
    pub fn tail_estimate(&self, t: usize) -> f64 {
        let expo = (3.0 + self.s) / 2.0;
        // sum over even n > t of c n^{-expo}, Euler-Maclaurin leading term
        self.plateau_constant() * (t as f64).powf(1.0 - expo) / (2.0 * (expo - 1.0))
    }

    /// Log-log fit of `g` over even times within the window.
    pub fn exponent_fit(&self, n_min: usize, n_max: usize) -> Result<TailFit> {
        let n_min = n_min + (n_min % 2);
        tail_fit(n_min / 2, n_max / 2, |half| self.g(2 * half))
    }
}

/// Exact DP for the first-return law up to `horizon` steps.
///
/// The mass vector lives on heights `1..=cap(t)`; the cap grows like
/// `6 sqrt(t)` plus a margin, and mass pushed above it is accounted in
/// `height_leak`.
pub fn first_return_law(s: f64, horizon: usize) -> Result<FirstReturnLaw> {
    let kernel = BesselKernel::new(s)?;
    if horizon < 2 || horizon % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "horizon must be even and >= 2, got {horizon}"
        )));
    }
    let hard_cap = ((6.0 * (horizon as f64).sqrt()) as usize + 64).min(horizon + 1);
    // up[r-1], down[r-1] = transition probabilities at height r
    let up: Vec<f64> = (1..=hard_cap as u64).map(|r| kernel.up(r)).collect();
    let mut mass = vec![0.0f64; hard_cap + 2];
    let mut next = vec![0.0f64; hard_cap + 2];
    let mut g = vec![0.0f64; horizon + 1];
    let mut leak = Kahan::default();

    // After the forced step 0 -> 1.
    mass[1] = 1.0;
    let mut max_h = 1usize;
    for t in 1..horizon {
        let cap = (((6.0 * (t as f64).sqrt()) as usize) + 64).min(hard_cap);
        let top = max_h.min(cap);
        for x in next[..=(top + 1).min(hard_cap + 1)].iter_mut() {
            *x = 0.0;
        }
        // Height 1: the down move is killed at the origin.
        let m1 = mass[1];
        if m1 > 0.0 {
            let u = up[0];
            g[t + 1] = m1 * (1.0 - u);
            next[2] += m1 * u;
        }
        for r in 2..=top {
            let m = mass[r];
            if m == 0.0 {
                continue;
            }
            let u = up[r - 1];
            next[r + 1] += m * u;
            next[r - 1] += m * (1.0 - u);
        }
        if top == cap && cap < hard_cap {
            // absorb anything that would climb past the cap
            let spill = next[cap + 1];
            if spill > 0.0 {
                leak.add(spill);
                next[cap + 1] = 0.0;
            }
        }
        std::mem::swap(&mut mass, &mut next);
        max_h = (top + 1).min(hard_cap);
    }

    let mut returned = Kahan::default();
    for &x in &g {
        returned.add(x);
    }
    let tail_mass = (1.0 - returned.value() - leak.value()).max(0.0);
    Ok(FirstReturnLaw {
        s,
        g,
        horizon,
        tail_mass,
        height_leak: leak.value(),
    })
}

/// Occupation probabilities `P[Y_t = 0]` of the vertical walk, from the
/// renewal convolution of the first-return law.
pub fn return_probability_profile(law: &FirstReturnLaw) -> Vec<f64> {
    let t_max = law.horizon;
    let mut u = vec![0.0f64; t_max + 1];
    u[0] = 1.0;
    for t in (2..=t_max).step_by(2) {
        let mut acc = 0.0;
        for k in (2..=t).step_by(2) {
            acc += law.g(k) * u[t - k];
        }
        u[t] = acc;
    }
    u
}

/// Walk geometry. `Grid { d }` is the `(d+1)`-dimensional walk with a fair
/// coin between one vertical Bessel move and a uniform horizontal move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Geometry {
    Diamond,
    Grid { d: usize },
}

/// Specification of a single simulated walk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkSpec {
    pub geometry: Geometry,
    pub s: f64,
    pub max_steps: u64,
    pub seed: u64,
    /// Reflect through the baseline with probability 1/2 at each departure
    /// instead of staying in the upper half-plane. The return law is
    /// unchanged; only signed trajectories differ.
    pub reflect: bool,
}

/// Outcome of one walk run until its first return to the baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkOutcome {
    /// Horizontal displacement at the first return, `None` if censored.
    pub site: Option<i64>,
    pub steps: u64,
    pub censored: bool,
}

/// Runs one walk to its first baseline return (or censoring).
pub fn simulate_walk(spec: &WalkSpec, rng: &mut Stream) -> Result<WalkOutcome> {
    let kernel = BesselKernel::new(spec.s)?;
    match spec.geometry {
        Geometry::Diamond => {
            let mut u: i64 = 0;
            let mut v: u64 = 0;
            for t in 1..=spec.max_steps {
                u += if rng.random::<bool>() { 1 } else { -1 };
                if v == 0 {
                    v = 1;
                } else if rng.random::<f64>() < kernel.up(v) {
                    v += 1;
                } else {
                    v -= 1;
                }
                if v == 0 {
                    return Ok(WalkOutcome {
                        site: Some(u / 2),
                        steps: t,
                        censored: false,
                    });
                }
            }
            Ok(WalkOutcome {
                site: None,
                steps: spec.max_steps,
                censored: true,
            })
        }
        Geometry::Grid { d } => {
            if d == 0 {
                return Err(Error::InvalidParameter("grid dimension must be >= 1".into()));
            }
            let mut x = vec![0i64; d];
            let mut y: u64 = 0;
            for t in 1..=spec.max_steps {
                if rng.random::<bool>() {
                    // vertical Bessel move
                    if y == 0 {
                        y = 1;
                    } else if rng.random::<f64>() < kernel.up(y) {
                        y += 1;
                    } else {
                        y -= 1;
                    }
                } else {
                    let dir = rng.random_range(0..2 * d);
                    let delta = if dir % 2 == 0 { 1 } else { -1 };
                    x[dir / 2] += delta;
                }
                if y == 0 {
                    let site = if d == 1 {
                        x[0]
                    } else {
                        // radial distance, rounded to the nearest integer shell
                        let norm2: i64 = x.iter().map(|&c| c * c).sum();
                        (norm2 as f64).sqrt().round() as i64
                    };
                    return Ok(WalkOutcome {
                        site: Some(site),
                        steps: t,
                        censored: false,
                    });
                }
            }
            Ok(WalkOutcome {
                site: None,
                steps: spec.max_steps,
                censored: true,
            })
        }
    }
}

/// Signed trajectory of a single diamond walk in plane coordinates, for
/// plotting. Stops at the first baseline return or after `max_steps`.
pub fn diamond_trajectory(s: f64, seed: u64, max_steps: u64) -> Result<Vec<(f64, f64)>> {
    let kernel = BesselKernel::new(s)?;
    let mut rng = crate::rng::stream(seed, 0);
    let mut u: i64 = 0;
    let mut v: i64 = 0;
    let mut sign: i64 = 1;
    let mut path = vec![(0.0, 0.0)];
    for _ in 0..max_steps {
        u += if rng.random::<bool>() { 1 } else { -1 };
        if v == 0 {
            sign = if rng.random::<bool>() { 1 } else { -1 };
            v = sign;
        } else if rng.random::<f64>() < kernel.up(v.unsigned_abs()) {
            v += sign;
        } else {
            v -= sign;
        }
        path.push((u as f64 / 2.0, v as f64 / 2.0));
        if v == 0 {
            break;
        }
    }
    Ok(path)
}

/// Histogram of first-return sites over `n_samples` walks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReturnHistogram {
    /// counts[r] = walks returning at |site| = r (index 0 is the origin).
    pub counts: Vec<u64>,
    pub beyond_radius: u64,
    pub censored: u64,
    pub samples: u64,
}

impl ReturnHistogram {
    /// Empirical per-site return frequency at distance `r >= 1` (the two
    /// sites +-r are pooled).
    pub fn frequency(&self, r: usize) -> f64 {
        if r == 0 {
            self.counts[0] as f64 / self.samples as f64
        } else {
            self.counts[r] as f64 / (2.0 * self.samples as f64)
        }
    }

    /// Binomial standard error of `frequency(r)`.
    pub fn stderr(&self, r: usize) -> f64 {
        let p = self.frequency(r);
        let n = if r == 0 {
            self.samples as f64
        } else {
            2.0 * self.samples as f64
        };
        (p * (1.0 - p) / n).sqrt()
    }
}

/// Simulates `n_samples` independent walks (parallel over replica batches,
/// merged in fixed order) and bins first-return sites by distance.
pub fn return_site_histogram(
    spec: &WalkSpec,
    n_samples: u64,
    radius: usize,
) -> Result<ReturnHistogram> {
    BesselKernel::new(spec.s)?;
    let batches = 64u64;
    let per_batch = n_samples.div_ceil(batches);
    let spec = spec.clone();
    let parts: Vec<Result<(Vec<u64>, u64, u64)>> = map_replicas(spec.seed, batches, |_, mut rng| {
        let mut counts = vec![0u64; radius + 1];
        let mut beyond = 0u64;
        let mut censored = 0u64;
        for _ in 0..per_batch {
            let out = simulate_walk(&spec, &mut rng)?;
            match out.site {
                Some(site) => {
                    let r = site.unsigned_abs() as usize;
                    if r <= radius {
                        counts[r] += 1;
                    } else {
                        beyond += 1;
                    }
                }
                None => censored += 1,
            }
        }
        Ok((counts, beyond, censored))
    });
    let mut counts = vec![0u64; radius + 1];
    let mut beyond = 0;
    let mut censored = 0;
    for part in parts {
        let (c, b, z) = part?;
        for (acc, x) in counts.iter_mut().zip(&c) {
            *acc += x;
        }
        beyond += b;
        censored += z;
    }
    Ok(ReturnHistogram {
        counts,
        beyond_radius: beyond,
        censored,
        samples: batches * per_batch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let k = BesselKernel::new(0.0).unwrap();
        assert_eq!(k.up(5), 0.5);
        assert_eq!(k.up(0), 1.0);
        let k1 = BesselKernel::new(1.0).unwrap();
        assert_eq!(k1.up(1), 0.25); // clamp binds exactly at s = 1, r = 1
        assert!(BesselKernel::new(-1.0).is_err());
    }

    #[test]
    fn first_return_small_values() {
        let law = first_return_law(0.0, 1 << 12).unwrap();
        assert!((law.g(2) - 0.5).abs() < 1e-15);
        // SRW first-return: P(tau = 2n) = C(2n, n) 2^{-2n} / (2n - 1)
        assert!((law.g(4) - 0.125).abs() < 1e-15);
        assert!((law.g(6) - 0.0625).abs() < 1e-15);
        let law5 = first_return_law(0.5, 1 << 12).unwrap();
        assert!((law5.g(2) - 0.625).abs() < 1e-15);
        // odd times carry no mass
        assert_eq!(law5.g(3), 0.0);
        assert_eq!(law5.g(1001), 0.0);
    }

    #[test]
    fn first_return_mass_accounting() {
        for &s in &[0.0, 0.3, 0.8] {
            let law = first_return_law(s, 1 << 14).unwrap();
            let total = law.returned_mass() + law.tail_mass + law.height_leak;
            assert!((total - 1.0).abs() < 1e-12, "s = {s}: total {total}");
            assert!(law.height_leak < 1e-9, "s = {s}: leak {}", law.height_leak);
        }
    }

    #[test]
    fn first_return_exponent() {
        for &s in &[0.0f64, 0.5] {
            let law = first_return_law(s, 1 << 16).unwrap();
            let fit = law.exponent_fit(1 << 12, 1 << 16).unwrap();
            let expected = (3.0 + s) / 2.0;
            assert!(
                (fit.exponent - expected).abs() < 0.05,
                "s = {s}: exponent {} vs {expected}",
                fit.exponent
            );
        }
    }

    #[test]
    fn recurrence_monotone_in_horizon() {
        let short = first_return_law(0.4, 1 << 10).unwrap();
        let long = first_return_law(0.4, 1 << 14).unwrap();
        assert!(long.returned_mass() > short.returned_mass());
        assert!(long.tail_mass < short.tail_mass);
        // fitted-constant tail estimate should bound the actual tail within a
        // modest factor
        let est = short.tail_estimate(1 << 10);
        assert!(est > 0.3 * short.tail_mass && est < 3.0 * short.tail_mass);
    }

    #[test]
    fn renewal_profile_basics() {
        let law = first_return_law(0.0, 1 << 12).unwrap();
        let u = return_probability_profile(&law);
        assert_eq!(u[0], 1.0);
        assert!((u[2] - 0.5).abs() < 1e-15);
        // decay exponent (1 - s)/2 = 1/2 for s = 0
        let fit = tail_fit(1 << 7, 1 << 11, |half| u[2 * half]).unwrap();
        assert!((fit.exponent - 0.5).abs() < 0.05, "exponent {}", fit.exponent);
    }

    #[test]
    fn walks_are_deterministic_given_seed() {
        let spec = WalkSpec {
            geometry: Geometry::Diamond,
            s: 0.3,
            max_steps: 100_000,
            seed: 42,
            reflect: false,
        };
        let a = simulate_walk(&spec, &mut crate::rng::stream(42, 0)).unwrap();
        let b = simulate_walk(&spec, &mut crate::rng::stream(42, 0)).unwrap();
        assert_eq!(a.site, b.site);
        assert_eq!(a.steps, b.steps);
    }

    #[test]
    fn diamond_returns_at_even_steps() {
        let spec = WalkSpec {
            geometry: Geometry::Diamond,
            s: 0.0,
            max_steps: 1 << 20,
            seed: 5,
            reflect: false,
        };
        let mut rng = crate::rng::stream(5, 3);
        for _ in 0..200 {
            let out = simulate_walk(&spec, &mut rng).unwrap();
            if !out.censored {
                assert_eq!(out.steps % 2, 0);
            }
        }
    }

    #[test]
    fn empirical_first_return_times_match_dp() {
        let s = 0.3;
        let law = first_return_law(s, 1 << 14).unwrap();
        let spec = WalkSpec {
            geometry: Geometry::Diamond,
            s,
            max_steps: 1 << 18,
            seed: 77,
            reflect: false,
        };
        let n_walks = 100_000u64;
        let mut counts = vec![0u64; 33];
        let mut rng = crate::rng::stream(77, 1);
        for _ in 0..n_walks {
            let out = simulate_walk(&spec, &mut rng).unwrap();
            if let Some(t) = (!out.censored).then_some(out.steps as usize) {
                if t < counts.len() {
                    counts[t] += 1;
                }
            }
        }
        for t in (2..=32usize).step_by(2) {
            let expected = law.g(t) * n_walks as f64;
            if expected < 100.0 {
                continue;
            }
            let sd = (expected * (1.0 - law.g(t))).sqrt();
            assert!(
                ((counts[t] as f64) - expected).abs() < 4.0 * sd,
                "t = {t}: {} vs {expected}",
                counts[t]
            );
            assert_eq!(counts[t - 1], 0, "odd times carry no returns");
        }
    }

    #[test]
    fn histogram_matches_dp_for_s0() {
        // spot-check MC frequencies against the exact first-return law of the
        // horizontal projection: diamond walk at s=0 has the Spitzer law
        let spec = WalkSpec {
            geometry: Geometry::Diamond,
            s: 0.0,
            max_steps: 1 << 22,
            seed: 9,
            reflect: false,
        };
        let hist = return_site_histogram(&spec, 200_000, 8).unwrap();
        let expect0 = 1.0 - 2.0 / std::f64::consts::PI;
        assert!(
            (hist.frequency(0) - expect0).abs() < 4.0 * hist.stderr(0).max(1e-4),
            "freq(0) = {} vs {expect0}",
            hist.frequency(0)
        );
        for r in 1..=5usize {
            let expect = 2.0 / (std::f64::consts::PI * (4.0 * (r * r) as f64 - 1.0));
            let err = hist.stderr(r).max(1e-5);
            assert!(
                (hist.frequency(r) - expect).abs() < 4.0 * err,
                "r = {r}: freq {} vs {expect}",
                hist.frequency(r)
            );
        }
    }
}
