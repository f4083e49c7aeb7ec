//! Numerical laboratory for long-range interface models.
//!
//! The crate builds the pieces needed to study one-dimensional chains with
//! long-range couplings `J(r) ~ r^{-alpha}` and their two-dimensional
//! realisations as killed random walks in height-dependent conductances:
//!
//! * [`couplings`] — coupling sequences by four independent routes (Spitzer
//!   closed form, Bessel-walk return laws on the diamond graph and on the
//!   grid, Fourier kernels, plain power laws) with tail-exponent fits.
//! * [`bessel_walk`] — the vertical Bessel kernel `Q_s`, its first-return
//!   law, renewal diagnostics and full walk simulators.
//! * [`lattice`] — lattice domains (boxes, tori, slit and smoothed-slit
//!   domains), conditioning sets (line, strip, fractal) and the
//!   height-dependent conductance field.
//! * [`solver`] — sparse solves on masked grids (CG and a multigrid
//!   preconditioner) backing all Green-function computations.
//! * [`gaussian`] — precision operators of long-range chains, exact
//!   covariances, killed-walk Green tables, Gaussian sampling and
//!   line-energy diagnostics.
//! * [`gibbs`] — heat-bath MCMC for integer-valued and sine-Gordon models,
//!   exact enumeration oracles and effective-temperature estimation.
//! * [`fbm`] — fractional-Brownian-motion reference covariances and shape
//!   fits against rescaled chain covariances.
//! * [`experiments`] — the config-driven experiment runner used by the CLI
//!   and the acceptance suite.
//!
//! All randomness flows through [`rng`]: ChaCha12 streams derived from a
//! `(seed, replica)` pair, so every result is bit-reproducible regardless of
//! thread count.

pub mod bessel_walk;
pub mod conformal;
pub mod couplings;
pub mod error;
pub mod experiments;
pub mod fbm;
pub mod fit;
pub mod gaussian;
pub mod gibbs;
pub mod lattice;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod svg;

pub use error::{Error, Result};
