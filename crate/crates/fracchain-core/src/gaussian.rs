//! Exact linear algebra for the Gaussian side: precision operators of
//! long-range chains, their covariances, killed-walk Green functions on 2D
//! domains, Gaussian sampling and shift/line-energy diagnostics.
//!
//! Conventions. The chain Hamiltonian is the double-counted pair sum
//! `(beta/2) sum_{i,j} J(|i-j|)(phi_i - phi_j)^2`, so the precision matrix
//! is `P = beta (2 S I - 2 J)` with `S` the full-line exterior row sum. The
//! matching 2D convention weights every ordered adjacent pair, giving the
//! precision `2 beta L_a` for conductances `a`. Green tables are plain
//! expected-visit counts of the killed walk (no `beta`); restricted to the
//! baseline, the trace identity reads `G_line = 2 beta Cov_chain`.

use crate::couplings::{BesselCouplingParams, CouplingSequence};
use crate::error::{Error, Result};
use crate::lattice::{conductance_field, with_conductances, DomainKind, LatticeDomain};
use crate::rng::Stream;
use crate::solver::{GridSolver, SolveStats};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Dense precision matrix of a long-range chain on `{-n..n}` with Dirichlet
/// exterior.
pub struct ChainPrecision {
    pub n: usize,
    pub beta: f64,
    matrix: DMatrix<f64>,
}

pub fn chain_precision(seq: &CouplingSequence, n: usize, beta: f64) -> Result<ChainPrecision> {
    if beta <= 0.0 {
        return Err(Error::InvalidParameter("beta must be positive".into()));
    }
    if seq.radius < 2 * n {
        return Err(Error::InvalidParameter(format!(
            "coupling radius {} too small for n = {n} (need 2n)",
            seq.radius
        )));
    }
    let m = 2 * n + 1;
    let diag = 2.0 * beta * seq.exterior_row_sum();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        a[(i, i)] = diag;
        for j in 0..i {
            let v = -2.0 * beta * seq.j(i - j);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(ChainPrecision { n, beta, matrix: a })
}

impl ChainPrecision {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        2 * self.n + 1
    }

    /// Matrix index of chain site `k` in `{-n..n}`.
    pub fn index_of(&self, k: i64) -> usize {
        (k + self.n as i64) as usize
    }

    pub fn factor(&self) -> Result<ChainFactor> {
        let chol = Cholesky::new(self.matrix.clone()).ok_or(Error::NotPositiveDefinite)?;
        Ok(ChainFactor {
            n: self.n,
            beta: self.beta,
            chol,
        })
    }

    /// Full covariance matrix `P^{-1}`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let f = self.factor()?;
        let m = self.size();
        Ok(f.chol.solve(&DMatrix::identity(m, m)))
    }

    /// Quadratic form `v^T P v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        (v.transpose() * &self.matrix * &v)[(0, 0)]
    }
}

/// Cholesky factorisation of a chain precision, reusable for covariance
/// columns and sampling.
pub struct ChainFactor {
    pub n: usize,
    pub beta: f64,
    chol: Cholesky<f64, Dyn>,
}

impl ChainFactor {
    /// One covariance column `Cov(., k)`.
    pub fn covariance_column(&self, k: i64) -> Vec<f64> {
        let m = 2 * self.n + 1;
        let mut e = DVector::zeros(m);
        e[(k + self.n as i64) as usize] = 1.0;
        self.chol.solve(&e).data.into()
    }

    /// `Var(<phi, v>) = v^T P^{-1} v`.
    pub fn pairing_variance(&self, v: &[f64]) -> f64 {
        let rhs = DVector::from_column_slice(v);
        let sol = self.chol.solve(&rhs);
        rhs.dot(&sol)
    }

    /// Exact Gaussian sample: solve `L^T x = z` for standard normal `z`.
    pub fn sample(&self, rng: &mut Stream) -> Vec<f64> {
        let m = 2 * self.n + 1;
        let z = DVector::from_fn(m, |_, _| crate::rng::standard_normal(rng));
        let l = self.chol.l_dirty();
        let x = l
            .tr_solve_lower_triangular(&z)
            .expect("triangular factor is invertible");
        x.data.into()
    }
}

/// Green function of the killed walk from one source: expected visits
/// `G(x, y)` for every cell `y`.
pub struct GreenTable {
    pub source_cell: usize,
    pub values: Vec<f64>,
    pub stats: SolveStats,
}

impl GreenTable {
    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }
}

/// Per-domain Green solver: factors/hierarchies are built once and reused
/// across sources.
pub struct GreenSolver {
    solver: GridSolver,
    deg: Vec<f64>,
}

impl GreenSolver {
    pub fn new(domain: &LatticeDomain) -> Result<GreenSolver> {
        let solver = GridSolver::new(&domain.grid)?;
        let deg = solver.degrees().to_vec();
        Ok(GreenSolver { solver, deg })
    }

    pub fn degree(&self, cell: usize) -> f64 {
        self.deg[cell]
    }

    /// Solves `A h = e_x` and returns `G(x, y) = deg(y) h(y)`.
    pub fn green(&mut self, source_cell: usize) -> Result<GreenTable> {
        let (h, stats) = self.solver.solve(&[(source_cell, 1.0)])?;
        let values = h
            .iter()
            .zip(&self.deg)
            .map(|(&hv, &d)| hv * d)
            .collect();
        Ok(GreenTable {
            source_cell,
            values,
            stats,
        })
    }

    /// Shift function `sigma = (1/beta) (-Delta)^{-1} f` for a test function
    /// given as `(cell, value)` pairs; the probabilistic Laplacian inverse
    /// is `A^{-1} D`.
    pub fn shift(&mut self, f: &[(usize, f64)], beta: f64) -> Result<Vec<f64>> {
        let rhs: Vec<(usize, f64)> = f.iter().map(|&(c, v)| (c, v * self.deg[c])).collect();
        let (h, _) = self.solver.solve(&rhs)?;
        Ok(h.into_iter().map(|v| v / beta).collect())
    }

    /// Variance of the Gaussian pairing `<phi, f>` under the conductance GFF
    /// with precision `2 beta L_a`: `f^T (2 beta L_a)^{-1} f`.
    pub fn pairing_variance(&mut self, f: &[(usize, f64)], beta: f64) -> Result<f64> {
        let (h, _) = self.solver.solve(f)?;
        let dot: f64 = f.iter().map(|&(c, v)| v * h[c]).sum();
        Ok(dot / (2.0 * beta))
    }
}

/// Builds the slit or smoothed-slit domain with the conductance field for
/// drift `s` attached.
pub fn slit_domain_with_conductances(kind: DomainKind, s: f64) -> Result<LatticeDomain> {
    let domain = crate::lattice::build_domain(kind)?;
    let max_h = match kind {
        DomainKind::SlitDiamond { n, box_factor } => 2 * n * box_factor + 2,
        DomainKind::SmoothedSlit { n, m } => 2 * n * m + 2,
        _ => {
            return Err(Error::InvalidParameter(
                "conductance attachment applies to slit-type domains".into(),
            ))
        }
    };
    with_conductances(domain, conductance_field(s, max_h)?)
}

/// Outcome of the chain-versus-2D trace comparison.
#[derive(Debug, Clone)]
pub struct TraceReport {
    pub max_rel_discrepancy: f64,
    pub entries: usize,
    pub coupling_budget: f64,
    pub sources: Vec<i64>,
}

/// Compares the chain covariance built from the diamond-walk couplings
/// against the killed-walk Green function on the slit domain, restricted to
/// bulk baseline entries (`|k| <= n/2`).
pub fn trace_identity_check(
    n: usize,
    s: f64,
    box_factor: usize,
    horizon: Option<usize>,
) -> Result<TraceReport> {
    let params = BesselCouplingParams {
        horizon,
        ..BesselCouplingParams::dp(s, 2 * n + 2)
    };
    let seq = crate::couplings::bessel_couplings(&params)?;
    let beta = 1.0;
    let chain = chain_precision(&seq, n, beta)?;
    let factor = chain.factor()?;

    let domain = slit_domain_with_conductances(DomainKind::SlitDiamond { n, box_factor }, s)?;
    let mut solver = GreenSolver::new(&domain)?;

    let half = (n / 2) as i64;
    let mut sources = vec![0i64, -half, half, -(half / 2), half / 2 + 1];
    sources.sort_unstable();
    sources.dedup();

    let mut max_rel: f64 = 0.0;
    let mut entries = 0;
    for &k in &sources {
        let cell = domain
            .line_cell(k)
            .ok_or_else(|| Error::InvalidParameter(format!("baseline site {k} missing")))?;
        let table = solver.green(cell)?;
        let cov_col = factor.covariance_column(k);
        for kk in -half..=half {
            let g2d = table.value(domain.line_cell(kk).unwrap());
            let g_chain = 2.0 * beta * cov_col[(kk + n as i64) as usize];
            let rel = (g2d - g_chain).abs() / g_chain.abs().max(1e-300);
            max_rel = max_rel.max(rel);
            entries += 1;
        }
    }
    Ok(TraceReport {
        max_rel_discrepancy: max_rel,
        entries,
        coupling_budget: seq.value_truncation,
        sources,
    })
}

/// Rayleigh-quotient band of one chain precision against another over
/// random Gaussian test vectors: returns `(min, max)` of
/// `v^T P_a v / v^T P_b v`. For couplings with a finite second moment the
/// band stays within fixed constants of 1 at every size.
pub fn rayleigh_band(
    a: &ChainPrecision,
    b: &ChainPrecision,
    vectors: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = crate::rng::stream(seed, 0);
    let m = a.size().min(b.size());
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for _ in 0..vectors {
        let v: Vec<f64> = (0..m).map(|_| crate::rng::standard_normal(&mut rng)).collect();
        let ratio = a.quadratic_form(&v) / b.quadratic_form(&v);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    (lo, hi)
}

/// Line Dirichlet energy of a shift function: the sum of squared increments
/// over consecutive baseline sites.
pub fn line_energy(domain: &LatticeDomain, sigma: &[f64]) -> f64 {
    let mut acc = 0.0;
    for w in domain.line.windows(2) {
        let (k0, c0) = w[0];
        let (k1, c1) = w[1];
        if k1 == k0 + 1 {
            let d = sigma[c1] - sigma[c0];
            acc += d * d;
        }
    }
    acc
}

/// Absolute increments of a shift function along the baseline, keyed by the
/// left site's chain coordinate.
pub fn line_gradient_profile(domain: &LatticeDomain, sigma: &[f64]) -> Vec<(i64, f64)> {
    let mut out = Vec::new();
    for w in domain.line.windows(2) {
        let (k0, c0) = w[0];
        let (k1, c1) = w[1];
        if k1 == k0 + 1 {
            out.push((k0, (sigma[c1] - sigma[c0]).abs()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::{hurwitz_zeta, power_law_couplings, spitzer_couplings};
    use crate::lattice::build_domain;

    #[test]
    fn precision_diagonal_from_zeta() {
        let seq = power_law_couplings(2.5, 8).unwrap();
        let beta = 0.7;
        let p = chain_precision(&seq, 1, beta).unwrap();
        let expect = 4.0 * beta * hurwitz_zeta(2.5, 1.0);
        assert!((p.matrix()[(0, 0)] - expect).abs() < 1e-10);
        // symmetric, and off-diagonal is -2 beta J
        assert_eq!(p.matrix()[(0, 1)], p.matrix()[(1, 0)]);
        assert!((p.matrix()[(0, 1)] + 2.0 * beta).abs() < 1e-12);
    }

    #[test]
    fn single_site_variance_is_inverse_diagonal() {
        let seq = power_law_couplings(3.0, 4).unwrap();
        let p = chain_precision(&seq, 0, 2.0).unwrap();
        let cov = p.covariance().unwrap();
        assert!((cov[(0, 0)] - 1.0 / p.matrix()[(0, 0)]).abs() < 1e-14);
    }

    #[test]
    fn precision_is_positive_definite() {
        for alpha in [1.5, 2.0, 2.5, 3.5] {
            let seq = if alpha == 2.0 {
                spitzer_couplings(512).unwrap()
            } else {
                power_law_couplings(alpha, 512).unwrap()
            };
            let p = chain_precision(&seq, 64, 1.0).unwrap();
            assert!(p.factor().is_ok(), "alpha = {alpha}");
        }
    }

    #[test]
    fn sampling_matches_covariance() {
        let seq = spitzer_couplings(64).unwrap();
        let p = chain_precision(&seq, 16, 1.0).unwrap();
        let cov = p.covariance().unwrap();
        let factor = p.factor().unwrap();
        let m = p.size();
        let draws = 100_000;
        let mut rng = crate::rng::stream(31, 0);
        let mut mean = vec![0.0; m];
        let mut acc = DMatrix::<f64>::zeros(m, m);
        for _ in 0..draws {
            let x = factor.sample(&mut rng);
            for i in 0..m {
                mean[i] += x[i];
            }
            for i in 0..m {
                for j in 0..=i {
                    acc[(i, j)] += x[i] * x[j];
                }
            }
        }
        let nf = draws as f64;
        // componentwise mean within 4 sigma
        for i in 0..m {
            let sd = (cov[(i, i)] / nf).sqrt();
            assert!(
                (mean[i] / nf).abs() < 4.0 * sd,
                "site {i}: mean {}",
                mean[i] / nf
            );
        }
        // empirical covariance within 5% Frobenius
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..m {
            for j in 0..=i {
                let e = acc[(i, j)] / nf - cov[(i, j)];
                let w = if i == j { 1.0 } else { 2.0 };
                num += w * e * e;
                den += w * cov[(i, j)] * cov[(i, j)];
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel < 0.05, "relative Frobenius error {rel}");
        // fixed seed reproduces the draw
        let a = p.factor().unwrap().sample(&mut crate::rng::stream(7, 3));
        let b = p.factor().unwrap().sample(&mut crate::rng::stream(7, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn green_symmetry_under_degree() {
        let domain =
            slit_domain_with_conductances(DomainKind::SlitDiamond { n: 6, box_factor: 4 }, 0.5)
                .unwrap();
        let mut solver = GreenSolver::new(&domain).unwrap();
        let pairs = [((0i64, 0i64), (3i64, 1i64)), ((2, -1), (-4, 2)), ((1, 1), (-2, -3))];
        for &((xa, ya), (xb, yb)) in &pairs {
            let ca = domain.grid.cell(xa, ya).unwrap();
            let cb = domain.grid.cell(xb, yb).unwrap();
            assert!(domain.grid.is_alive(ca) && domain.grid.is_alive(cb));
            let ga = solver.green(ca).unwrap();
            let gb = solver.green(cb).unwrap();
            let lhs = ga.value(cb) / solver.degree(cb);
            let rhs = gb.value(ca) / solver.degree(ca);
            assert!(
                (lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0),
                "G symmetry: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn green_on_box_grows_logarithmically() {
        let mut values = Vec::new();
        for n in [16usize, 32, 64] {
            let domain = build_domain(DomainKind::Box2d { n }).unwrap();
            let mut solver = GreenSolver::new(&domain).unwrap();
            let c = domain.grid.cell(0, 0).unwrap();
            values.push(solver.green(c).unwrap().value(c));
        }
        let two_over_pi_log2 = 2.0 / std::f64::consts::PI * 2f64.ln();
        for w in values.windows(2) {
            assert!(
                (w[1] - w[0] - two_over_pi_log2).abs() < 0.05,
                "increment {} vs {two_over_pi_log2}",
                w[1] - w[0]
            );
        }
    }

    #[test]
    fn trace_identity_smallest_instance() {
        // n = 1: both sides reduce to a 3x3 comparison
        let report = trace_identity_check(1, 0.0, 12, Some(1 << 16)).unwrap();
        assert!(
            report.max_rel_discrepancy < 0.05,
            "discrepancy {}",
            report.max_rel_discrepancy
        );
    }

    #[test]
    fn trace_identity_moderate() {
        let report = trace_identity_check(8, 0.5, 8, Some(1 << 16)).unwrap();
        assert!(
            report.max_rel_discrepancy < 0.03,
            "discrepancy {}",
            report.max_rel_discrepancy
        );
    }

    #[test]
    fn quadratic_form_sandwich_for_summable_couplings() {
        // finite-second-moment couplings are equivalent to the
        // nearest-neighbour form as quadratic forms; the band must not
        // widen with n
        let n_small = 16;
        let n_large = 64;
        let mut bands = Vec::new();
        for n in [n_small, n_large] {
            let lr = power_law_couplings(3.5, 2 * n + 2).unwrap();
            let nn = crate::couplings::nearest_neighbour_couplings(2 * n + 2);
            let pa = chain_precision(&lr, n, 1.0).unwrap();
            let pb = chain_precision(&nn, n, 1.0).unwrap();
            let (lo, hi) = rayleigh_band(&pa, &pb, 100, 77);
            assert!(lo > 0.0 && hi.is_finite());
            bands.push((lo, hi));
        }
        let (lo_s, hi_s) = bands[0];
        let (lo_l, hi_l) = bands[1];
        // fixed band: the large-n band stays comparable to the small-n one
        assert!(hi_l / lo_l < 4.0 * (hi_s / lo_s), "band blew up: {bands:?}");
    }

    #[test]
    fn shift_line_energy_shrinks_with_volume_source() {
        // volume-normalised bump: line energy should drop roughly like 1/n
        let mut energies = Vec::new();
        for n in [12usize, 24] {
            let domain = build_domain(DomainKind::Box2d { n }).unwrap();
            let mut solver = GreenSolver::new(&domain).unwrap();
            let nf = n as f64;
            let mut f = Vec::new();
            for cell in domain.grid.alive_cells() {
                let (x, y) = domain.grid.world(cell);
                let (gx, gy) = (x as f64 / nf, y as f64 / nf);
                let g = (1.0 - gx * gx) * (1.0 - gy * gy);
                f.push((cell, g / (nf * nf)));
            }
            let sigma = solver.shift(&f, 1.0).unwrap();
            energies.push(line_energy(&domain, &sigma));
        }
        let ratio = energies[0] / energies[1];
        assert!(
            ratio > 1.3 && ratio < 3.2,
            "energy ratio across doubling: {ratio}"
        );
    }
}
