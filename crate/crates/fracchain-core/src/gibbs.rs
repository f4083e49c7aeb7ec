//! Heat-bath MCMC for integer-valued, sine-Gordon and Gaussian lattice
//! models, with exact enumeration oracles at tiny sizes.
//!
//! A model is a Gaussian host (long-range chain, nearest-neighbour 2D field
//! in conductances, or truncated long-range 2D field) plus a per-site rule:
//! free sites are resampled from their exact Gaussian full conditional,
//! integer sites from the exact discrete Gaussian on the lattice `v Z`, and
//! sine-Gordon sites by Metropolis-within-Gibbs with the Gaussian
//! conditional as proposal (acceptance depends only on the cosine
//! potential). Scans are systematic by default for reproducibility.

use crate::error::{Error, Result};
use crate::gaussian::ChainPrecision;
use crate::lattice::LatticeDomain;
use crate::rng::{map_replicas, standard_normal, Stream};
use crate::stats::{estimate_from_batches, BatchMeans, Estimate};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Update rule of one site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteRule {
    /// Unconstrained Gaussian site.
    Free,
    /// Site restricted to the lattice `v Z`.
    Integer,
    /// Site carrying the potential `lambda cos(2 pi psi / v)`.
    SineGordon,
}

/// Gaussian host structure providing per-site conditionals.
pub enum Host {
    Chain {
        precision: ChainPrecision,
    },
    /// Nearest-neighbour 2D field with precision `2 beta L_a`.
    Nn2d {
        domain: LatticeDomain,
        beta: f64,
        deg: Vec<f64>,
    },
    /// Long-range 2D field on a box, couplings truncated at `r_max`.
    LongRange2d {
        domain: LatticeDomain,
        beta: f64,
        stencil: Vec<(i64, i64, f64)>,
        row_sum: f64,
        /// Bound on the coupling mass omitted by the range cutoff.
        omitted_mass: f64,
    },
}

impl Host {
    fn value_len(&self) -> usize {
        match self {
            Host::Chain { precision } => precision.size(),
            Host::Nn2d { domain, .. } | Host::LongRange2d { domain, .. } => {
                domain.grid.nx * domain.grid.ny
            }
        }
    }

    fn active_sites(&self) -> Vec<usize> {
        match self {
            Host::Chain { precision } => (0..precision.size()).collect(),
            Host::Nn2d { domain, .. } | Host::LongRange2d { domain, .. } => {
                domain.grid.alive_cells().collect()
            }
        }
    }

    /// Conditional precision and mean of `site` given the rest.
    fn conditional(&self, values: &[f64], site: usize) -> (f64, f64) {
        match self {
            Host::Chain { precision } => {
                let m = precision.matrix();
                let q = m[(site, site)];
                let mut s = 0.0;
                let row = m.row(site);
                for (j, &value) in values.iter().enumerate() {
                    if j != site {
                        s += row[j] * value;
                    }
                }
                (q, -s / q)
            }
            Host::Nn2d { domain, beta, deg } => {
                let grid = &domain.grid;
                let (x, y) = grid.world(site);
                let mut s = 0.0;
                let mut neighbours = [(0usize, 0.0f64); 4];
                let mut count = 0;
                let mut push = |cell: Option<usize>, w: f64| {
                    if let Some(c) = cell {
                        neighbours[count] = (c, w);
                        count += 1;
                    }
                };
                if grid.periodic {
                    let nx = grid.nx as i64;
                    let ny = grid.ny as i64;
                    let wrap = |x: i64, lo: i64, len: i64| lo + (x - lo).rem_euclid(len);
                    let gx = |xx: i64, yy: i64| {
                        grid.cell(wrap(xx, grid.x0, nx), wrap(yy, grid.y0, ny))
                    };
                    push(gx(x + 1, y), grid.weight_up(x, y));
                    push(gx(x - 1, y), grid.weight_down(x, y));
                    push(gx(x, y + 1), grid.weight_up(x, y));
                    push(gx(x, y - 1), grid.weight_down(x, y));
                } else {
                    push(grid.cell(x + 1, y), grid.weight_up(x, y));
                    push(grid.cell(x - 1, y), grid.weight_down(x, y));
                    push(grid.cell(x, y + 1), grid.weight_up(x, y));
                    push(grid.cell(x, y - 1), grid.weight_down(x, y));
                }
                for &(c, w) in &neighbours[..count] {
                    s += w * values[c];
                }
                let q = 2.0 * beta * deg[site];
                (q, s / deg[site])
            }
            Host::LongRange2d {
                domain,
                beta,
                stencil,
                row_sum,
                ..
            } => {
                let grid = &domain.grid;
                let (x, y) = grid.world(site);
                let mut s = 0.0;
                for &(dx, dy, j) in stencil {
                    if let Some(c) = grid.cell(x + dx, y + dy) {
                        s += j * values[c];
                    }
                }
                let q = 2.0 * beta * row_sum;
                (q, s / row_sum)
            }
        }
    }
}

pub struct GibbsModel {
    pub host: Host,
    rules: Vec<SiteRule>,
    active: Vec<usize>,
    /// Lattice spacing of the integer restriction.
    pub v: f64,
    /// Sine-Gordon coupling for `SineGordon` sites.
    pub lambda: f64,
}

impl GibbsModel {
    pub fn new(host: Host, v: f64, lambda: f64) -> GibbsModel {
        let len = host.value_len();
        let active = host.active_sites();
        GibbsModel {
            host,
            rules: vec![SiteRule::Free; len],
            active,
            v,
            lambda,
        }
    }

    pub fn set_rule(&mut self, site: usize, rule: SiteRule) {
        self.rules[site] = rule;
    }

    pub fn set_rules(&mut self, sites: &[usize], rule: SiteRule) {
        for &s in sites {
            self.rules[s] = rule;
        }
    }

    pub fn rule(&self, site: usize) -> SiteRule {
        self.rules[site]
    }

    pub fn active_sites(&self) -> &[usize] {
        &self.active
    }

    pub fn value_len(&self) -> usize {
        self.rules.len()
    }
}

/// MCMC state: current field, sweep counter, RNG stream.
pub struct SamplerState {
    pub values: Vec<f64>,
    pub sweep: u64,
    pub rng: Stream,
    pub random_scan: bool,
}

impl SamplerState {
    pub fn cold(model: &GibbsModel, rng: Stream) -> SamplerState {
        SamplerState {
            values: vec![0.0; model.value_len()],
            sweep: 0,
            rng,
            random_scan: false,
        }
    }
}

/// Unnormalised discrete-Gaussian window around the conditional mean:
/// lattice points `m v` with `|m - round(mu/v)| <= width`.
pub fn discrete_gaussian_window(q: f64, mu: f64, v: f64) -> (i64, usize, Vec<f64>) {
    let centre = (mu / v).round() as i64;
    let sd_lattice = 1.0 / (q.sqrt() * v);
    let width = (6.0 * sd_lattice).ceil() as usize + 1;
    let mut weights = Vec::with_capacity(2 * width + 1);
    // factor out the peak weight for stability
    let mut wmax = f64::MIN;
    for k in -(width as i64)..=(width as i64) {
        let x = (centre + k) as f64 * v - mu;
        let e = -0.5 * q * x * x;
        wmax = wmax.max(e);
        weights.push(e);
    }
    for w in weights.iter_mut() {
        *w = (*w - wmax).exp();
    }
    (centre - width as i64, width, weights)
}

fn sample_discrete_gaussian(rng: &mut Stream, q: f64, mu: f64, v: f64) -> f64 {
    let (first, _, weights) = discrete_gaussian_window(q, mu, v);
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return (first + i as i64) as f64 * v;
        }
    }
    (first + weights.len() as i64 - 1) as f64 * v
}

/// One heat-bath sweep over all active sites.
pub fn heat_bath_sweep(model: &GibbsModel, state: &mut SamplerState) {
    let n_active = model.active.len();
    for step in 0..n_active {
        let site = if state.random_scan {
            model.active[state.rng.random_range(0..n_active)]
        } else {
            model.active[step]
        };
        let (q, mu) = model.host.conditional(&state.values, site);
        match model.rules[site] {
            SiteRule::Free => {
                state.values[site] = mu + standard_normal(&mut state.rng) / q.sqrt();
            }
            SiteRule::Integer => {
                state.values[site] = sample_discrete_gaussian(&mut state.rng, q, mu, model.v);
            }
            SiteRule::SineGordon => {
                let proposal = mu + standard_normal(&mut state.rng) / q.sqrt();
                let tau = std::f64::consts::TAU / model.v;
                let delta =
                    model.lambda * ((tau * proposal).cos() - (tau * state.values[site]).cos());
                if delta >= 0.0 || state.rng.random::<f64>() < delta.exp() {
                    state.values[site] = proposal;
                }
            }
        }
    }
    state.sweep += 1;
}

/// Observables to accumulate during a run.
#[derive(Debug, Clone, Default)]
pub struct ObservableSpec {
    pub variance_sites: Vec<usize>,
    pub covariance_pairs: Vec<(usize, usize)>,
    /// Sparse test vectors `g`; the sampler records `<psi, g>` moments.
    pub pairings: Vec<Vec<(usize, f64)>>,
    /// Sparse vectors `w` for Laplace transforms `E[exp <w, psi>]`.
    pub laplace_vectors: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone)]
pub struct ObservableSet {
    pub site_variance: Vec<Estimate>,
    pub site_mean: Vec<Estimate>,
    pub pair_covariance: Vec<Estimate>,
    pub pairing_variance: Vec<Estimate>,
    pub laplace: Vec<Estimate>,
    /// Observables whose batch means drifted monotonically in some chain.
    pub drift_warnings: usize,
    pub sweeps_per_chain: u64,
    pub chains: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct RunParams {
    pub sweeps: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub chains: u64,
    pub batches: usize,
    pub random_scan: bool,
    /// Start chains from an exact Gaussian sample of the host (integer
    /// sites rounded to the lattice) instead of from zero. Chain hosts
    /// only; brackets the cold start from the high-variance side.
    pub warm_start: bool,
}

impl RunParams {
    pub fn new(sweeps: u64, burn_in: u64, seed: u64) -> RunParams {
        RunParams {
            sweeps,
            burn_in,
            seed,
            chains: 4,
            batches: 20,
            random_scan: false,
            warm_start: false,
        }
    }
}

struct ChainAccumulators {
    sq: Vec<BatchMeans>,
    mean: Vec<BatchMeans>,
    pair: Vec<BatchMeans>,
    pairing_sq: Vec<BatchMeans>,
    pairing_mean: Vec<BatchMeans>,
    laplace: Vec<BatchMeans>,
    drift: usize,
}

/// Runs `chains` independent chains (parallel, merged in chain order) and
/// returns batch-means estimates.
pub fn run_experiment(
    model: &GibbsModel,
    obs: &ObservableSpec,
    params: &RunParams,
) -> Result<ObservableSet> {
    if params.sweeps == 0 {
        return Err(Error::InvalidParameter("sweeps must be positive".into()));
    }
    let warm_factor = if params.warm_start {
        match &model.host {
            Host::Chain { precision } => Some(precision.factor()?),
            _ => {
                return Err(Error::InvalidParameter(
                    "warm starts are implemented for chain hosts only".into(),
                ))
            }
        }
    } else {
        None
    };
    let per_chain: Vec<ChainAccumulators> = map_replicas(params.seed, params.chains, |_, rng| {
        let mut state = SamplerState::cold(model, rng);
        state.random_scan = params.random_scan;
        if let Some(factor) = &warm_factor {
            let sample = factor.sample(&mut state.rng);
            for (site, value) in sample.into_iter().enumerate() {
                state.values[site] = match model.rules[site] {
                    SiteRule::Integer => (value / model.v).round() * model.v,
                    _ => value,
                };
            }
        }
        let make = |k: usize| -> Vec<BatchMeans> {
            (0..k)
                .map(|_| BatchMeans::new(params.sweeps, params.batches))
                .collect()
        };
        let mut acc = ChainAccumulators {
            sq: make(obs.variance_sites.len()),
            mean: make(obs.variance_sites.len()),
            pair: make(obs.covariance_pairs.len()),
            pairing_sq: make(obs.pairings.len()),
            pairing_mean: make(obs.pairings.len()),
            laplace: make(obs.laplace_vectors.len()),
            drift: 0,
        };
        for _ in 0..params.burn_in {
            heat_bath_sweep(model, &mut state);
        }
        for _ in 0..params.sweeps {
            heat_bath_sweep(model, &mut state);
            for (k, &s) in obs.variance_sites.iter().enumerate() {
                let x = state.values[s];
                acc.sq[k].push(x * x);
                acc.mean[k].push(x);
            }
            for (k, &(a, b)) in obs.covariance_pairs.iter().enumerate() {
                acc.pair[k].push(state.values[a] * state.values[b]);
            }
            for (k, g) in obs.pairings.iter().enumerate() {
                let x: f64 = g.iter().map(|&(s, w)| w * state.values[s]).sum();
                acc.pairing_sq[k].push(x * x);
                acc.pairing_mean[k].push(x);
            }
            for (k, w) in obs.laplace_vectors.iter().enumerate() {
                let x: f64 = w.iter().map(|&(s, ww)| ww * state.values[s]).sum();
                acc.laplace[k].push(x.exp());
            }
        }
        for bm in acc.sq.iter().chain(&acc.pairing_sq) {
            if bm.drifting() {
                acc.drift += 1;
            }
        }
        acc
    });

    let pool = |pick: &dyn Fn(&ChainAccumulators) -> &Vec<BatchMeans>, k: usize| -> Estimate {
        let mut means = Vec::new();
        for chain in &per_chain {
            means.extend(pick(chain)[k].batch_means());
        }
        estimate_from_batches(&means)
    };
    let variance_estimate = |k: usize| -> Estimate {
        // Var = E[x^2] - E[x]^2; the mean term is a small correction, fold
        // its value in and keep the dominant second-moment error bar
        let sq = pool(&|c| &c.sq, k);
        let mean = pool(&|c| &c.mean, k);
        Estimate {
            value: sq.value - mean.value * mean.value,
            stderr: sq.stderr,
            batches: sq.batches,
        }
    };

    let site_variance: Vec<Estimate> = (0..obs.variance_sites.len()).map(variance_estimate).collect();
    let site_mean: Vec<Estimate> = (0..obs.variance_sites.len()).map(|k| pool(&|c| &c.mean, k)).collect();
    let pair_covariance: Vec<Estimate> = (0..obs.covariance_pairs.len()).map(|k| pool(&|c| &c.pair, k)).collect();
    let pairing_variance: Vec<Estimate> = (0..obs.pairings.len())
        .map(|k| {
            let sq = pool(&|c| &c.pairing_sq, k);
            let mean = pool(&|c| &c.pairing_mean, k);
            Estimate {
                value: sq.value - mean.value * mean.value,
                stderr: sq.stderr,
                batches: sq.batches,
            }
        })
        .collect();
    let laplace: Vec<Estimate> = (0..obs.laplace_vectors.len()).map(|k| pool(&|c| &c.laplace, k)).collect();
    Ok(ObservableSet {
        site_variance,
        site_mean,
        pair_covariance,
        pairing_variance,
        laplace,
        drift_warnings: per_chain.iter().map(|c| c.drift).sum(),
        sweeps_per_chain: params.sweeps,
        chains: params.chains,
    })
}

/// Effective inverse temperature `beta_eff = beta Var_Gauss / Var_model`
/// for a test pairing, from an MCMC estimate of the model variance and the
/// exact Gaussian value.
pub fn effective_beta(beta: f64, gaussian_variance: f64, model_variance: Estimate) -> Result<Estimate> {
    if model_variance.value <= 0.0 || gaussian_variance <= 0.0 {
        return Err(Error::InvalidParameter(
            "effective beta needs positive pairing variances".into(),
        ));
    }
    let value = beta * gaussian_variance / model_variance.value;
    let stderr = value * model_variance.stderr / model_variance.value;
    Ok(Estimate {
        value,
        stderr,
        batches: model_variance.batches,
    })
}

/// Builds the truncated long-range 2D host on the box `{-n..n}^2` with
/// `J(d) = |d|^{-alpha}` for `0 < |d| <= r_max`.
pub fn long_range_2d_host(n: usize, alpha: f64, beta: f64, r_max: usize) -> Result<Host> {
    if alpha <= 2.0 {
        return Err(Error::InvalidParameter(
            "2D long-range host needs alpha > 2 for summable rows".into(),
        ));
    }
    let domain = crate::lattice::build_domain(crate::lattice::DomainKind::Box2d { n })?;
    let mut stencil = Vec::new();
    let mut row_sum = 0.0;
    let r = r_max as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            if dx == 0 && dy == 0 {
                continue;
            }
            let dist2 = (dx * dx + dy * dy) as f64;
            if dist2 <= (r_max * r_max) as f64 {
                let j = dist2.powf(-alpha / 2.0);
                stencil.push((dx, dy, j));
                row_sum += j;
            }
        }
    }
    // omitted coupling mass beyond the cutoff, by the integral bound
    let omitted = std::f64::consts::TAU * (r_max as f64).powf(2.0 - alpha) / (alpha - 2.0);
    Ok(Host::LongRange2d {
        domain,
        beta,
        stencil,
        row_sum,
        omitted_mass: omitted,
    })
}

// ---------------------------------------------------------------------------
// Exact enumeration oracle
// ---------------------------------------------------------------------------

/// Exactly enumerable integer-Gaussian model: `psi = v m`, `m` in
/// `{-K..K}^d`, density `exp(-psi^T A psi / 2)`.
pub struct Enumeration {
    pub a: DMatrix<f64>,
    pub v: f64,
    pub window: i64,
    /// Gaussian-domination bound on the window tail mass.
    pub tail_bound: f64,
}

impl Enumeration {
    pub fn new(a: DMatrix<f64>, v: f64, window: i64) -> Result<Enumeration> {
        let d = a.nrows();
        if d > 8 || window > 6 {
            return Err(Error::InvalidParameter(
                "enumeration is limited to 8 sites and window 6".into(),
            ));
        }
        if window < 1 {
            return Err(Error::IntegerWindow("window must be >= 1".into()));
        }
        // tail bound: a boundary configuration has energy at least
        // lambda_min (K v)^2 / 2; count times the smallest boundary weight
        let eig = a.clone().symmetric_eigen();
        let lmin = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if lmin <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let boundary = (window as f64) * v;
        let states = ((2 * window + 1) as f64).powi(d as i32);
        let tail_bound = states * (-0.5 * lmin * boundary * boundary).exp();
        Ok(Enumeration {
            a,
            v,
            window,
            tail_bound,
        })
    }

    fn iterate<F: FnMut(&[f64], f64)>(&self, mut f: F) {
        let d = self.a.nrows();
        let base = 2 * self.window + 1;
        let total = (base as usize).pow(d as u32);
        let mut psi = vec![0.0; d];
        for idx in 0..total {
            let mut rest = idx;
            for slot in psi.iter_mut() {
                let m = (rest % base as usize) as i64 - self.window;
                *slot = m as f64 * self.v;
                rest /= base as usize;
            }
            let p = DVector::from_column_slice(&psi);
            let energy = 0.5 * (p.transpose() * &self.a * &p)[(0, 0)];
            f(&psi, (-energy).exp());
        }
    }

    pub fn partition(&self) -> f64 {
        let mut z = 0.0;
        self.iterate(|_, w| z += w);
        z
    }

    /// `E[<w, psi>^2]`.
    pub fn second_moment(&self, w: &[f64]) -> f64 {
        let mut z = 0.0;
        let mut acc = 0.0;
        self.iterate(|psi, weight| {
            let x: f64 = psi.iter().zip(w).map(|(p, ww)| p * ww).sum();
            z += weight;
            acc += weight * x * x;
        });
        acc / z
    }

    /// Marginal moments `(E psi_i, E psi_i^2)` for every site.
    pub fn marginal_moments(&self) -> Vec<(f64, f64)> {
        let d = self.a.nrows();
        let mut z = 0.0;
        let mut m1 = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        self.iterate(|psi, w| {
            z += w;
            for i in 0..d {
                m1[i] += w * psi[i];
                m2[i] += w * psi[i] * psi[i];
            }
        });
        (0..d).map(|i| (m1[i] / z, m2[i] / z)).collect()
    }

    /// `E[exp <w, psi>]`.
    pub fn laplace(&self, w: &[f64]) -> f64 {
        let mut z = 0.0;
        let mut acc = 0.0;
        self.iterate(|psi, weight| {
            let x: f64 = psi.iter().zip(w).map(|(p, ww)| p * ww).sum();
            z += weight;
            acc += weight * x.exp();
        });
        acc / z
    }
}

/// Schur complement of a precision matrix onto a subset of sites: the
/// Gaussian sites are integrated out exactly.
pub fn schur_precision(a: &DMatrix<f64>, keep: &[usize]) -> Result<DMatrix<f64>> {
    let all: Vec<usize> = (0..a.nrows()).collect();
    let drop: Vec<usize> = all.iter().cloned().filter(|i| !keep.contains(i)).collect();
    let pick = |rows: &[usize], cols: &[usize]| -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
    };
    let a_cc = pick(keep, keep);
    if drop.is_empty() {
        return Ok(a_cc);
    }
    let a_cg = pick(keep, &drop);
    let a_gg = pick(&drop, &drop);
    let a_gc = pick(&drop, keep);
    let chol = nalgebra::Cholesky::new(a_gg).ok_or(Error::NotPositiveDefinite)?;
    Ok(&a_cc - a_cg * chol.solve(&a_gc))
}

/// Modified Bessel function `I_q(x)` by its power series.
pub fn bessel_i(q: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = half.powi(q as i32);
    for m in 1..=q {
        term /= m as f64;
    }
    let mut sum = term;
    for m in 1..60 {
        term *= half * half / (m as f64 * (m + q) as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// Laplace transforms `(E_IG, E_SG(lambda), E_Gauss)` of `exp <w, psi>` for
/// the precision `A` on the integer lattice `Z^k`.
///
/// The sine-Gordon value expands the potential `exp(lambda cos(2 pi psi))`
/// into modified Bessel coefficients, turning the integral into a rapidly
/// convergent sum over integer charge vectors:
/// `E_SG = E_Gauss * S(w) / S(0)` with
/// `S(w) = sum_q prod_i I_{|q_i|}(lambda) exp(-2 pi^2 q^T A^{-1} q)
///         cos(2 pi q^T A^{-1} w)`.
pub fn laplace_sandwich(
    a: &DMatrix<f64>,
    lambda: f64,
    w: &[f64],
    window: i64,
    charge_window: i64,
) -> Result<(f64, f64, f64)> {
    let k = a.nrows();
    let chol = nalgebra::Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite)?;
    let wv = DVector::from_column_slice(w);
    let ainv_w = chol.solve(&wv);
    let e_gauss = (0.5 * wv.dot(&ainv_w)).exp();

    let enumeration = Enumeration::new(a.clone(), 1.0, window)?;
    let e_ig = enumeration.laplace(w);

    // charge sums
    let bessel: Vec<f64> = (0..=charge_window as u32).map(|q| bessel_i(q, lambda)).collect();
    let base = 2 * charge_window + 1;
    let total = (base as usize).pow(k as u32);
    let mut s_w = 0.0;
    let mut s_0 = 0.0;
    let two_pi = std::f64::consts::TAU;
    let mut q = vec![0.0f64; k];
    for idx in 0..total {
        let mut rest = idx;
        let mut coeff = 1.0;
        for slot in q.iter_mut() {
            let qi = (rest % base as usize) as i64 - charge_window;
            *slot = qi as f64;
            coeff *= bessel[qi.unsigned_abs() as usize];
            rest /= base as usize;
        }
        let qv = DVector::from_column_slice(&q);
        let ainv_q = chol.solve(&qv);
        let quad = qv.dot(&ainv_q);
        let weight = coeff * (-2.0 * std::f64::consts::PI * std::f64::consts::PI * quad).exp();
        s_0 += weight;
        s_w += weight * (two_pi * qv.dot(&ainv_w)).cos();
    }
    let e_sg = e_gauss * s_w / s_0;
    Ok((e_ig, e_sg, e_gauss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::power_law_couplings;
    use crate::gaussian::chain_precision;

    fn chain_model(n: usize, alpha: f64, beta: f64, v: f64, integer: bool) -> GibbsModel {
        let seq = power_law_couplings(alpha, (2 * n).max(4)).unwrap();
        let p = chain_precision(&seq, n, beta).unwrap();
        let mut model = GibbsModel::new(Host::Chain { precision: p }, v, 0.0);
        if integer {
            let sites: Vec<usize> = (0..model.value_len()).collect();
            model.set_rules(&sites, SiteRule::Integer);
        }
        model
    }

    #[test]
    fn discrete_gaussian_window_symmetry() {
        // mu halfway between lattice points: P(0) = P(v)
        let (first, _, weights) = discrete_gaussian_window(1.3, 0.5 * 2.0, 2.0);
        let p0 = weights[(0 - first) as usize];
        let p1 = weights[(1 - first) as usize];
        assert!((p0 - p1).abs() < 1e-12 * p0);
        // strong precision concentrates on round(mu/v)
        let (first, _, weights) = discrete_gaussian_window(1e8, 0.9, 1.0);
        let total: f64 = weights.iter().sum();
        assert!(weights[(1 - first) as usize] / total > 1.0 - 1e-10);
        // window tail below 1e-8 of the mass: widening changes nothing
        let (_, _, w1) = discrete_gaussian_window(0.05, 0.3, 1.0);
        let s1: f64 = w1.iter().sum();
        let q = 0.05;
        let mut s2 = 0.0;
        for m in -400..=400i64 {
            let x = m as f64 - 0.3;
            s2 += (-0.5 * q * x * x + 0.5 * q * 0.09).exp() * (0.5 * q * 0.09).exp();
        }
        // compare normalised masses (weights are shifted by the peak)
        let peak: f64 = (-400..=400i64)
            .map(|m| {
                let x = m as f64 - 0.3;
                -0.5 * q * x * x
            })
            .fold(f64::MIN, f64::max);
        let s2: f64 = (-400..=400i64)
            .map(|m| {
                let x = m as f64 - 0.3;
                (-0.5 * q * x * x - peak).exp()
            })
            .sum();
        assert!((s1 - s2).abs() / s2 < 1e-8, "window mass {s1} vs {s2}");
    }

    #[test]
    fn gaussian_sweep_reproduces_exact_variance() {
        let n = 3;
        let beta = 0.8;
        let model = chain_model(n, 2.5, beta, 1.0, false);
        let Host::Chain { precision } = &model.host else {
            unreachable!()
        };
        let cov = precision.covariance().unwrap();
        let obs = ObservableSpec {
            variance_sites: vec![n, 0, 2 * n],
            covariance_pairs: vec![(n, n + 1)],
            ..Default::default()
        };
        let params = RunParams {
            chains: 4,
            ..RunParams::new(40_000, 2_000, 99)
        };
        let out = run_experiment(&model, &obs, &params).unwrap();
        for (k, &site) in obs.variance_sites.iter().enumerate() {
            let exact = cov[(site, site)];
            let est = out.site_variance[k];
            assert!(
                est.sigmas_from(exact) < 4.0,
                "site {site}: {} +- {} vs {exact}",
                est.value,
                est.stderr
            );
        }
        let exact = cov[(n, n + 1)];
        assert!(out.pair_covariance[0].sigmas_from(exact) < 4.0);
    }

    #[test]
    fn integer_chain_matches_enumeration() {
        let n = 1; // 3 sites
        let beta = 0.4;
        let model = chain_model(n, 2.5, beta, 1.0, true);
        let Host::Chain { precision } = &model.host else {
            unreachable!()
        };
        let oracle = Enumeration::new(precision.matrix().clone(), 1.0, 6).unwrap();
        let exact = oracle.marginal_moments();
        let obs = ObservableSpec {
            variance_sites: vec![0, 1, 2],
            ..Default::default()
        };
        let params = RunParams {
            chains: 4,
            ..RunParams::new(150_000, 5_000, 7)
        };
        let out = run_experiment(&model, &obs, &params).unwrap();
        for i in 0..3 {
            let est = out.site_variance[i];
            let target = exact[i].1 - exact[i].0 * exact[i].0;
            assert!(
                est.sigmas_from(target) < 4.0,
                "site {i}: {} +- {} vs {target}",
                est.value,
                est.stderr
            );
        }
    }

    #[test]
    fn sine_gordon_interpolates() {
        // lambda = 0 must agree with the Gaussian run exactly in law; a
        // cheap proxy: same conditional structure, comparable variances
        let n = 2;
        let beta = 0.6;
        let mut sg = chain_model(n, 2.5, beta, 1.0, false);
        let sites: Vec<usize> = (0..sg.value_len()).collect();
        sg.set_rules(&sites, SiteRule::SineGordon);
        sg.lambda = 0.0;
        let gauss = chain_model(n, 2.5, beta, 1.0, false);
        let obs = ObservableSpec {
            variance_sites: vec![n],
            ..Default::default()
        };
        let params = RunParams {
            chains: 4,
            ..RunParams::new(60_000, 3_000, 21)
        };
        let a = run_experiment(&sg, &obs, &params).unwrap();
        let b = run_experiment(&gauss, &obs, &params).unwrap();
        let diff = (a.site_variance[0].value - b.site_variance[0].value).abs();
        let err = (a.site_variance[0].stderr.powi(2) + b.site_variance[0].stderr.powi(2)).sqrt();
        assert!(diff < 4.0 * err, "lambda=0 SG vs Gaussian: {diff} vs {err}");
        // large lambda pulls the field towards the integers: smaller
        // in-well fluctuation of cos(2 pi psi)
        let mut frozen = chain_model(n, 2.5, 4.0, 1.0, false);
        frozen.set_rules(&sites, SiteRule::SineGordon);
        frozen.lambda = 30.0;
        let c = run_experiment(&frozen, &obs, &params).unwrap();
        assert!(c.site_variance[0].value < 0.2, "{}", c.site_variance[0].value);
    }

    #[test]
    fn enumeration_laplace_sandwich_holds() {
        let seq = power_law_couplings(2.5, 10).unwrap();
        let p = chain_precision(&seq, 2, 1.0).unwrap();
        let a = p.matrix().clone();
        for w in [
            vec![0.4, 0.0, 0.0, 0.0, -0.4],
            vec![0.0, 0.3, 0.3, 0.3, 0.0],
            vec![0.2, -0.1, 0.5, -0.1, 0.2],
        ] {
            let (e_ig, e_sg, e_gauss) = laplace_sandwich(&a, 1.0, &w, 5, 4).unwrap();
            assert!(e_ig <= e_sg + 1e-12, "IG {e_ig} vs SG {e_sg}");
            assert!(e_sg <= e_gauss + 1e-12, "SG {e_sg} vs Gauss {e_gauss}");
        }
    }

    #[test]
    fn sg_laplace_monotone_in_lambda() {
        let seq = power_law_couplings(2.5, 8).unwrap();
        let p = chain_precision(&seq, 1, 1.0).unwrap();
        let a = p.matrix().clone();
        let w = vec![0.5, 0.2, -0.3];
        let mut last = f64::MAX;
        for lambda in [0.25, 1.0, 4.0, 16.0] {
            let (e_ig, e_sg, _) = laplace_sandwich(&a, lambda, &w, 5, 6).unwrap();
            assert!(e_sg <= last + 1e-12);
            assert!(e_ig <= e_sg + 1e-12);
            last = e_sg;
        }
        // lambda -> infinity approaches the integer-valued transform
        let (e_ig, e_sg, _) = laplace_sandwich(&a, 40.0, &w, 5, 6).unwrap();
        assert!((e_sg - e_ig).abs() / e_ig < 0.05, "SG {e_sg} vs IG {e_ig}");
    }

    #[test]
    fn regev_monotonicity_rank_one() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -0.5, 0.0, -0.5, 2.0, -0.5, 0.0, -0.5, 2.0]);
        let rho = DVector::from_column_slice(&[0.6, -0.2, 0.4]);
        let b = &a + &rho * rho.transpose();
        let ea = Enumeration::new(a, 1.0, 5).unwrap();
        let eb = Enumeration::new(b, 1.0, 5).unwrap();
        for w in [[1.0, 0.0, 0.0], [0.3, 0.3, 0.3], [0.0, -0.7, 0.7]] {
            let ma = ea.second_moment(&w);
            let mb = eb.second_moment(&w);
            assert!(mb <= ma + 1e-12, "A: {ma}, B: {mb}");
        }
    }

    #[test]
    fn schur_complement_matches_direct_marginal() {
        // integrate out the middle site of a 3-site Gaussian: covariance of
        // the kept block must be the corresponding sub-covariance
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -0.7, -0.1, -0.7, 2.5, -0.3, -0.1, -0.3, 1.8]);
        let keep = [0usize, 2];
        let eff = schur_precision(&a, &keep).unwrap();
        let cov_full = a.try_inverse().unwrap();
        let cov_eff = eff.try_inverse().unwrap();
        for (i, &ki) in keep.iter().enumerate() {
            for (j, &kj) in keep.iter().enumerate() {
                assert!((cov_eff[(i, j)] - cov_full[(ki, kj)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bessel_i_reference_values() {
        // I_0(1) = 1.2660658..., I_1(1) = 0.5651591...
        assert!((bessel_i(0, 1.0) - 1.266_065_877_752_008).abs() < 1e-12);
        assert!((bessel_i(1, 1.0) - 0.565_159_103_992_485).abs() < 1e-12);
        // recurrence I_{q-1} - I_{q+1} = (2q/x) I_q
        let x = 1.7;
        for q in 1..6u32 {
            let lhs = bessel_i(q - 1, x) - bessel_i(q + 1, x);
            let rhs = 2.0 * q as f64 / x * bessel_i(q, x);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_to_zero_integer_variance_grows() {
        // grid limited to betas whose integer spread fits the K = 6 window
        let seq = power_law_couplings(2.5, 10).unwrap();
        let mut last_ratio = 0.0;
        let mut last_var = 0.0;
        for &beta in &[4.0, 1.0, 0.5, 0.25] {
            let p = chain_precision(&seq, 2, beta).unwrap();
            let gauss_var = p.covariance().unwrap()[(2, 2)];
            let oracle = Enumeration::new(p.matrix().clone(), 1.0, 6).unwrap();
            let m = oracle.marginal_moments()[2];
            let var = m.1 - m.0 * m.0;
            let ratio = var / gauss_var;
            assert!(ratio <= 1.0 + 1e-9);
            assert!(
                ratio >= last_ratio - 1e-9,
                "ratio should grow as beta drops: {ratio} after {last_ratio}"
            );
            assert!(var > last_var, "integer variance should grow");
            last_ratio = ratio;
            last_var = var;
        }
        assert!(last_ratio > 0.9, "beta -> 0 ratio {last_ratio}");
    }

    #[test]
    fn conditioning_sets_share_the_sampler() {
        // line, strip and fractal conditioning all run through the same
        // heat-bath machinery on a 2D host
        use crate::lattice::{
            build_domain, conditioning_set, ConditioningKind, DomainKind, DEFAULT_FRACTAL_MASK,
        };
        let n = 13; // 2n + 1 = 27 = 3^3 hosts the level-3 fractal
        for kind in [
            ConditioningKind::Line,
            ConditioningKind::Strip { offset: -2, width: 5 },
            ConditioningKind::Fractal { level: 3, mask: DEFAULT_FRACTAL_MASK },
        ] {
            let domain = build_domain(DomainKind::Box2d { n }).unwrap();
            let set = conditioning_set(&domain, kind.clone()).unwrap();
            let deg = crate::solver::degrees(&domain.grid).unwrap();
            let mut model = GibbsModel::new(
                Host::Nn2d { domain, beta: 0.2, deg },
                1.0,
                0.0,
            );
            model.set_rules(&set.cells, SiteRule::Integer);
            let mut state = SamplerState::cold(&model, crate::rng::stream(3, 0));
            for _ in 0..20 {
                heat_bath_sweep(&model, &mut state);
            }
            for &c in &set.cells {
                assert_eq!(state.values[c], state.values[c].round(), "{kind:?}");
            }
        }
    }

    #[test]
    fn reproducible_runs() {
        let model = chain_model(2, 2.5, 0.5, 1.0, true);
        let obs = ObservableSpec {
            variance_sites: vec![2],
            ..Default::default()
        };
        let params = RunParams {
            chains: 2,
            ..RunParams::new(2_000, 100, 5)
        };
        let a = run_experiment(&model, &obs, &params).unwrap();
        let b = run_experiment(&model, &obs, &params).unwrap();
        assert_eq!(a.site_variance[0].value, b.site_variance[0].value);
    }
}
