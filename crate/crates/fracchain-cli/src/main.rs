//! `fracchain` — command-line laboratory for long-range interface models.
//!
//! Exit codes: 0 success, 1 failed acceptance check or runtime error,
//! 2 usage/config error. `FRACCHAIN_THREADS` caps the worker pool.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fracchain_core::bessel_walk::{return_site_histogram, Geometry, WalkSpec};
use fracchain_core::couplings::{
    bessel_couplings, fourier_couplings, grid_bessel_couplings, power_law_couplings,
    spitzer_couplings, BesselCouplingParams, CouplingMethod, CouplingSequence,
};
use fracchain_core::experiments::{load_config, report, run, ExperimentConfig};
use fracchain_core::fbm::{fbm_cov_dirichlet, hurst_from_alpha, shape_fit};
use fracchain_core::gaussian::{chain_precision, GreenSolver};
use fracchain_core::gibbs::{
    run_experiment, GibbsModel, Host, ObservableSpec, RunParams, SiteRule,
};
use fracchain_core::lattice::{build_domain, DomainKind};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fracchain", version, about)]
struct Cli {
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// RNG seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a long-range coupling sequence and fit its tail.
    Couplings(CouplingsArgs),
    /// Simulate Bessel walks and histogram their return sites.
    Walk(WalkArgs),
    /// Green function of the killed walk on a 2D domain.
    Green(GreenArgs),
    /// Exact covariance diagnostics of the Gaussian chain.
    ChainGaussian(ChainGaussianArgs),
    /// Heat-bath MCMC for the integer-valued chain.
    ChainInteger(ChainIntegerArgs),
    /// Heat-bath MCMC for the line-conditioned 2D field.
    Gff2dLine(Gff2dArgs),
    /// Regime comparisons (localised / diffusive / 2D long-range).
    Regimes(RunArgs),
    /// Rescaled chain covariance against the Dirichlet fBm kernel.
    FbmCompare(FbmArgs),
    /// Run one experiment from a config file.
    Run(RunArgs),
    /// Summarise a directory of experiment runs.
    Report { dir: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    Spitzer,
    BesselDiamond,
    BesselGrid,
    Fourier,
    PowerLaw,
}

#[derive(Args)]
struct CouplingsArgs {
    #[arg(long, value_enum)]
    source: SourceArg,
    /// Bessel drift parameter (walk sources).
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    /// Decay exponent (power-law source).
    #[arg(long, default_value_t = 2.5)]
    alpha: f64,
    /// Fractional power (Fourier source).
    #[arg(long, default_value_t = 0.75)]
    u: f64,
    #[arg(long, default_value_t = 256)]
    radius: usize,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value = "dp")]
    method: String,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    /// Tail-fit window (defaults to [radius/16, radius]).
    #[arg(long, num_args = 2)]
    window: Option<Vec<usize>>,
    /// Grid dimension for bessel-grid.
    #[arg(long, default_value_t = 1)]
    d: usize,
}

#[derive(Args)]
struct WalkArgs {
    #[arg(long, default_value = "diamond")]
    geometry: String,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 0.5)]
    s: f64,
    #[arg(long, default_value_t = 1_000_000)]
    n_samples: u64,
    #[arg(long, default_value_t = 1 << 22)]
    max_steps: u64,
    #[arg(long, default_value_t = 64)]
    radius: usize,
}

#[derive(Args)]
struct GreenArgs {
    /// box2d | torus2d | slit | smoothed-slit | half-plane
    #[arg(long, default_value = "box2d")]
    domain: String,
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Smoothing parameter M (smoothed-slit) or truncation factor (slit).
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    #[arg(long, default_value_t = 0)]
    source_x: i64,
    #[arg(long, default_value_t = 0)]
    source_y: i64,
}

#[derive(Args)]
struct ChainGaussianArgs {
    #[arg(long, default_value_t = 2.5)]
    alpha: f64,
    /// Use the exact Spitzer couplings instead of the power law.
    #[arg(long)]
    spitzer: bool,
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

#[derive(Args)]
struct ChainIntegerArgs {
    #[arg(long, default_value_t = 2.5)]
    alpha: f64,
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    /// Lattice spacing of the integer restriction.
    #[arg(long, default_value_t = std::f64::consts::TAU)]
    v: f64,
    /// Sine-Gordon coupling; integer conditioning when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 50_000)]
    sweeps: u64,
    #[arg(long, default_value_t = 5_000)]
    burn_in: u64,
    #[arg(long, default_value_t = 4)]
    chains: u64,
}

#[derive(Args)]
struct Gff2dArgs {
    /// box | torus
    #[arg(long, default_value = "box")]
    geometry: String,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    v: f64,
    #[arg(long, default_value_t = 50_000)]
    sweeps: u64,
    #[arg(long, default_value_t = 5_000)]
    burn_in: u64,
    #[arg(long, default_value_t = 4)]
    chains: u64,
}

#[derive(Args)]
struct FbmArgs {
    #[arg(long, default_value_t = 2.5)]
    alpha: f64,
    #[arg(long, default_value_t = 512)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> anyhow::Result<()> {
    let mut body = String::new();
    let _ = writeln!(body, "{header}");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(body, "{}", cells.join(","));
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn save_couplings(out: &Path, seq: &CouplingSequence, window: (usize, usize)) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for r in 1..=seq.radius {
        let mut row = vec![r as f64, seq.j(r)];
        if let Some(stderr) = &seq.stderr {
            row.push(stderr[r - 1]);
        }
        rows.push(row);
    }
    let header = if seq.stderr.is_some() { "r,J,stderr" } else { "r,J" };
    write_csv(&out.join("couplings.csv"), header, &rows)?;
    let fit = seq.tail_exponent_fit(window.0, window.1).ok();
    let sidecar = serde_json::json!({
        "alpha": seq.alpha,
        "s": seq.s,
        "source": seq.source,
        "mass_at_zero": seq.mass_at_zero,
        "radius": seq.radius,
        "truncation_error": seq.truncation_error,
        "value_truncation": seq.value_truncation,
        "exterior_row_sum": seq.exterior_row_sum(),
        "tail_fit": fit,
    });
    std::fs::write(out.join("couplings.json"), serde_json::to_string_pretty(&sidecar)?)?;
    if let Some(fit) = &sidecar["tail_fit"].as_object() {
        println!(
            "tail exponent {:.4} (constant {:.4e}, residual {:.3})",
            fit["exponent"].as_f64().unwrap_or(f64::NAN),
            fit["constant"].as_f64().unwrap_or(f64::NAN),
            fit["residual"].as_f64().unwrap_or(f64::NAN)
        );
    }
    println!("wrote {}", out.join("couplings.csv").display());
    Ok(())
}

fn cmd_couplings(cli: &Cli, a: &CouplingsArgs) -> anyhow::Result<()> {
    let window = match &a.window {
        Some(w) => (w[0], w[1]),
        None => ((a.radius / 16).max(8), a.radius),
    };
    let method = match a.method.as_str() {
        "dp" => CouplingMethod::Dp,
        "mc" | "monte-carlo" => CouplingMethod::MonteCarlo,
        other => return Err(anyhow!("unknown method {other}; use dp or mc")),
    };
    let params = BesselCouplingParams {
        s: a.s,
        radius: a.radius,
        horizon: a.horizon,
        tail_tolerance: 1e-2,
        method,
        samples: a.samples,
        seed: cli.seed,
    };
    let seq = match a.source {
        SourceArg::Spitzer => spitzer_couplings(a.radius)?,
        SourceArg::PowerLaw => power_law_couplings(a.alpha, a.radius)?,
        SourceArg::Fourier => fourier_couplings(a.u, a.radius, 1 << 14)?,
        SourceArg::BesselDiamond => bessel_couplings(&params)?,
        SourceArg::BesselGrid => grid_bessel_couplings(a.d, &params)?,
    };
    save_couplings(&cli.out, &seq, window)
}

fn cmd_walk(cli: &Cli, a: &WalkArgs) -> anyhow::Result<()> {
    let geometry = match a.geometry.as_str() {
        "diamond" => Geometry::Diamond,
        "grid" => Geometry::Grid { d: a.d },
        other => return Err(anyhow!("unknown geometry {other}")),
    };
    let spec = WalkSpec {
        geometry,
        s: a.s,
        max_steps: a.max_steps,
        seed: cli.seed,
        reflect: false,
    };
    let hist = return_site_histogram(&spec, a.n_samples, a.radius)?;
    std::fs::create_dir_all(&cli.out)?;
    let mut rows = Vec::new();
    for r in 0..=a.radius {
        rows.push(vec![
            r as f64,
            hist.counts[r] as f64,
            hist.frequency(r),
            hist.stderr(r),
        ]);
    }
    write_csv(&cli.out.join("walk.csv"), "site,count,frequency,stderr", &rows)?;
    println!(
        "samples {}, censored {}, beyond radius {}",
        hist.samples, hist.censored, hist.beyond_radius
    );
    println!("wrote {}", cli.out.join("walk.csv").display());
    Ok(())
}

fn cmd_green(cli: &Cli, a: &GreenArgs) -> anyhow::Result<()> {
    let domain = match a.domain.as_str() {
        "box2d" => build_domain(DomainKind::Box2d { n: a.n })?,
        "torus2d" => build_domain(DomainKind::Torus2d { n: a.n })?.with_killed_cell(0, 0)?,
        "half-plane" => build_domain(DomainKind::HalfPlaneFreeBottom { n: a.n })?,
        "slit" => fracchain_core::gaussian::slit_domain_with_conductances(
            DomainKind::SlitDiamond { n: a.n, box_factor: a.m },
            a.s,
        )?,
        "smoothed-slit" => fracchain_core::gaussian::slit_domain_with_conductances(
            DomainKind::SmoothedSlit { n: a.n, m: a.m },
            a.s,
        )?,
        other => return Err(anyhow!("unknown domain {other}")),
    };
    let cell = domain
        .grid
        .cell(a.source_x, a.source_y)
        .filter(|&c| domain.grid.is_alive(c))
        .ok_or_else(|| anyhow!("source ({}, {}) not alive in the domain", a.source_x, a.source_y))?;
    let mut solver = GreenSolver::new(&domain)?;
    let table = solver.green(cell)?;
    std::fs::create_dir_all(&cli.out)?;
    let mut rows = Vec::new();
    for c in domain.grid.alive_cells() {
        let v = table.value(c);
        if v != 0.0 {
            let (x, y) = domain.grid.world(c);
            rows.push(vec![x as f64, y as f64, v]);
        }
    }
    write_csv(&cli.out.join("green.csv"), "x,y,value", &rows)?;
    let sidecar = serde_json::json!({
        "iterations": table.stats.iterations,
        "relative_residual": table.stats.relative_residual,
        "g_xx": table.value(cell),
        "alive_cells": domain.grid.alive_count(),
    });
    std::fs::write(cli.out.join("green.json"), serde_json::to_string_pretty(&sidecar)?)?;
    println!(
        "G(x,x) = {:.6} ({} iterations, residual {:.2e})",
        table.value(cell),
        table.stats.iterations,
        table.stats.relative_residual
    );
    Ok(())
}

fn chain_couplings(alpha: f64, spitzer: bool, radius: usize) -> anyhow::Result<CouplingSequence> {
    Ok(if spitzer || alpha == 2.0 {
        spitzer_couplings(radius)?
    } else {
        power_law_couplings(alpha, radius)?
    })
}

fn cmd_chain_gaussian(cli: &Cli, a: &ChainGaussianArgs) -> anyhow::Result<()> {
    let seq = chain_couplings(a.alpha, a.spitzer, 2 * a.n + 2)?;
    let prec = chain_precision(&seq, a.n, a.beta)?;
    let factor = prec.factor()?;
    let col = factor.covariance_column(0);
    std::fs::create_dir_all(&cli.out)?;
    let rows: Vec<Vec<f64>> = (0..col.len())
        .map(|i| vec![(i as i64 - a.n as i64) as f64, col[i]])
        .collect();
    write_csv(&cli.out.join("covariance_column.csv"), "site,cov_with_centre", &rows)?;
    // variance profile along the chain
    let mut prows = Vec::new();
    for k in (0..=a.n).step_by((a.n / 32).max(1)) {
        let var = factor.covariance_column(k as i64)[a.n + k];
        prows.push(vec![k as f64 / a.n as f64, var]);
    }
    write_csv(&cli.out.join("variance_profile.csv"), "x,var", &prows)?;
    println!("Var(centre) = {:.6}", col[a.n]);
    Ok(())
}

fn cmd_chain_integer(cli: &Cli, a: &ChainIntegerArgs) -> anyhow::Result<()> {
    let seq = chain_couplings(a.alpha, a.alpha == 2.0, 2 * a.n + 2)?;
    let prec = chain_precision(&seq, a.n, a.beta)?;
    let gauss_var = prec.factor()?.covariance_column(0)[a.n];
    let centre = a.n;
    let mut model = GibbsModel::new(Host::Chain { precision: prec }, a.v, a.lambda.unwrap_or(0.0));
    let sites: Vec<usize> = (0..model.value_len()).collect();
    let rule = if a.lambda.is_some() { SiteRule::SineGordon } else { SiteRule::Integer };
    model.set_rules(&sites, rule);
    let obs = ObservableSpec {
        variance_sites: vec![centre, centre / 2, 3 * centre / 2],
        ..Default::default()
    };
    let params = RunParams {
        chains: a.chains,
        ..RunParams::new(a.sweeps, a.burn_in, cli.seed)
    };
    let out = run_experiment(&model, &obs, &params)?;
    std::fs::create_dir_all(&cli.out)?;
    let mut rows = Vec::new();
    for (k, &site) in obs.variance_sites.iter().enumerate() {
        rows.push(vec![
            site as f64 - a.n as f64,
            out.site_variance[k].value,
            out.site_variance[k].stderr,
            out.site_variance[k].batches as f64,
        ]);
    }
    write_csv(&cli.out.join("chain_integer.csv"), "site,variance,stderr,batches", &rows)?;
    println!(
        "Var_IG(centre) = {:.5} +- {:.5}  ratio to Gaussian {:.4} ({} drift warnings)",
        out.site_variance[0].value,
        out.site_variance[0].stderr,
        out.site_variance[0].value / gauss_var,
        out.drift_warnings
    );
    Ok(())
}

fn cmd_gff2d(cli: &Cli, a: &Gff2dArgs) -> anyhow::Result<()> {
    let domain = match a.geometry.as_str() {
        "box" => build_domain(DomainKind::Box2d { n: a.n })?,
        "torus" => build_domain(DomainKind::Torus2d { n: a.n })?.with_killed_cell(0, 0)?,
        other => return Err(anyhow!("unknown geometry {other}")),
    };
    let mut solver = GreenSolver::new(&domain)?;
    let half = (a.n / 2) as i64;
    let probe = domain.grid.cell(0, half).unwrap();
    let gauss_var = solver.pairing_variance(&[(probe, 1.0)], a.beta)?;
    let deg = fracchain_core::solver::degrees(&domain.grid)?;
    let line_cells: Vec<usize> = domain.line.iter().map(|&(_, c)| c).collect();
    let mut model = GibbsModel::new(
        Host::Nn2d { domain, beta: a.beta, deg },
        a.v,
        0.0,
    );
    model.set_rules(&line_cells, SiteRule::Integer);
    let obs = ObservableSpec {
        variance_sites: vec![probe],
        ..Default::default()
    };
    let params = RunParams {
        chains: a.chains,
        ..RunParams::new(a.sweeps, a.burn_in, cli.seed)
    };
    let out = run_experiment(&model, &obs, &params)?;
    std::fs::create_dir_all(&cli.out)?;
    write_csv(
        &cli.out.join("gff2d_line.csv"),
        "observable,estimate,stderr,batches",
        &[vec![
            0.0,
            out.site_variance[0].value,
            out.site_variance[0].stderr,
            out.site_variance[0].batches as f64,
        ]],
    )?;
    println!(
        "bulk Var_IG = {:.5} +- {:.5}, Gaussian {:.5}, ratio {:.4}",
        out.site_variance[0].value,
        out.site_variance[0].stderr,
        gauss_var,
        out.site_variance[0].value / gauss_var
    );
    Ok(())
}

fn cmd_fbm(cli: &Cli, a: &FbmArgs) -> anyhow::Result<()> {
    let h = hurst_from_alpha(a.alpha);
    let seq = power_law_couplings(a.alpha, 2 * a.n + 2)?;
    let factor = chain_precision(&seq, a.n, a.beta)?.factor()?;
    let nf = a.n as f64;
    let scale = nf.powf(-2.0 * h);
    let grid: Vec<f64> = (-8..=8).map(|i| i as f64 * 0.1).collect();
    let mut rows = Vec::new();
    let mut emp = Vec::new();
    let mut tgt = Vec::new();
    for &x in &grid {
        let col = factor.covariance_column((x * nf) as i64);
        for &y in &grid {
            if (x - y).abs() < 0.05 {
                continue;
            }
            let e = scale * col[((y * nf) as i64 + a.n as i64) as usize];
            let t = fbm_cov_dirichlet(h, a.beta, x, y, 1e-10)?;
            emp.push(e);
            tgt.push(t);
            rows.push(vec![x, y, e, t]);
        }
    }
    let fit = shape_fit(&emp, &tgt)?;
    for row in rows.iter_mut() {
        let fitted = fit.k * row[3];
        row.push((row[2] - fitted).abs() / fitted.abs().max(1e-300));
    }
    std::fs::create_dir_all(&cli.out)?;
    write_csv(&cli.out.join("fbm_compare.csv"), "x,y,empirical,target,residual", &rows)?;
    println!("K = {:.5}, max relative residual {:.4}", fit.k, fit.residual);
    Ok(())
}

fn cmd_run(cli: &Cli, a: &RunArgs, default_id: Option<&str>) -> anyhow::Result<bool> {
    let cfg = match (&a.config, default_id) {
        (Some(path), _) => {
            let mut cfg = load_config(path)?;
            if cli.seed != 1 {
                cfg.seed = cli.seed;
            }
            cfg
        }
        (None, Some(id)) => ExperimentConfig::new(id, cli.seed),
        (None, None) => return Err(anyhow!("--config is required")),
    };
    let out_dir = cli.out.join(&cfg.id);
    let output = run(&cfg, Some(&out_dir))?;
    for r in &output.records {
        let mark = if r.passed() { "ok  " } else { "FAIL" };
        println!("{mark} {}::{} = {:.6}", r.experiment, r.metric, r.value);
    }
    println!(
        "{} metrics, artifacts in {}",
        output.records.len(),
        out_dir.display()
    );
    Ok(output.all_passed())
}

fn cmd_report(dir: &Path) -> anyhow::Result<bool> {
    let rep = report(dir)?;
    println!("{:<28} {:>8} {:>8} {:>10}", "experiment", "metrics", "failed", "runtime");
    for row in &rep.rows {
        println!(
            "{:<28} {:>8} {:>8} {:>9.1}s",
            row.experiment, row.metrics, row.failed, row.runtime_secs
        );
    }
    Ok(rep.all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("FRACCHAIN_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let result: anyhow::Result<bool> = match &cli.command {
        Command::Couplings(a) => cmd_couplings(&cli, a).map(|_| true),
        Command::Walk(a) => cmd_walk(&cli, a).map(|_| true),
        Command::Green(a) => cmd_green(&cli, a).map(|_| true),
        Command::ChainGaussian(a) => cmd_chain_gaussian(&cli, a).map(|_| true),
        Command::ChainInteger(a) => cmd_chain_integer(&cli, a).map(|_| true),
        Command::Gff2dLine(a) => cmd_gff2d(&cli, a).map(|_| true),
        Command::Regimes(a) => cmd_run(&cli, a, Some("regimes")),
        Command::FbmCompare(a) => cmd_fbm(&cli, a).map(|_| true),
        Command::Run(a) => cmd_run(&cli, a, None),
        Command::Report { dir } => cmd_report(dir),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.to_string().contains("unknown")
                || e.to_string().contains("required")
                || e.downcast_ref::<fracchain_core::Error>().is_some_and(|ce| {
                    matches!(ce, fracchain_core::Error::Config(_))
                });
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
