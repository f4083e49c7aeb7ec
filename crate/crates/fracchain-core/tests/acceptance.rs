//! Acceptance suite: runs every experiment from its checked-in config and
//! prints one pass/fail line per criterion.
//!
//! ```text
//! cargo test -p fracchain-core --test acceptance -- --nocapture
//! ```

use fracchain_core::experiments::{load_config, run};
use std::path::PathBuf;

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../experiments")
        .canonicalize()
        .expect("experiments/ directory at the workspace root")
}

fn out_dir(id: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(id);
    let _ = std::fs::create_dir_all(&dir);
    dir
}

fn run_criterion(number: usize, id: &str) {
    let cfg = load_config(&config_dir().join(format!("{id}.toml"))).expect("config loads");
    assert_eq!(cfg.id, id);
    let out = run(&cfg, Some(&out_dir(id))).unwrap_or_else(|e| panic!("{id} failed to run: {e}"));
    let failed: Vec<String> = out
        .records
        .iter()
        .filter(|r| !r.passed())
        .map(|r| {
            format!(
                "{} = {:.6} (target {:?} tol {:?})",
                r.metric, r.value, r.target, r.tolerance
            )
        })
        .collect();
    let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };
    println!(
        "criterion {number:2} [{id}] {verdict}: {} metrics, {:.1}s",
        out.records.len(),
        out.records.first().map(|r| r.runtime_secs).unwrap_or(0.0)
    );
    for r in &out.records {
        let mark = if r.passed() { "ok  " } else { "FAIL" };
        match (r.target, r.error) {
            (Some(t), Some(e)) => println!(
                "    {mark} {} = {:.6} +- {:.2e} (target {t:.6}, tol {:.3})",
                r.metric,
                r.value,
                e,
                r.tolerance.unwrap_or(0.0)
            ),
            (Some(t), None) => println!(
                "    {mark} {} = {:.6} (target {t:.6}, tol {:.3})",
                r.metric,
                r.value,
                r.tolerance.unwrap_or(0.0)
            ),
            _ => println!("    {mark} {} = {:.6}", r.metric, r.value),
        }
    }
    assert!(failed.is_empty(), "criterion {number} [{id}]: {failed:?}");
}

#[test]
fn criterion_01_spitzer_identity() {
    run_criterion(1, "spitzer-vs-dp");
}

#[test]
fn criterion_02_mass_normalization() {
    run_criterion(2, "mass-normalization");
}

#[test]
fn criterion_03_first_return_exponent() {
    run_criterion(3, "first-return-exponent");
}

#[test]
fn criterion_04_return_site_exponent() {
    run_criterion(4, "return-site-exponent");
}

#[test]
fn criterion_05_trace_identity() {
    run_criterion(5, "trace-identity");
}

#[test]
fn criterion_06_variance_scaling() {
    run_criterion(6, "variance-scaling");
}

#[test]
fn criterion_07_fbm_shape() {
    run_criterion(7, "fbm-shape");
}

#[test]
fn criterion_08_invisibility_chain() {
    run_criterion(8, "invisibility-chain");
}

#[test]
fn criterion_09_correlation_inequalities() {
    run_criterion(9, "correlation-inequalities");
}

#[test]
fn criterion_10_log_asymptotics_2d() {
    run_criterion(10, "log-asymptotics-2d");
}

#[test]
fn criterion_11_line_conditioned_2d() {
    run_criterion(11, "line-conditioned-2d");
}

#[test]
fn criterion_12_gradient_line_energy() {
    run_criterion(12, "gradient-line-energy");
}

#[test]
fn criterion_13_green_boundary_profile() {
    run_criterion(13, "green-boundary-profile");
}

#[test]
fn criterion_14_regimes() {
    run_criterion(14, "regimes");
}

#[test]
fn criterion_15_renewal_bound() {
    run_criterion(15, "renewal-bound");
}
