//! Config-driven experiment runner.
//!
//! Every experiment is identified by a string id, reads its parameters from
//! a TOML config (checked into `experiments/` at the repository root),
//! writes CSV/JSON artifacts plus a `records.json` verdict list, and is
//! deterministic given the seed. The acceptance suite runs the same
//! registry through [`run`]; the CLI adds output directories and exit
//! codes.

pub mod suite;

use crate::error::{Error, Result};
use crate::svg::Plot;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: toml::Table,
}

impl ExperimentConfig {
    pub fn new(id: &str, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            id: id.to_string(),
            seed,
            params: toml::Table::new(),
        }
    }

    /// Parses the free-form parameter table into the experiment's own
    /// struct; missing fields fall back to the registered defaults.
    pub fn typed_params<T: DeserializeOwned>(&self) -> Result<T> {
        toml::Value::Table(self.params.clone())
            .try_into()
            .map_err(|e| Error::Config(format!("bad parameters for {}: {e}", self.id)))
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let body = std::fs::read_to_string(path)?;
    toml::from_str(&body).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// One metric produced by an experiment, with its pass verdict when the
/// metric carries an acceptance tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub metric: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
    pub runtime_secs: f64,
}

impl ResultRecord {
    pub fn info(experiment: &str, metric: &str, value: f64) -> ResultRecord {
        ResultRecord {
            experiment: experiment.to_string(),
            metric: metric.to_string(),
            value,
            error: None,
            target: None,
            tolerance: None,
            pass: None,
            runtime_secs: 0.0,
        }
    }

    pub fn with_error(mut self, error: f64) -> ResultRecord {
        self.error = Some(error);
        self
    }

    /// Checked against `|value - target| <= tolerance`.
    pub fn against(mut self, target: f64, tolerance: f64) -> ResultRecord {
        self.target = Some(target);
        self.tolerance = Some(tolerance);
        self.pass = Some((self.value - target).abs() <= tolerance);
        self
    }

    /// Checked against `value <= bound`.
    pub fn at_most(mut self, bound: f64) -> ResultRecord {
        self.target = Some(bound);
        self.tolerance = Some(0.0);
        self.pass = Some(self.value <= bound);
        self
    }

    /// Checked against `value >= bound`.
    pub fn at_least(mut self, bound: f64) -> ResultRecord {
        self.target = Some(bound);
        self.tolerance = Some(0.0);
        self.pass = Some(self.value >= bound);
        self
    }

    /// Interval check with optional statistical slack: passes when
    /// `[value - 3 err, value + 3 err]` overlaps `[lo, hi]`.
    pub fn in_interval(mut self, lo: f64, hi: f64) -> ResultRecord {
        let slack = 3.0 * self.error.unwrap_or(0.0);
        self.target = Some(0.5 * (lo + hi));
        self.tolerance = Some(0.5 * (hi - lo));
        self.pass = Some(self.value + slack >= lo && self.value - slack <= hi);
        self
    }

    pub fn passed(&self) -> bool {
        self.pass.unwrap_or(true)
    }
}

/// Artifact writer; silently inert when no output directory is configured.
pub struct ArtifactSink {
    dir: Option<PathBuf>,
    written: Vec<PathBuf>,
}

impl ArtifactSink {
    pub fn new(dir: Option<&Path>) -> Result<ArtifactSink> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(ArtifactSink {
            dir: dir.map(|d| d.to_path_buf()),
            written: Vec::new(),
        })
    }

    pub fn csv(&mut self, name: &str, header: &str, rows: &[Vec<f64>]) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut body = String::with_capacity(rows.len() * 32);
        let _ = writeln!(body, "{header}");
        for row in rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(body, "{}", line.join(","));
        }
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(value).unwrap())?;
        self.written.push(path);
        Ok(())
    }

    pub fn plot(&mut self, name: &str, plot: &Plot<'_>) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(name);
        plot.write_to(&path)?;
        self.written.push(path);
        Ok(())
    }
}

pub struct RunOutput {
    pub records: Vec<ResultRecord>,
    pub artifacts: Vec<PathBuf>,
}

impl RunOutput {
    pub fn all_passed(&self) -> bool {
        self.records.iter().all(|r| r.passed())
    }
}

/// All experiment ids, one per acceptance criterion.
pub const EXPERIMENT_IDS: [&str; 15] = [
    "spitzer-vs-dp",
    "mass-normalization",
    "first-return-exponent",
    "return-site-exponent",
    "trace-identity",
    "variance-scaling",
    "fbm-shape",
    "invisibility-chain",
    "correlation-inequalities",
    "log-asymptotics-2d",
    "line-conditioned-2d",
    "gradient-line-energy",
    "green-boundary-profile",
    "regimes",
    "renewal-bound",
];

/// Runs one experiment; artifacts (CSV, JSON, SVG and the resolved config)
/// land in `out_dir` when given.
pub fn run(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunOutput> {
    let start = std::time::Instant::now();
    let mut sink = ArtifactSink::new(out_dir)?;
    let mut records = match cfg.id.as_str() {
        "spitzer-vs-dp" => suite::spitzer_vs_dp(cfg, &mut sink),
        "mass-normalization" => suite::mass_normalization(cfg, &mut sink),
        "first-return-exponent" => suite::first_return_exponent(cfg, &mut sink),
        "return-site-exponent" => suite::return_site_exponent(cfg, &mut sink),
        "trace-identity" => suite::trace_identity(cfg, &mut sink),
        "variance-scaling" => suite::variance_scaling(cfg, &mut sink),
        "fbm-shape" => suite::fbm_shape(cfg, &mut sink),
        "invisibility-chain" => suite::invisibility_chain(cfg, &mut sink),
        "correlation-inequalities" => suite::correlation_inequalities(cfg, &mut sink),
        "log-asymptotics-2d" => suite::log_asymptotics_2d(cfg, &mut sink),
        "line-conditioned-2d" => suite::line_conditioned_2d(cfg, &mut sink),
        "gradient-line-energy" => suite::gradient_line_energy(cfg, &mut sink),
        "green-boundary-profile" => suite::green_boundary_profile(cfg, &mut sink),
        "regimes" => suite::regimes(cfg, &mut sink),
        "renewal-bound" => suite::renewal_bound(cfg, &mut sink),
        other => Err(Error::Config(format!("unknown experiment id {other:?}"))),
    }?;
    let elapsed = start.elapsed().as_secs_f64();
    for r in records.iter_mut() {
        r.runtime_secs = elapsed;
    }
    sink.json("records.json", &records)?;
    sink.json("config.resolved.json", cfg)?;
    Ok(RunOutput {
        records,
        artifacts: sink.written,
    })
}

/// Summary of a run directory: one row per experiment with its verdict.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub experiment: String,
    pub metrics: usize,
    pub failed: usize,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub all_pass: bool,
}

/// Reads `records.json` files from the immediate subdirectories of a run
/// directory and tabulates pass/fail per experiment.
pub fn report(dir: &Path) -> Result<Report> {
    let mut rows = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for sub in entries {
        let path = sub.join("records.json");
        if !path.exists() {
            continue;
        }
        let body = std::fs::read_to_string(&path)?;
        let records: Vec<ResultRecord> = serde_json::from_str(&body)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let experiment = records
            .first()
            .map(|r| r.experiment.clone())
            .unwrap_or_else(|| sub.file_name().unwrap().to_string_lossy().into_owned());
        let failed = records.iter().filter(|r| !r.passed()).count();
        let runtime = records.first().map(|r| r.runtime_secs).unwrap_or(0.0);
        rows.push(ReportRow {
            experiment,
            metrics: records.len(),
            failed,
            runtime_secs: runtime,
        });
    }
    let all_pass = rows.iter().all(|r| r.failed == 0);
    Ok(Report { rows, all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip() {
        let text = "id = \"spitzer-vs-dp\"\nseed = 42\n\n[params]\nradius = 24\n";
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.id, "spitzer-vs-dp");
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.params["radius"].as_integer(), Some(24));
    }

    #[test]
    fn record_verdicts() {
        let r = ResultRecord::info("x", "m", 1.95).against(2.0, 0.1);
        assert!(r.passed());
        let r = ResultRecord::info("x", "m", 2.2).against(2.0, 0.1);
        assert!(!r.passed());
        let r = ResultRecord::info("x", "m", 1.02).with_error(0.01).in_interval(0.9, 1.0);
        assert!(r.passed(), "3 sigma slack admits 1.02 +- 0.01");
        let r = ResultRecord::info("x", "m", 1.2).with_error(0.01).in_interval(0.9, 1.0);
        assert!(!r.passed());
    }

    #[test]
    fn unknown_experiment_is_an_error() {
        let cfg = ExperimentConfig::new("no-such-thing", 1);
        assert!(run(&cfg, None).is_err());
    }

    #[test]
    fn reruns_reproduce_csv_bytes() {
        let mut cfg = ExperimentConfig::new("spitzer-vs-dp", 9);
        cfg.params.insert("horizon".into(), toml::Value::Integer(1 << 14));
        let base = std::env::temp_dir().join("fracchain-rerun");
        let (a, b) = (base.join("a"), base.join("b"));
        run(&cfg, Some(&a)).unwrap();
        run(&cfg, Some(&b)).unwrap();
        let x = std::fs::read(a.join("couplings.csv")).unwrap();
        let y = std::fs::read(b.join("couplings.csv")).unwrap();
        assert_eq!(x, y, "couplings.csv differs between reruns");
        let _ = std::fs::remove_dir_all(base);
    }

    #[test]
    fn report_over_empty_directory() {
        let dir = std::env::temp_dir().join("fracchain-empty-report");
        std::fs::create_dir_all(&dir).unwrap();
        let rep = report(&dir).unwrap();
        assert!(rep.rows.is_empty());
        assert!(rep.all_pass);
    }
}
