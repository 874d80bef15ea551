//! Executes the checks of one experiment config and writes the artifact
//! files: per-check JSON reports, per-series CSVs, a plain-text summary,
//! and a reproducibility manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checks::{self, CheckReport};
use crate::config::ExperimentConfig;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub package_version: &'static str,
    pub checks: Vec<String>,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub reports: Vec<CheckReport>,
    pub all_passed: bool,
    pub out_dir: PathBuf,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Run every configured check, writing artifacts under `out_dir`.
/// Replicate fan-out happens inside a dedicated thread pool when
/// `run.parallel` is nonzero; file writes are serialized here.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate().map_err(anyhow::Error::msg)?;
    if cfg.checks.is_empty() {
        anyhow::bail!("no checks configured");
    }
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let reports = if cfg.run.parallel > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.parallel)
            .build()
            .context("building thread pool")?;
        pool.install(|| run_all_checks(cfg))?
    } else {
        run_all_checks(cfg)?
    };

    let mut summary = String::new();
    for report in &reports {
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(out_dir.join(format!("{}.json", report.check)), json)?;
        for series in &report.series {
            let mut buf = Vec::new();
            series.write_csv(&mut buf)?;
            fs::write(
                out_dir.join(format!("{}-{}.csv", report.check, series.label)),
                buf,
            )?;
        }
        for line in &report.lines {
            summary.push_str(&checks::render_line(&report.check, line));
            summary.push('\n');
        }
    }
    fs::write(out_dir.join("summary.txt"), &summary)?;

    let passed = reports.iter().filter(|r| r.pass).count();
    let manifest = Manifest {
        config_hash: config_hash(cfg),
        seed: cfg.run.seed,
        package_version: env!("CARGO_PKG_VERSION"),
        checks: cfg.checks.clone(),
        passed,
        failed: reports.len() - passed,
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    fs::write(out_dir.join("config.json"), cfg.to_json_pretty())?;

    let all_passed = reports.iter().all(|r| r.pass);
    Ok(RunOutcome {
        reports,
        all_passed,
        out_dir: out_dir.to_path_buf(),
    })
}

fn run_all_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckReport>> {
    cfg.checks
        .iter()
        .map(|name| checks::run_check(name, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canned;

    #[test]
    fn runner_writes_artifacts_and_reruns_identically() {
        let cfg = canned::get("compact-bbm-eigen").unwrap();
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let out1 = run(&cfg, dir1.path()).unwrap();
        let out2 = run(&cfg, dir2.path()).unwrap();
        assert!(out1.all_passed && out2.all_passed);
        for name in ["summary.txt", "manifest.json", "config.json"] {
            let a = fs::read(dir1.path().join(name)).unwrap();
            let b = fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "artifact {name} differs between identical runs");
        }
    }

    #[test]
    fn bounded_pool_matches_default_pool() {
        // replicate streams make results independent of thread scheduling
        let mut cfg = canned::get("inward-ou-martingale").unwrap();
        cfg.run.replicates = 200;
        let dir1 = tempfile::tempdir().unwrap();
        run(&cfg, dir1.path()).unwrap();
        cfg.run.parallel = 2;
        let dir2 = tempfile::tempdir().unwrap();
        run(&cfg, dir2.path()).unwrap();
        let a = fs::read(dir1.path().join("martingale-mean-w_phi_final.csv")).unwrap();
        let b = fs::read(dir2.path().join("martingale-mean-w_phi_final.csv")).unwrap();
        assert_eq!(a, b, "pool width changed the results");
    }

    #[test]
    fn empty_checks_rejected() {
        let mut cfg = canned::get("inward-ou-eigen").unwrap();
        cfg.checks.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(run(&cfg, dir.path()).is_err());
    }
}
