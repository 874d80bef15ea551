//! Human-readable summaries: the model table and re-rendering of a
//! previous run's artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use bdsim_core::stats::growth_classifier;

use crate::canned;

/// Table of the built-in models at their reference parameters. Columns:
/// eigenvalue, growth classification, admissible moment range, whether the
/// breeding rate is bounded, and the extinction flag.
pub fn model_table() -> Result<String> {
    let mut out = String::new();
    writeln!(
        out,
        "{:<24} {:>10}  {:<22} {:<18} {:<8} regime",
        "model", "lambda_c", "growth", "admissible p", "beta"
    )?;
    for name in ["inward-ou-eigen", "outward-ou-eigen", "compact-bbm-eigen"] {
        let cfg = canned::get(name).expect("canned config");
        let model = cfg.model.build().map_err(|e| anyhow::anyhow!("{e}"))?;
        let growth = format!("{:?}", growth_classifier(&model));
        let p_range = if model.p_critical_sup.is_infinite() {
            "p > 1".to_string()
        } else {
            format!("1 < p < {:.4}", model.p_critical_sup)
        };
        writeln!(
            out,
            "{:<24} {:>10.5}  {:<22} {:<18} {:<8} {}",
            cfg.model.name(),
            model.lambda_c(),
            growth,
            p_range,
            if model.beta_bounded { "bounded" } else { "unbounded" },
            if model.local_extinction_expected {
                "local extinction expected"
            } else {
                "local exponential growth"
            },
        )?;
    }
    Ok(out)
}

/// Re-render the summary of a finished run directory.
pub fn render_run_dir(dir: &Path) -> Result<String> {
    let manifest = fs::read_to_string(dir.join("manifest.json"))
        .with_context(|| format!("no manifest.json in {}", dir.display()))?;
    let summary = fs::read_to_string(dir.join("summary.txt")).unwrap_or_default();
    Ok(format!("{manifest}\n\n{summary}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_table_mentions_all_builtins() {
        let table = model_table().unwrap();
        assert!(table.contains("inward-ou-quadratic"));
        assert!(table.contains("outward-ou-constant"));
        assert!(table.contains("compact-beta-bbm"));
        // outward-OU: global growth exceeds local
        assert!(table.contains("GlobalExceedsLocal"));
        // inward-OU admissible p threshold gamma+/gamma- = 3 + 2 sqrt 2
        assert!(table.contains("5.8284"));
    }
}
