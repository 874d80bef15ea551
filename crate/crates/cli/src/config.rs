//! Experiment configuration: one JSON document describing the model, the
//! simulation grid, the replicate fan-out, and the checks to run.

use bdsim_core::builtin::ModelSpec;
use bdsim_core::simulate::SimConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub run: RunSpec,
    /// Named check suites to execute (see `checks::known_checks`).
    #[serde(default)]
    pub checks: Vec<String>,
    /// Initial particle positions; defaults to a single particle at the
    /// origin.
    #[serde(default)]
    pub init: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_delta: Option<f64>,
    #[serde(default)]
    pub extra_snapshots: Vec<f64>,
    #[serde(default = "default_max_particles")]
    pub max_particles: usize,
    #[serde(default = "default_true")]
    pub use_exact_ou: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads for the replicate fan-out; 0 uses the rayon default.
    #[serde(default)]
    pub parallel: usize,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_t_end() -> f64 {
    1.0
}
fn default_max_particles() -> usize {
    1_000_000
}
fn default_true() -> bool {
    true
}
fn default_replicates() -> usize {
    200
}
fn default_seed() -> u64 {
    42
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            dt: default_dt(),
            t_end: default_t_end(),
            snapshot_delta: None,
            extra_snapshots: Vec::new(),
            max_particles: default_max_particles(),
            use_exact_ou: true,
        }
    }
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            replicates: default_replicates(),
            seed: default_seed(),
            parallel: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.sim.dt,
            t_end: self.sim.t_end,
            snapshot_delta: self.sim.snapshot_delta,
            extra_snapshots: self.sim.extra_snapshots.clone(),
            max_particles: self.sim.max_particles,
            seed: self.run.seed,
            use_exact_ou: self.sim.use_exact_ou,
        }
    }

    pub fn init_positions(&self, dim: usize) -> Vec<Vec<f64>> {
        if self.init.is_empty() {
            vec![vec![0.0; dim]]
        } else {
            self.init.clone()
        }
    }

    /// Structural validation; referenced checks are validated separately
    /// against the registry.
    pub fn validate(&self) -> Result<(), String> {
        if self.run.replicates == 0 {
            return Err("run.replicates must be at least 1".into());
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.sim.dt) || !positive(self.sim.t_end) || self.sim.dt > self.sim.t_end {
            return Err(format!(
                "need 0 < dt <= t_end (dt = {}, t_end = {})",
                self.sim.dt, self.sim.t_end
            ));
        }
        if self.sim.max_particles == 0 {
            return Err("sim.max_particles must be at least 1".into());
        }
        for name in &self.checks {
            if !crate::checks::known_checks().contains(&name.as_str()) {
                return Err(format!(
                    "unknown check '{name}' (known: {})",
                    crate::checks::known_checks().join(", ")
                ));
            }
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config parse error: {e}"))
    }
}

/// Default configuration printed by `--print-defaults`.
pub fn default_config() -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSpec {
            kind: bdsim_core::builtin::ModelKind::InwardOuQuadratic {
                sigma: 1.0,
                mu: 2.0,
                b_quad: 1.0,
                beta0: 0.5,
                dim: 1,
            },
            envelope: Default::default(),
        },
        sim: SimSpec::default(),
        run: RunSpec::default(),
        checks: vec!["eigen-structure".into(), "martingale-mean".into()],
        init: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = default_config();
        assert!(cfg.validate().is_ok());
        let json = cfg.to_json_pretty();
        let back = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn zero_replicates_rejected() {
        let mut cfg = default_config();
        cfg.run.replicates = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_check_rejected() {
        let mut cfg = default_config();
        cfg.checks = vec!["no-such-check".into()];
        assert!(cfg.validate().is_err());
    }
}
