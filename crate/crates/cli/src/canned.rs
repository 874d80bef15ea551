//! Canned experiment configurations covering the verification surface of
//! the three built-in models at their reference parameters.

use bdsim_core::builtin::{EnvelopeParams, ModelKind, ModelSpec};

use crate::config::{ExperimentConfig, RunSpec, SimSpec};

fn inward_spec(envelope: EnvelopeParams) -> ModelSpec {
    ModelSpec {
        kind: ModelKind::InwardOuQuadratic {
            sigma: 1.0,
            mu: 2.0,
            b_quad: 1.0,
            beta0: 0.5,
            dim: 1,
        },
        envelope,
    }
}

fn outward_spec(mu: f64) -> ModelSpec {
    ModelSpec {
        kind: ModelKind::OutwardOuConstant {
            sigma: 1.0,
            mu,
            b_const: 1.0,
            dim: 1,
        },
        envelope: EnvelopeParams::default(),
    }
}

fn compact_spec() -> ModelSpec {
    ModelSpec {
        kind: ModelKind::CompactBetaBbm {
            big_m: 1.0,
            half_width: 1.0,
        },
        envelope: EnvelopeParams::default(),
    }
}

fn base(model: ModelSpec, checks: &[&str]) -> ExperimentConfig {
    ExperimentConfig {
        model,
        sim: SimSpec::default(),
        run: RunSpec::default(),
        checks: checks.iter().map(|c| c.to_string()).collect(),
        init: Vec::new(),
    }
}

pub fn list() -> Vec<(&'static str, &'static str)> {
    vec![
        ("inward-ou-eigen", "inward-OU eigen-structure residuals"),
        ("outward-ou-eigen", "outward-OU eigen-structure residuals"),
        ("compact-bbm-eigen", "compact-breeding eigen-structure and eigenvalue cross-check"),
        ("inward-ou-martingale", "additive-martingale mean against phi(x), 2000 replicates"),
        ("inward-ou-weights", "unit-mean h-transform and Poisson tilt weights"),
        ("inward-ou-tilted", "tilted ensemble vs martingale reweighting, 4000 per ensemble"),
        ("inward-ou-spine-decomposition", "nested Monte Carlo check of the spine decomposition"),
        ("inward-ou-envelope", "support containment, mixing condition, and tail bound"),
        ("inward-ou-lp-bound", "spine/sum term limits of the L^p bound"),
        ("outward-ou-slln", "strong-law ratio trend toward 1, 200 replicates"),
        ("outward-ou-extinction", "local-extinction direction for lambda_c = -1"),
        ("outward-ou-occupation", "persistent charging of the unit ball for lambda_c = 0.5"),
    ]
}

pub fn get(name: &str) -> Option<ExperimentConfig> {
    let cfg = match name {
        "inward-ou-eigen" => base(inward_spec(EnvelopeParams::default()), &["eigen-structure"]),
        "outward-ou-eigen" => base(outward_spec(0.5), &["eigen-structure"]),
        "compact-bbm-eigen" => {
            base(compact_spec(), &["eigen-structure", "compact-eigenvalue"])
        }
        "inward-ou-martingale" => {
            let mut c = base(inward_spec(EnvelopeParams::default()), &["martingale-mean"]);
            c.sim.dt = 1e-3;
            c.sim.t_end = 1.0;
            c.run.replicates = 2000;
            c
        }
        "inward-ou-weights" => {
            let mut c = base(
                inward_spec(EnvelopeParams::default()),
                &["girsanov-weight", "poisson-tilt"],
            );
            c.sim.dt = 1e-3;
            c.sim.t_end = 1.0;
            c.run.replicates = 5000;
            c
        }
        "inward-ou-tilted" => {
            let mut c = base(inward_spec(EnvelopeParams::default()), &["tilted-consistency"]);
            c.sim.dt = 2e-3;
            c.sim.t_end = 1.0;
            c.run.replicates = 4000;
            c
        }
        "inward-ou-spine-decomposition" => {
            let mut c = base(
                inward_spec(EnvelopeParams::default()),
                &["spine-decomposition"],
            );
            c.sim.dt = 2e-3;
            c.sim.t_end = 1.0;
            c.run.replicates = 50; // spines; 200 re-draws each
            c
        }
        "inward-ou-envelope" => {
            // the asymptotic conditions hold for any positive envelope
            // parameters; finite-horizon thresholds need the looser choice
            let mut c = base(
                inward_spec(EnvelopeParams {
                    eps: 2.0,
                    delta: 0.1,
                    lambda_factor: 3.0,
                }),
                &["spine-mixing", "support-containment", "envelope-tail"],
            );
            c.sim.dt = 2e-3;
            c.run.replicates = 500;
            c
        }
        "inward-ou-lp-bound" => base(inward_spec(EnvelopeParams::default()), &["lp-bound-terms"]),
        "outward-ou-slln" => {
            // lambda_c = b - mu = 0.5 for any sigma; the tighter motion
            // concentrates phi and the ball mass on the same region, which
            // keeps the self-normalized ratio well conditioned at t = 6
            let mut c = base(
                ModelSpec {
                    kind: ModelKind::OutwardOuConstant {
                        sigma: 0.5,
                        mu: 0.5,
                        b_const: 1.0,
                        dim: 1,
                    },
                    envelope: EnvelopeParams::default(),
                },
                &["slln-trend"],
            );
            c.sim.dt = 2e-3;
            c.sim.t_end = 6.0;
            c.sim.extra_snapshots = vec![2.0];
            c.run.replicates = 200;
            c
        }
        "outward-ou-extinction" => {
            let mut c = base(outward_spec(2.0), &["extinction-trend"]);
            c.sim.dt = 0.05;
            c.sim.t_end = 10.0;
            c.sim.extra_snapshots = vec![2.0, 6.0];
            c.run.replicates = 500;
            c
        }
        "outward-ou-occupation" => {
            let mut c = base(outward_spec(0.5), &["occupation-persistence"]);
            c.sim.dt = 0.05;
            c.sim.t_end = 10.0;
            c.run.replicates = 500;
            c
        }
        _ => return None,
    };
    Some(cfg)
}
