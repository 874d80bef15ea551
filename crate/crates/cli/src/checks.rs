//! Named verification checks. Each check builds the configured model,
//! runs its statistic, and reports one or more criterion lines
//! `(label, statistic, threshold, pass)` plus any exportable series.

use anyhow::{anyhow, bail, Result};
use bdsim_core::model::{
    check_adjoint_harmonicity, check_harmonicity, check_spine_drift, fd_principal_eigenvalue,
    linspace_grid, Model,
};
use bdsim_core::builtin::{solve_lambda_c_compact, ModelKind};
use bdsim_core::simulate::{replicate_rng, run_replicates};
use bdsim_core::spine::{
    conditional_w_sample, girsanov_weight, lp_bound_terms, poisson_tilt_weight,
    sample_motion_path, simulate_tilted_with_rng, spine_conditional_expectation, Measure,
};
use bdsim_core::stats::{
    capped_count, check_spine_mixing, check_support_containment, local_extinction_probe, envelope_tail_bound,
    slln_ratio, w_phi, StatSeries, TestFunction,
};
use bdsim_core::stattest::{
    mean_se, median, proportion_increase_p, sign_test_decrease_p, z_score_two,
};
use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cmp {
    Below,
    AtLeast,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionLine {
    pub label: String,
    pub statistic: f64,
    pub threshold: f64,
    pub cmp: Cmp,
    pub pass: bool,
}

impl CriterionLine {
    fn below(label: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        CriterionLine {
            label: label.into(),
            statistic,
            threshold,
            cmp: Cmp::Below,
            pass: statistic < threshold && statistic.is_finite(),
        }
    }

    fn at_least(label: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        CriterionLine {
            label: label.into(),
            statistic,
            threshold,
            cmp: Cmp::AtLeast,
            pass: statistic >= threshold && statistic.is_finite(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub lines: Vec<CriterionLine>,
    pub pass: bool,
    #[serde(skip)]
    pub series: Vec<StatSeries>,
}

impl CheckReport {
    fn new(check: &str, lines: Vec<CriterionLine>, series: Vec<StatSeries>) -> Self {
        let pass = lines.iter().all(|l| l.pass);
        CheckReport {
            check: check.to_string(),
            lines,
            pass,
            series,
        }
    }
}

pub fn known_checks() -> Vec<&'static str> {
    vec![
        "eigen-structure",
        "compact-eigenvalue",
        "martingale-mean",
        "girsanov-weight",
        "poisson-tilt",
        "tilted-consistency",
        "spine-decomposition",
        "slln-trend",
        "extinction-trend",
        "occupation-persistence",
        "spine-mixing",
        "support-containment",
        "envelope-tail",
        "lp-bound-terms",
    ]
}

pub fn run_check(name: &str, cfg: &ExperimentConfig) -> Result<CheckReport> {
    let model = cfg
        .model
        .build()
        .map_err(|e| anyhow!("model build failed: {e}"))?;
    match name {
        "eigen-structure" => eigen_structure(&model),
        "compact-eigenvalue" => compact_eigenvalue(&model),
        "martingale-mean" => martingale_mean(&model, cfg),
        "girsanov-weight" => girsanov_check(&model, cfg),
        "poisson-tilt" => poisson_tilt_check(cfg),
        "tilted-consistency" => tilted_consistency(&model, cfg),
        "spine-decomposition" => spine_decomposition(&model, cfg),
        "slln-trend" => slln_trend(&model, cfg),
        "extinction-trend" => extinction_trend(&model, cfg),
        "occupation-persistence" => occupation_persistence(&model, cfg),
        "spine-mixing" => spine_mixing_check(&model),
        "support-containment" => support_containment_check(&model, cfg),
        "envelope-tail" => envelope_tail_check(&model),
        "lp-bound-terms" => lp_bound_check(&model),
        other => bail!("unknown check '{other}'"),
    }
}

fn harmonicity_grid(model: &Model) -> Vec<Vec<f64>> {
    match model.spec.as_ref().map(|s| &s.kind) {
        Some(ModelKind::CompactBetaBbm { half_width, .. }) => {
            // keep well clear of the breeding-rate junctions
            let b = *half_width;
            let mut grid = linspace_grid(-b + 0.05 * b, b - 0.05 * b, 21);
            grid.extend(linspace_grid(b + 0.05 * b, 3.0 * b.max(1.0), 21));
            grid.extend(linspace_grid(-3.0 * b.max(1.0), -b - 0.05 * b, 21));
            grid
        }
        _ => linspace_grid(-3.0, 3.0, 61),
    }
}

fn eigen_structure(model: &Model) -> Result<CheckReport> {
    let pairing = model
        .phi_pairing_integral()
        .map_err(|e| anyhow!("pairing quadrature: {e}"))?;
    let grid = harmonicity_grid(model);
    let dx = 1e-3;
    let lines = vec![
        CriterionLine::below("normalization |<phi,phi_tilde> - 1|", (pairing - 1.0).abs(), 1e-6),
        CriterionLine::below(
            "harmonicity residual (L + beta - lambda_c) phi",
            check_harmonicity(model, &grid, dx),
            1e-4,
        ),
        // the steeper adjoint eigenfunction needs a finer step to push the
        // truncation error below the same bound
        CriterionLine::below(
            "adjoint residual (L* + beta - lambda_c) phi_tilde",
            check_adjoint_harmonicity(model, &grid, 1e-4),
            1e-4,
        ),
        CriterionLine::below(
            "spine drift vs drift + a grad(phi)/phi",
            check_spine_drift(model, &grid, 1e-5),
            1e-5,
        ),
    ];
    Ok(CheckReport::new("eigen-structure", lines, vec![]))
}

fn compact_eigenvalue(model: &Model) -> Result<CheckReport> {
    let Some(ModelKind::CompactBetaBbm { big_m, half_width }) =
        model.spec.as_ref().map(|s| s.kind.clone())
    else {
        bail!("compact-eigenvalue runs on the compact-breeding model only");
    };
    let matched = solve_lambda_c_compact(big_m, half_width, 1e-10)
        .map_err(|e| anyhow!("matching equation: {e}"))?;
    let beta = |x: f64| if x.abs() <= half_width { big_m } else { 0.0 };
    let fd = fd_principal_eigenvalue(&beta, 20.0, 4000);
    let lines = vec![
        CriterionLine::below(
            "matching-equation lambda_c vs finite-difference oracle",
            (matched - fd).abs(),
            1e-3,
        ),
        CriterionLine::below("lambda_c below sup beta", matched, big_m),
        CriterionLine::at_least("lambda_c positive", matched, f64::MIN_POSITIVE),
    ];
    Ok(CheckReport::new("compact-eigenvalue", lines, vec![]))
}

/// Shared guard: fraction of replicates truncated by the particle cap.
fn capped_line(capped: usize, total: usize) -> CriterionLine {
    CriterionLine::below(
        "capped replicate fraction",
        capped as f64 / total as f64,
        0.5,
    )
}

fn martingale_mean(model: &Model, cfg: &ExperimentConfig) -> Result<CheckReport> {
    let sim = cfg.sim_config();
    let init = cfg.init_positions(model.dim);
    let x0 = init[0].clone();
    let reps = cfg.run.replicates;
    let rows = run_replicates(model, &init, &sim, reps, |_, traj| {
        (w_phi(traj.last(), model), traj.capped)
    })
    .map_err(|e| anyhow!("simulation: {e}"))?;
    let capped = rows.iter().filter(|r| r.1).count();
    let values: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (mean, se) = mean_se(&values);
    let target = model.phi(&x0);
    let z = (mean - target).abs() / se;
    let mut series = StatSeries::new("w_phi_final", vec![sim.t_end]);
    for v in &values {
        series.push_replicate(vec![*v]);
    }
    let lines = vec![
        CriterionLine::below(
            format!("|mean W - phi(x)| in SE units (mean {mean:.5}, target {target:.5})"),
            z,
            3.0,
        ),
        capped_line(capped, reps),
    ];
    Ok(CheckReport::new("martingale-mean", lines, vec![series]))
}

fn girsanov_check(model: &Model, cfg: &ExperimentConfig) -> Result<CheckReport> {
    let init = cfg.init_positions(model.dim);
    let x0 = &init[0];
    let n = cfg.run.replicates;
    let mut rng = replicate_rng(cfg.run.seed, 0);
    let weights: Vec<f64> = (0..n)
        .map(|_| {
            let path =
                sample_motion_path(model, x0, cfg.sim.t_end, cfg.sim.dt, Measure::Original, &mut rng);
            girsanov_weight(&path, model).expect("path sampled under the original measure")
        })
        .collect();
    let (mean, se) = mean_se(&weights);
    let lines = vec![
        CriterionLine::below(
            format!("|E[dP^phi/dP] - 1| in SE units (mean {mean:.5})"),
            (mean - 1.0).abs() / se,
            3.0,
        ),
        CriterionLine::at_least(
            "min weight positive",
            weights.iter().cloned().fold(f64::INFINITY, f64::min),
            f64::MIN_POSITIVE,
        ),
    ];
    Ok(CheckReport::new("girsanov-weight", lines, vec![]))
}

fn poisson_tilt_check(cfg: &ExperimentConfig) -> Result<CheckReport> {
    // cheap enough to always run at full size
    let n = cfg.run.replicates.max(100_000);
    let t = 1.0;
    let mut rng = replicate_rng(cfg.run.seed, 1);
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        let mut events = Vec::new();
        let mut s = 0.0f64;
        loop {
            let gap: f64 = rng.sample(Exp1);
            s += gap;
            if s > t {
                break;
            }
            events.push(s);
        }
        weights.push(poisson_tilt_weight(&events, |_| 1.0, t, 64));
    }
    let (mean, se) = mean_se(&weights);
    let lines = vec![CriterionLine::below(
        format!("|E[dL^2g/dL^g] - 1| in SE units (mean {mean:.5})"),
        (mean - 1.0).abs() / se,
        3.0,
    )];
    Ok(CheckReport::new("poisson-tilt", lines, vec![]))
}

fn tilted_consistency(model: &Model, cfg: &ExperimentConfig) -> Result<CheckReport> {
    let sim = cfg.sim_config();
    let init = cfg.init_positions(model.dim);
    let x0 = init[0].clone();
    let n = cfg.run.replicates;
    let cap = 20usize;

    let tilted: Vec<f64> = (0..n)
        .map(|rep| {
            let mut rng = replicate_rng(cfg.run.seed ^ 0x7117ED, rep);
            let out = simulate_tilted_with_rng(model, &x0, &sim, &mut rng);
            capped_count(out.trajectory.last(), cap)
        })
        .collect();
    let rows = run_replicates(model, &init, &sim, n, |_, traj| {
        let snap = traj.last();
        (
            capped_count(snap, cap) * w_phi(snap, model) / model.phi(&x0),
            traj.capped,
        )
    })
    .map_err(|e| anyhow!("simulation: {e}"))?;
    let capped = rows.iter().filter(|r| r.1).count();
    let reweighted: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (m1, s1) = mean_se(&tilted);
    let (m2, s2) = mean_se(&reweighted);
    let lines = vec![
        CriterionLine::below(
            format!("|tilted mean - reweighted mean| in combined SE units ({m1:.4} vs {m2:.4})"),
            z_score_two(m1, s1, m2, s2),
            3.0,
        ),
        capped_line(capped, n),
    ];
    Ok(CheckReport::new("tilted-consistency", lines, vec![]))
}

fn spine_decomposition(model: &Model, cfg: &ExperimentConfig) -> Result<CheckReport> {
    let sim = cfg.sim_config();
    let init = cfg.init_positions(model.dim);
    let x0 = init[0].clone();
    let n_spines = cfg.run.replicates;
    let redraws = 200usize;
    let t = sim.t_end;
    let mut zs = Vec::with_capacity(n_spines);
    for s in 0..n_spines {
        let mut rng = replicate_rng(cfg.run.seed ^ 0x58D3, s);
        let out = simulate_tilted_with_rng(model, &x0, &sim, &mut rng);
        let formula = spine_conditional_expectation(&out.realization, model, t);
        let samples: Vec<f64> = (0..redraws)
            .map(|_| conditional_w_sample(&out.realization, model, t, sim.dt, &mut rng))
            .collect();
        let (mean, se) = mean_se(&samples);
        zs.push((mean - formula) / se.max(1e-12));
    }
    let (z_mean, z_se) = mean_se(&zs);
    let scale = z_se.max(1.0 / (n_spines as f64).sqrt());
    let lines = vec![CriterionLine::below(
        format!("|nested-MC mean - spine formula| aggregate z over {n_spines} spines"),
        z_mean.abs() / scale,
        3.0,
    )];
    Ok(CheckReport::new("spine-decomposition", lines, vec![]))
}

fn slln_trend(model: &Model, cfg: &ExperimentConfig) -> Result<CheckReport> {
    let sim = cfg.sim_config();
    let init = cfg.init_positions(model.dim);
    let g = TestFunction::ball(0.0, 1.0);
    let early_t = sim
        .extra_snapshots
        .first()
        .copied()
        .unwrap_or(sim.t_end / 3.0);
    let reps = cfg.run.replicates;
    let rows = run_replicates(model, &init, &sim, reps, |_, traj| {
        let w_limit = w_phi(traj.last(), model);
        if w_limit <= 1e-12 || traj.capped {
            return (None, traj.capped);
        }
        let early = traj
            .at(early_t)
            .map(|s| slln_ratio(s, model, &g, w_limit).expect("pairing positive"));
        let late = slln_ratio(traj.last(), model, &g, w_limit).expect("pairing positive");
        (early.map(|e| ((e - 1.0).abs(), (late - 1.0).abs())), traj.capped)
    })
    .map_err(|e| anyhow!("simulation: {e}"))?;
    let capped = rows.iter().filter(|r| r.1).count();
    let kept: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.0).collect();
    let excluded = reps - kept.len();
    if kept.len() < reps / 2 {
        bail!("{excluded} of {reps} replicates extinction-like or capped");
    }
    let early: Vec<f64> = kept.iter().map(|p| p.0).collect();
    let late: Vec<f64> = kept.iter().map(|p| p.1).collect();
    let p = sign_test_decrease_p(&early, &late);
    let med_early = median(&early);
    let med_late = median(&late);

    let mut series = StatSeries::new("abs_ratio_deviation", vec![early_t, sim.t_end]);
    for (e, l) in &kept {
        series.push_replicate(vec![*e, *l]);
    }
    let lines = vec![
        CriterionLine::below(
            format!("sign-test p for |ratio - 1| decrease ({med_early:.3} -> {med_late:.3})"),
            p,
            0.01,
        ),
        CriterionLine::below("final median |ratio - 1|", med_late, 0.15),
        capped_line(capped, reps),
    ];
    Ok(CheckReport::new("slln-trend", lines, vec![series]))
}

fn probe_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    if cfg.sim.extra_snapshots.is_empty() {
        vec![2.0, 6.0, cfg.sim.t_end]
    } else {
        let mut g = cfg.sim.extra_snapshots.clone();
        g.push(cfg.sim.t_end);
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        g.dedup();
        g
    }
}

fn extinction_trend(model: &Model, cfg: &ExperimentConfig) -> Result<CheckReport> {
    if !model.local_extinction_expected {
        bail!("extinction-trend requires a model with lambda_c <= 0");
    }
    let grid = probe_grid(cfg);
    let reps = cfg.run.replicates;
    let b = TestFunction::ball(0.0, 1.0);
    let probe = local_extinction_probe(model, &b, &grid, reps, cfg.sim.dt, cfg.run.seed)
        .map_err(|e| anyhow!("simulation: {e}"))?;
    let k_first = (probe.first().unwrap().1 * reps as f64).round() as u64;
    let k_last = (probe.last().unwrap().1 * reps as f64).round() as u64;
    let p = proportion_increase_p(k_first, reps as u64, k_last, reps as u64);

    // nondecreasing within binomial error at every consecutive step
    let mut worst_drop = 0.0f64;
    for w in probe.windows(2) {
        let se = (w[0].1 * (1.0 - w[0].1) / reps as f64).sqrt()
            + (w[1].1 * (1.0 - w[1].1) / reps as f64).sqrt();
        worst_drop = worst_drop.max(w[0].1 - w[1].1 - 3.0 * se);
    }
    let mut series = StatSeries::new("emptiness_fraction", grid.clone());
    series.push_replicate(probe.iter().map(|p| p.1).collect());
    let lines = vec![
        CriterionLine::below(
            format!(
                "one-sided p for emptiness increase ({:.3} -> {:.3})",
                probe.first().unwrap().1,
                probe.last().unwrap().1
            ),
            p,
            0.01,
        ),
        CriterionLine::below("worst monotonicity violation", worst_drop, f64::MIN_POSITIVE),
    ];
    Ok(CheckReport::new("extinction-trend", lines, vec![series]))
}

fn occupation_persistence(model: &Model, cfg: &ExperimentConfig) -> Result<CheckReport> {
    if model.local_extinction_expected {
        bail!("occupation-persistence requires lambda_c > 0");
    }
    let grid = vec![cfg.sim.t_end];
    let b = TestFunction::ball(0.0, 1.0);
    let probe =
        local_extinction_probe(model, &b, &grid, cfg.run.replicates, cfg.sim.dt, cfg.run.seed)
            .map_err(|e| anyhow!("simulation: {e}"))?;
    let lines = vec![CriterionLine::below(
        format!("emptiness fraction at t = {}", cfg.sim.t_end),
        probe[0].1,
        0.9,
    )];
    Ok(CheckReport::new("occupation-persistence", lines, vec![]))
}

fn spine_mixing_check(model: &Model) -> Result<CheckReport> {
    let b = TestFunction::ball(0.0, 1.0);
    let t_grid = [5.0, 10.0, 20.0];
    let devs = check_spine_mixing(model, &b, &t_grid, 9).map_err(|e| anyhow!("{e}"))?;
    let mut lines = Vec::new();
    for w in devs.windows(2) {
        lines.push(CriterionLine::below(
            format!("sup-deviation decreasing {} -> {}", w[0].0, w[1].0),
            w[1].1,
            w[0].1,
        ));
    }
    lines.push(CriterionLine::below(
        format!("sup-deviation at t = {}", t_grid[2]),
        devs[2].1,
        0.05,
    ));
    let mut series = StatSeries::new("iii_star_sup_deviation", t_grid.to_vec());
    series.push_replicate(devs.iter().map(|d| d.1).collect());
    Ok(CheckReport::new("spine-mixing", lines, vec![series]))
}

fn support_containment_check(model: &Model, cfg: &ExperimentConfig) -> Result<CheckReport> {
    let delta = 0.5;
    let n_max = 10;
    let burn_in = n_max / 2;
    let report = check_support_containment(
        model,
        &cfg.init_positions(model.dim)[0],
        delta,
        n_max,
        burn_in,
        cfg.run.replicates,
        cfg.sim.dt,
        cfg.run.seed,
    )
    .map_err(|e| anyhow!("simulation: {e}"))?;
    let lines = vec![
        CriterionLine::at_least(
            format!(
                "support containment fraction (n in ({burn_in}, {n_max}], delta = {delta})"
            ),
            report.contained_fraction,
            0.99,
        ),
        CriterionLine::below(
            "expected envelope-escape mass, lattice sum",
            report.expected_tail_sum,
            f64::INFINITY,
        ),
    ];
    Ok(CheckReport::new("support-containment", lines, vec![]))
}

fn envelope_tail_check(model: &Model) -> Result<CheckReport> {
    let t = 5.0;
    let eps = 0.05;
    let (lhs, rhs, _) = envelope_tail_bound(model, 0.0, t, eps).map_err(|e| anyhow!("{e}"))?;
    let lines = vec![CriterionLine::below(
        format!("tail integral at t = {t} vs e^-(lambda_c + {eps}) t = {rhs:.3e}"),
        lhs,
        rhs,
    )];
    Ok(CheckReport::new("envelope-tail", lines, vec![]))
}

fn lp_bound_check(model: &Model) -> Result<CheckReport> {
    let p = 2.0;
    let q = p - 1.0;
    let pairing = model.phi_p_pairing(p).map_err(|e| anyhow!("{e}"))?;
    let (a20, b20) = lp_bound_terms(model, 0.0, 20.0, p).map_err(|e| anyhow!("{e}"))?;
    let (_, b40) = lp_bound_terms(model, 0.0, 40.0, p).map_err(|e| anyhow!("{e}"))?;
    let scaled = (model.lambda_c() * q * 20.0).exp() * a20;
    let lines = vec![
        CriterionLine::below(
            format!("|e^(lambda_c q t) A - <phi^p, phi_tilde>| at t = 20 (pairing {pairing:.6})"),
            (scaled - pairing).abs(),
            1e-4,
        ),
        CriterionLine::below("sum-term relative increment t = 20 -> 40", (b40 - b20).abs() / b20, 1e-4),
    ];
    Ok(CheckReport::new("lp-bound-terms", lines, vec![]))
}

/// One-line rendering used by the summary file and stdout.
pub fn render_line(check: &str, line: &CriterionLine) -> String {
    let verdict = if line.pass { "PASS" } else { "FAIL" };
    let op = match line.cmp {
        Cmp::Below => "<",
        Cmp::AtLeast => ">=",
    };
    format!(
        "{verdict} {check}: {} ({:.6e} {op} {:.6e})",
        line.label, line.statistic, line.threshold
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canned;

    #[test]
    fn registry_contains_all_canned_checks() {
        for (name, _) in canned::list() {
            let cfg = canned::get(name).unwrap();
            for check in &cfg.checks {
                assert!(
                    known_checks().contains(&check.as_str()),
                    "canned {name} references unknown check {check}"
                );
            }
        }
    }

    #[test]
    fn eigen_structure_passes_for_builtins() {
        for spec in [
            canned::get("inward-ou-eigen").unwrap(),
            canned::get("outward-ou-eigen").unwrap(),
            canned::get("compact-bbm-eigen").unwrap(),
        ] {
            let report = run_check("eigen-structure", &spec).unwrap();
            assert!(report.pass, "{:?}", report.lines);
        }
    }

    #[test]
    fn unknown_check_errors() {
        let cfg = crate::config::default_config();
        assert!(run_check("bogus", &cfg).is_err());
    }

    #[test]
    fn wrong_model_for_specialized_checks() {
        let cfg = crate::config::default_config(); // inward OU
        assert!(run_check("compact-eigenvalue", &cfg).is_err());
        assert!(run_check("extinction-trend", &cfg).is_err());
    }
}
