//! Monte Carlo cross-checks of the forward engine against independent
//! oracles: the Yule law for constant breeding, the exact OU transition,
//! the one-particle-picture quadrature, and the support envelope.

use bdsim_core::builtin::{EnvelopeParams, ModelKind, ModelSpec};
use bdsim_core::model::{DriftField, Model, OuLaw};
use bdsim_core::simulate::{
    advance_branch_clock, replicate_rng, run_replicates, simulate, step_motion, Particle,
    SimConfig,
};
use bdsim_core::stats::{expectation_oracle, w_phi, TestFunction};
use bdsim_core::stattest::{chi_square_gof_p, ks_distance_two_sample, mean_se, z_score};
use rand::Rng;
use rand_distr::Exp1;

fn constant_breeding_model() -> Model {
    // beta == 1, lambda_c = 0.5
    Model::outward_ou_constant(1.0, 0.5, 1.0, 1).unwrap()
}

fn inward_model() -> Model {
    Model::inward_ou_quadratic(1.0, 2.0, 1.0, 0.5, 1).unwrap()
}

/// Inward-OU model with the spread envelope loosened to 3 lambda_c, the
/// rate at which the finite-sample containment thresholds are met.
fn inward_model_wide_envelope() -> Model {
    ModelSpec {
        kind: ModelKind::InwardOuQuadratic {
            sigma: 1.0,
            mu: 2.0,
            b_quad: 1.0,
            beta0: 0.5,
            dim: 1,
        },
        envelope: EnvelopeParams {
            lambda_factor: 3.0,
            ..Default::default()
        },
    }
    .build()
    .unwrap()
}

#[test]
fn yule_mean_population() {
    // constant breeding rate b: E[N_t] = e^{b t} per initial particle
    let model = constant_breeding_model();
    let cfg = SimConfig::new(1e-3, 1.0).with_seed(1001);
    let counts =
        run_replicates(&model, &[vec![0.0]], &cfg, 2000, |_, traj| traj.last().len() as f64)
            .unwrap();
    let (mean, se) = mean_se(&counts);
    let target = 1f64.exp();
    assert!(
        z_score(mean, se, target) < 3.0,
        "E[N_1] = {mean} +- {se}, target {target}"
    );
    // the mean scales with the initial configuration size
    let init3 = vec![vec![0.0], vec![0.5], vec![-0.5]];
    let counts3 =
        run_replicates(&model, &init3, &cfg, 2000, |_, traj| traj.last().len() as f64).unwrap();
    let (mean3, se3) = mean_se(&counts3);
    assert!(
        z_score(mean3, se3, 3.0 * target) < 3.0,
        "E[N_1 from 3 ancestors] = {mean3} +- {se3}"
    );
}

#[test]
fn w_martingale_in_two_dimensions() {
    // the inward-OU model keeps its closed-form eigen-structure in any
    // dimension; the engine must reproduce E[W_t] = phi(x) in d = 2 too
    let model = Model::inward_ou_quadratic(1.0, 2.0, 1.0, 0.5, 2).unwrap();
    let x0 = vec![0.3, -0.2];
    let cfg = SimConfig::new(1e-3, 1.0).with_seed(1012);
    let vals = run_replicates(&model, &[x0.clone()], &cfg, 800, |_, traj| {
        w_phi(traj.last(), &model)
    })
    .unwrap();
    let (mean, se) = mean_se(&vals);
    assert!(
        z_score(mean, se, model.phi(&x0)) < 3.0,
        "d = 2 martingale mean {mean} +- {se} vs {}",
        model.phi(&x0)
    );
}

#[test]
fn yule_geometric_count_law() {
    // N_t ~ Geometric(e^{-b t}) on {1, 2, ...}
    let model = constant_breeding_model();
    let cfg = SimConfig::new(1e-3, 1.0).with_seed(1002);
    let n_rep = 10_000usize;
    let counts =
        run_replicates(&model, &[vec![0.0]], &cfg, n_rep, |_, traj| traj.last().len()).unwrap();
    let p = (-1f64).exp();
    let k_max = 9usize;
    let mut observed = vec![0.0; k_max + 1];
    for &n in &counts {
        let k = n.min(k_max + 1) - 1;
        observed[k.min(k_max)] += 1.0;
    }
    let mut expected = vec![0.0; k_max + 1];
    let mut tail = 1.0;
    for (k, e) in expected.iter_mut().enumerate().take(k_max) {
        let prob = p * (1.0 - p).powi(k as i32);
        *e = prob * n_rep as f64;
        tail -= prob;
    }
    expected[k_max] = tail * n_rep as f64;
    let p_value = chi_square_gof_p(&observed, &expected);
    assert!(p_value > 0.01, "chi-square p = {p_value}, counts {observed:?}");
}

#[test]
fn euler_matches_exact_ou_sampler() {
    // two-sample KS over horizon 1 at dt = 1e-3, exact sampler as oracle
    let model = inward_model();
    let n = 10_000usize;
    let mut rng = replicate_rng(1003, 0);
    let mut euler = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pos = vec![1.0];
        for _ in 0..1000 {
            pos = step_motion(&model, &pos, 1e-3, None, false, &mut rng).unwrap();
        }
        euler.push(pos[0]);
    }
    let mut exact = Vec::with_capacity(n);
    for _ in 0..n {
        exact.push(step_motion(&model, &[1.0], 1.0, None, true, &mut rng).unwrap()[0]);
    }
    let d = ks_distance_two_sample(&euler, &exact);
    assert!(d < 0.03, "KS distance {d}");
}

#[test]
fn branch_intensity_tracks_quadratic_breeding() {
    // single motion under the original measure; the branch-clock events in
    // a position bin, divided by occupation time, estimate beta there
    let model = inward_model();
    let mut rng = replicate_rng(1004, 0);
    let dt = 1e-3;
    let steps = 2_000_000usize;
    let bins = 6usize;
    let (lo, hi) = (-1.2f64, 1.2f64);
    let width = (hi - lo) / bins as f64;
    let mut occupation = vec![0.0f64; bins];
    let mut events = vec![0.0f64; bins];
    let mut p = Particle {
        position: vec![0.0],
        weight: 1.0,
        beta_integral: 0.0,
        clock_threshold: rng.sample(Exp1),
        lineage_id: 0,
    };
    for _ in 0..steps {
        let pre = p.position.clone();
        p.position = step_motion(&model, &p.position, dt, None, true, &mut rng).unwrap();
        let post = p.position.clone();
        let x = post[0];
        let fired = advance_branch_clock(&mut p, &model, dt, &pre, &post, &mut rng);
        if x >= lo && x < hi {
            let k = ((x - lo) / width) as usize;
            occupation[k] += dt;
            if fired {
                events[k] += 1.0;
            }
        }
    }
    for k in 0..bins {
        let x_mid = lo + (k as f64 + 0.5) * width;
        let beta = model.breeding(&[x_mid]);
        let rate = events[k] / occupation[k];
        let se = events[k].sqrt() / occupation[k];
        assert!(
            (rate - beta).abs() < 3.0 * se + 0.03 * beta,
            "bin {k} (x = {x_mid:.2}): rate {rate:.3} vs beta {beta:.3} (se {se:.3})"
        );
    }
}

#[test]
fn support_radius_within_spread_bound() {
    let model = inward_model_wide_envelope();
    let t = 5.0;
    let cfg = SimConfig::new(2e-3, t).with_seed(1005);
    let flags = run_replicates(&model, &[vec![0.0]], &cfg, 500, |_, traj| {
        traj.last().support_radius() <= model.spread_bound(t)
    })
    .unwrap();
    let frac = flags.iter().filter(|b| **b).count() as f64 / flags.len() as f64;
    assert!(frac >= 0.99, "containment fraction {frac}");
}

#[test]
fn one_particle_picture_expectation() {
    // Monte Carlo mean of <g, X_t> against the semigroup quadrature
    let model = inward_model();
    let g = TestFunction::ball(0.0, 1.0);
    let t = 1.0;
    let cfg = SimConfig::new(1e-3, t).with_seed(1006);
    let vals = run_replicates(&model, &[vec![0.0]], &cfg, 2000, |_, traj| {
        traj.last().measure(|x| g.eval(x, &model))
    })
    .unwrap();
    let (mean, se) = mean_se(&vals);
    let oracle = expectation_oracle(&model, &g, &[0.0], t).unwrap();
    assert!(
        z_score(mean, se, oracle) < 3.0,
        "MC {mean} +- {se} vs quadrature {oracle}"
    );
}

#[test]
fn w_martingale_mean_constant_for_builtins() {
    // E[W_t^phi] = phi(x) for every lattice time
    let cases: Vec<(Model, f64, f64)> = vec![
        (inward_model(), 0.0, 1e-3),
        (constant_breeding_model(), 0.3, 1e-3),
        (Model::compact_beta_bbm(1.0, 1.0).unwrap(), 0.0, 1e-3),
    ];
    for (model, x0, dt) in cases {
        let cfg = SimConfig::new(dt, 1.0).with_seed(1007).with_lattice(0.5);
        let series = run_replicates(&model, &[vec![x0]], &cfg, 1200, |_, traj| {
            traj.snapshots
                .iter()
                .map(|s| w_phi(s, &model))
                .collect::<Vec<f64>>()
        })
        .unwrap();
        let target = model.phi(&[x0]);
        for ti in 1..3 {
            let column: Vec<f64> = series.iter().map(|row| row[ti]).collect();
            let (mean, se) = mean_se(&column);
            assert!(
                z_score(mean, se, target) < 3.0,
                "W mean {mean} +- {se} vs phi(x) = {target}"
            );
        }
    }
}

#[test]
fn weighted_mass_supermartingale_and_plain_equivalence() {
    let model = inward_model();
    let cfg = SimConfig::new(1e-3, 1.0).with_seed(1008).with_lattice(0.25);
    let n_rep = 800usize;
    let mut w_rows: Vec<Vec<f64>> = Vec::with_capacity(n_rep);
    let mut weighted_counts = Vec::with_capacity(n_rep);
    for rep in 0..n_rep {
        let mut rng = replicate_rng(cfg.seed, rep);
        let wt = bdsim_core::simulate::simulate_weighted_with_rng(&model, &[vec![0.0]], &cfg, &mut rng);
        w_rows.push(wt.w_series.iter().map(|(_, w)| *w).collect());
        weighted_counts.push(wt.trajectory.last().len() as f64);
    }
    // martingale: the mean path must be non-increasing within 3 SE
    let n_t = w_rows[0].len();
    let mut means = Vec::new();
    let mut ses = Vec::new();
    for ti in 0..n_t {
        let col: Vec<f64> = w_rows.iter().map(|r| r[ti]).collect();
        let (m, s) = mean_se(&col);
        means.push(m);
        ses.push(s);
    }
    for ti in 1..n_t {
        assert!(
            means[ti] <= means[ti - 1] + 3.0 * (ses[ti] + ses[ti - 1]),
            "weighted mass mean increased: {means:?}"
        );
    }
    // plain view of the weighted run is distributionally the plain run
    let plain_cfg = SimConfig::new(1e-3, 1.0).with_seed(2008).with_lattice(0.25);
    let plain_counts = run_replicates(&model, &[vec![0.0]], &plain_cfg, n_rep, |_, traj| {
        traj.last().len() as f64
    })
    .unwrap();
    let (m1, s1) = mean_se(&weighted_counts);
    let (m2, s2) = mean_se(&plain_counts);
    assert!(
        (m1 - m2).abs() < 3.0 * (s1 * s1 + s2 * s2).sqrt(),
        "weighted-view counts {m1} vs plain counts {m2}"
    );
}

#[test]
fn exact_ou_equilibrium_matches_printed_variance() {
    // kappa = sqrt(2), sigma = 1: equilibrium N(0, sigma^2 / (2 kappa))
    let ou = OuLaw {
        rate: std::f64::consts::SQRT_2,
        sigma2: 1.0,
    };
    let model = inward_model();
    let spine = DriftField::Linear {
        rate: -std::f64::consts::SQRT_2,
    };
    let mut rng = replicate_rng(1009, 0);
    let n = 10_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| step_motion(&model, &[1.0], 30.0, Some(&spine), true, &mut rng).unwrap()[0])
        .collect();
    let sd = ou.variance(1e9).sqrt();
    let d = bdsim_core::stattest::ks_distance(&samples, |x| {
        bdsim_core::stattest::normal_cdf(x / sd)
    });
    assert!(d < 0.02, "KS against equilibrium {d}");
}

#[test]
fn local_growth_orientation_above_halved_rate() {
    // lambda_c > 0: a visible fraction of replicates carries
    // e^{-lambda t} X_t(B) > 1 at lambda = lambda_c / 2 already at t = 8
    let model = inward_model();
    let lam = model.lambda_c() / 2.0;
    let t = 8.0;
    let cfg = SimConfig::new(2e-3, t).with_seed(1010);
    let b = TestFunction::ball(0.0, 1.0);
    let flags = run_replicates(&model, &[vec![0.0]], &cfg, 60, |_, traj| {
        let snap = traj.last();
        (-lam * t).exp() * snap.measure(|x| b.eval(x, &model)) > 1.0
    })
    .unwrap();
    let frac = flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64;
    assert!(frac > 0.0, "no replicate above the halved growth rate");
}

#[test]
fn deterministic_trajectories_under_replicate_streams() {
    let model = inward_model();
    let cfg = SimConfig::new(1e-2, 1.0).with_seed(77).with_lattice(0.5);
    let a = run_replicates(&model, &[vec![0.2]], &cfg, 8, |_, t| t.clone()).unwrap();
    let b = run_replicates(&model, &[vec![0.2]], &cfg, 8, |_, t| t.clone()).unwrap();
    assert_eq!(a, b);
    // replicates differ from one another
    assert_ne!(a[0], a[1]);
    // and a plain simulate call equals replicate 0's stream only if the
    // same stream is used; the base call uses stream 0 of the same seed
    let base = simulate(&model, &[vec![0.2]], &cfg).unwrap();
    assert_eq!(base, a[0]);
}
