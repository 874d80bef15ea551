//! Property tests for the structural invariants: determinism, dyadic
//! counting, weight positivity, and quadrature sanity.

use bdsim_core::model::Model;
use bdsim_core::quad;
use bdsim_core::simulate::{simulate, SimConfig};
use bdsim_core::spine::{
    girsanov_weight, poisson_tilt_weight, sample_fission_times, sample_motion_path,
    simulate_tilted, spine_conditional_expectation, Measure,
};
use proptest::prelude::*;

fn arb_model() -> impl Strategy<Value = Model> {
    // inward-OU family over a valid parameter box
    (0.5f64..1.5, 0.1f64..1.0, 0.0f64..0.4)
        .prop_map(|(sigma, b_quad, beta0)| {
            let mu = sigma * (2.0 * b_quad).sqrt() + 1.0;
            Model::inward_ou_quadratic(sigma, mu, b_quad, beta0.max(0.05), 1).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulate_is_deterministic(seed in any::<u64>(), x0 in -1.0f64..1.0) {
        let model = Model::inward_ou_quadratic(1.0, 2.0, 1.0, 0.5, 1).unwrap();
        let cfg = SimConfig::new(5e-2, 0.5).with_seed(seed);
        let a = simulate(&model, &[vec![x0]], &cfg).unwrap();
        let b = simulate(&model, &[vec![x0]], &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn counts_monotone_and_weights_unit(model in arb_model(), seed in any::<u64>()) {
        let cfg = SimConfig::new(2e-2, 1.0).with_seed(seed).with_lattice(0.2);
        let traj = simulate(&model, &[vec![0.0]], &cfg).unwrap();
        let mut prev = 0usize;
        for snap in &traj.snapshots {
            prop_assert!(snap.len() >= prev);
            prev = snap.len();
            for p in &snap.particles {
                prop_assert_eq!(p.weight, 1.0);
                prop_assert!(p.beta_integral < p.clock_threshold);
            }
        }
    }

    #[test]
    fn change_of_measure_weights_positive_finite(
        model in arb_model(),
        seed in any::<u64>(),
        x0 in -2.0f64..2.0,
    ) {
        let mut rng = bdsim_core::simulate::replicate_rng(seed, 0);
        let path = sample_motion_path(&model, &[x0], 0.8, 1e-2, Measure::Original, &mut rng);
        let w = girsanov_weight(&path, &model).unwrap();
        prop_assert!(w > 0.0 && w.is_finite());

        let events = sample_fission_times(&path, &mut rng);
        prop_assert!(events.windows(2).all(|p| p[0] < p[1]));
        prop_assert!(events.iter().all(|s| (0.0..=0.8).contains(s)));
        let tilt = poisson_tilt_weight(&events, |s| model.breeding(&path.position_at(s)), 0.8, 128);
        prop_assert!(tilt > 0.0 && tilt.is_finite());
    }

    #[test]
    fn spine_decomposition_pure_in_spine_data(seed in any::<u64>()) {
        let model = Model::inward_ou_quadratic(1.0, 2.0, 1.0, 0.5, 1).unwrap();
        let cfg = SimConfig::new(2e-2, 0.6).with_seed(seed);
        let out = simulate_tilted(&model, &[0.1], &cfg).unwrap();
        let v1 = spine_conditional_expectation(&out.realization, &model, 0.6);
        let mut stripped = out.realization.clone();
        stripped.subtrees.clear();
        let v2 = spine_conditional_expectation(&stripped, &model, 0.6);
        prop_assert_eq!(v1.to_bits(), v2.to_bits());
        prop_assert!(v1 > 0.0);
    }

    #[test]
    fn gaussian_quadrature_closed_form(mean in -3.0f64..3.0, sd in 0.05f64..2.0) {
        let integral = quad::integrate_line(
            move |x| (-(x - mean).powi(2) / (2.0 * sd * sd)).exp(),
            &[mean],
            1e-9,
        ).unwrap();
        let exact = sd * (2.0 * std::f64::consts::PI).sqrt();
        prop_assert!((integral - exact).abs() < 1e-7 * exact.max(1.0));
    }

    #[test]
    fn spec_round_trip(sigma in 0.5f64..1.5, mu_gap in 0.1f64..2.0, b_quad in 0.0f64..0.5) {
        let mu = sigma * (2.0 * b_quad).sqrt() + mu_gap;
        let model = Model::inward_ou_quadratic(sigma, mu, b_quad, 0.3, 1).unwrap();
        let spec = model.spec.clone().unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: bdsim_core::builtin::ModelSpec = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &spec);
        let rebuilt = back.build().unwrap();
        prop_assert!((rebuilt.lambda_c() - model.lambda_c()).abs() < 1e-14);
    }
}
