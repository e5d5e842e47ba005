use proptest::prelude::*;
use skipcrawl_core::calibrate::{
    self, CalibrationTarget, FitOptions, LossContext, Parameter, ParameterVector,
};
use skipcrawl_core::config::ExperimentConfig;
use skipcrawl_core::locomotion::LocomotionMode;
use skipcrawl_core::terrain::Material;

fn target(mode: LocomotionMode, material: Material, moisture: f64, mean: f64) -> CalibrationTarget {
    CalibrationTarget {
        mode,
        material,
        moisture,
        target_mean: mean,
        target_std: 0.0,
        weight: 1.0,
    }
}

fn small_context() -> (LossContext, ParameterVector) {
    let cfg = ExperimentConfig::canonical();
    let targets = vec![
        target(LocomotionMode::Skip, Material::Grass, 0.0, 0.05),
        target(LocomotionMode::Skip, Material::NonUniformSand, 0.0, 0.026),
    ];
    let free: Vec<_> = cfg
        .calibration
        .parameters
        .iter()
        .filter(|p| p.name == "grass.skip.level" || p.name == "non_uniform_sand.skip.floor")
        .cloned()
        .collect();
    let initial = ParameterVector::from_model(&cfg.model, &free).unwrap();
    let ctx = LossContext {
        base: cfg.model,
        targets,
        n_trials: 2,
        seed: 1,
        trial_duration: 5.0,
    };
    (ctx, initial)
}

fn unit_box(values: &[f64]) -> ParameterVector {
    ParameterVector::new(
        values
            .iter()
            .enumerate()
            .map(|(i, &value)| Parameter {
                name: format!("x{i}"),
                value,
                lower: -5.0,
                upper: 5.0,
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn loss_vanishes_when_targets_equal_simulation() {
    let (mut ctx, initial) = small_context();
    let model = calibrate::apply(&ctx.base, &initial).unwrap();
    let sim = calibrate::simulate_targets(&model, &ctx).unwrap();
    for (t, s) in ctx.targets.iter_mut().zip(sim) {
        t.target_mean = s;
    }
    assert_eq!(calibrate::loss(&initial, &ctx).unwrap(), 0.0);
    // moving either parameter off the optimum costs something
    for i in 0..initial.len() {
        let mut v = initial.values();
        v[i] = (v[i] - 0.05).max(initial.params()[i].lower);
        let probe = initial.with_values(&v).unwrap();
        assert!(calibrate::loss(&probe, &ctx).unwrap() > 0.0);
    }
}

#[test]
fn fitted_probe_is_a_local_minimum() {
    let (ctx, initial) = small_context();
    let fit = calibrate::fit_model(
        &ctx,
        &initial,
        FitOptions {
            budget: 120,
            restarts: 1,
            seed: 1,
        },
    )
    .unwrap();
    let best = calibrate::loss(&fit.params, &ctx).unwrap();
    assert_eq!(best, fit.loss);
    for i in 0..fit.params.len() {
        let p = &fit.params.params()[i];
        for d in [-0.02, 0.02] {
            let mut v = fit.params.values();
            v[i] = (v[i] + d).clamp(p.lower, p.upper);
            if v[i] == p.value {
                continue;
            }
            let probe = fit.params.with_values(&v).unwrap();
            assert!(calibrate::loss(&probe, &ctx).unwrap() >= best);
        }
    }
}

#[test]
fn fits_are_bit_reproducible() {
    let (ctx, initial) = small_context();
    let opts = FitOptions {
        budget: 60,
        restarts: 2,
        seed: 3,
    };
    let a = calibrate::fit_model(&ctx, &initial, opts).unwrap();
    let b = calibrate::fit_model(&ctx, &initial, opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn quadratic_minimum_is_found() {
    let fit = calibrate::fit(
        |x| (x[0] - 1.3).powi(2) + 2.0 * (x[1] + 0.7).powi(2),
        &unit_box(&[0.0, 0.0]),
        FitOptions {
            budget: 500,
            restarts: 1,
            seed: 0,
        },
    )
    .unwrap();
    assert!(fit.evaluations <= 500);
    assert!((fit.params.values()[0] - 1.3).abs() < 1e-3);
    assert!((fit.params.values()[1] + 0.7).abs() < 1e-3);
}

#[test]
fn unknown_parameter_names_are_rejected() {
    let mut model = ExperimentConfig::canonical().model;
    assert!(calibrate::set_param(&mut model, "grass.skip.bogus", 0.1).is_err());
    assert!(calibrate::get_param(&model, "mars.skip.floor").is_err());
    calibrate::set_param(&mut model, "grass.skip.level", 0.4).unwrap();
    assert_eq!(model.substrates.get(Material::Grass).skip.peak, 0.4);
    assert_eq!(
        calibrate::get_param(&model, "grass.skip.level").unwrap(),
        0.4
    );
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn values_stay_in_bounds_and_best_never_rises(
        cx in -4.0f64..4.0,
        cy in -4.0f64..4.0,
        start in prop::collection::vec(-5.0f64..5.0, 2),
        budget in 1usize..200,
        restarts in 1usize..4,
        seed in any::<u64>(),
    ) {
        let init = unit_box(&start);
        let fit = calibrate::fit(
            |x| {
                assert!(x.iter().all(|v| (-5.0..=5.0).contains(v)));
                (x[0] - cx).abs() + (x[1] - cy).powi(2)
            },
            &init,
            FitOptions { budget, restarts, seed },
        )
        .unwrap();
        prop_assert!(fit.evaluations <= budget);
        prop_assert_eq!(fit.trace.len(), fit.evaluations);
        for w in fit.trace.windows(2) {
            prop_assert!(w[1].best <= w[0].best);
        }
        prop_assert_eq!(fit.trace.last().unwrap().best, fit.loss);
        for p in fit.params.params() {
            prop_assert!(p.value >= p.lower && p.value <= p.upper);
        }
        if budget == 1 {
            prop_assert_eq!(fit.params.values(), start);
        }
    }

    #[test]
    fn out_of_bounds_values_are_rejected(v in prop_oneof![-100.0f64..-5.0001, 5.0001f64..100.0]) {
        prop_assert!(unit_box(&[0.0]).with_values(&[v]).is_err());
    }
}
