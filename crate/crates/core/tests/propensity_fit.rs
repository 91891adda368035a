//! Propensity model fits against scipy/statsmodels values frozen by
//! `oracle/frozen_values.py`, plus balance and ordering properties.

use proptest::prelude::*;
use propp::demo::generate_demo_data;
use propp::model::{Dataset, PatientRecord, Source};
use propp::propensity::{
    compute_weights, fit_propensity, predict_scores, standardized_mean_diff, weight_dataset, FitOptions,
    PropensityOptions, WeightScheme, WeightVariant,
};
use propp::seed;
use propp::simulation::{generate_dataset, Scenario, ScenarioConfig, Setting};

fn names(k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("x{j}")).collect()
}

fn trig_dataset() -> Dataset {
    let records = (0..60)
        .map(|i| {
            let t = i as f64;
            let x1 = 2.0 * (0.7 * t).sin() + 1.0;
            let x2 = (1.3 * t).cos();
            let trial = (2.1 * t).sin() + 0.5 * x1 > 0.3;
            let src = if trial { Source::Trial } else { Source::External };
            PatientRecord::new(src, i % 3 == 0, vec![x1, x2])
        })
        .collect();
    Dataset::new(names(2), records).unwrap()
}

fn separation_dataset() -> Dataset {
    let records = (0..80)
        .map(|i| {
            let trial = i < 40;
            let x1 = (1.7 * i as f64).sin() + if trial { 0.3 } else { 0.0 };
            let x2 = if !trial && i % 7 == 0 { 1.0 } else { 0.0 };
            let src = if trial { Source::Trial } else { Source::External };
            PatientRecord::new(src, i % 2 == 0, vec![x1, x2])
        })
        .collect();
    Dataset::new(names(2), records).unwrap()
}

// tighter than the default stopping rule so the comparison is against the optimum
fn opts(ridge: f64) -> FitOptions {
    FitOptions {
        ridge,
        tol: 1e-12,
        ..FitOptions::default()
    }
}

const IDX: [usize; 4] = [0, 7, 13, 42];

#[test]
fn unpenalized_fit_matches_reference_optimizers() {
    let data = trig_dataset();
    assert_eq!(data.n_trial(), 38);
    let model = fit_propensity(&data, &opts(0.0)).unwrap();
    assert!(model.converged);
    let coef = [1.507_374_082_354_196_6, 3.076_084_521_476_534_7, -0.262_519_843_716_955_64];
    assert!((model.intercept - coef[0]).abs() < 1e-9);
    for (got, want) in model.coefficients.iter().zip(&coef[1..]) {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
    let scores = predict_scores(&model, &data).unwrap();
    let newton = [0.725_979_272_716_894, 0.069_142_271_247_751_27, 0.946_438_174_029_407_3, 0.078_427_004_289_838_37];
    let irls = [0.725_979_272_716_894, 0.069_142_271_247_751_24, 0.946_438_174_029_407_1, 0.078_427_004_289_838_37];
    for ((&i, a), b) in IDX.iter().zip(newton).zip(irls) {
        assert!((scores[i] - a).abs() < 1e-10, "score[{i}] = {} vs {a}", scores[i]);
        assert!((scores[i] - b).abs() < 1e-10, "score[{i}] = {} vs {b}", scores[i]);
    }
}

#[test]
fn ridge_fit_matches_reference_optimizer() {
    let data = trig_dataset();
    let model = fit_propensity(&data, &opts(2.5)).unwrap();
    let coef = [0.897_120_514_018_145_9, 1.723_316_943_714_077_4, -0.140_514_967_594_967_43];
    assert!((model.intercept - coef[0]).abs() < 1e-9);
    for (got, want) in model.coefficients.iter().zip(&coef[1..]) {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
    let scores = predict_scores(&model, &data).unwrap();
    let want = [0.647_365_785_138_877_1, 0.195_788_882_816_055_64, 0.839_964_091_644_999, 0.208_944_294_895_685_3];
    for (&i, w) in IDX.iter().zip(want) {
        assert!((scores[i] - w).abs() < 1e-10);
    }
}

#[test]
fn quasi_separation_is_contained_by_the_ridge() {
    let data = separation_dataset();
    let model = fit_propensity(&data, &opts(1e-4)).unwrap();
    assert!(model.converged, "{} iterations", model.iterations);
    assert!(model.coefficients.iter().all(|c| c.is_finite()));
    let coef = [-0.688_447_277_027_582_5, 0.505_924_214_706_251_6, -3.064_628_276_311_827];
    assert!((model.intercept - coef[0]).abs() < 1e-8);
    for (got, want) in model.coefficients.iter().zip(&coef[1..]) {
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }

    let scores = predict_scores(&model, &data).unwrap();
    let flagged = [42, 49, 56, 63, 70, 77];
    let want = [
        1.719_441_672_876_702e-5,
        2.037_221_617_533_111e-5,
        1.791_733_392_683_773e-5,
        1.235_809_910_653_424_8e-5,
        7.836_017_212_567_569e-6,
        5.550_850_180_733_585e-6,
    ];
    for (&i, w) in flagged.iter().zip(want) {
        assert!(scores[i] < 0.01);
        assert!(((scores[i] - w) / w).abs() < 1e-7, "score[{i}] = {} vs {w}", scores[i]);
    }
    assert!((scores[0] - 0.568_001_028_310_537_6).abs() < 1e-9);
    assert!((scores[50] - 0.485_439_841_077_679_4).abs() < 1e-9);
}

#[test]
fn intercept_only_examples() {
    let balanced = Dataset::from_counts(200, 400, 180, 400).unwrap();
    let scores = predict_scores(&fit_propensity(&balanced, &FitOptions::default()).unwrap(), &balanced).unwrap();
    assert!(scores.iter().all(|s| (s - 0.5).abs() < 1e-12));

    let case = Dataset::from_counts(75, 132, 129, 241).unwrap();
    let scores = predict_scores(&fit_propensity(&case, &FitOptions::default()).unwrap(), &case).unwrap();
    assert!(scores.iter().all(|s| (s - 132.0 / 373.0).abs() < 1e-10));
}

#[test]
fn weighting_improves_balance_on_mixture_data() {
    let mut cfg = ScenarioConfig::new(Scenario::Mixture, Setting::EqualN);
    cfg.seed = 20_240_601;
    let data = generate_dataset(&cfg, -0.5, &mut seed::rng(cfg.seed)).unwrap();
    let (_, wd, _) = weight_dataset(&data, &PropensityOptions::default()).unwrap();
    let before = standardized_mean_diff(&data, &vec![1.0; data.len()]).unwrap();
    let after = standardized_mean_diff(&data, wd.weights()).unwrap();
    for (j, (b, a)) in before.iter().zip(&after).enumerate() {
        assert!(a.abs() < b.abs(), "covariate {j}: |{a}| !< |{b}|");
    }
}

#[test]
fn frail_demo_patients_get_the_smallest_scores() {
    for s in [1, 7, 2024] {
        let cohort = generate_demo_data(s);
        let data = cohort.to_dataset().unwrap();
        let (_, wd, _) = weight_dataset(&data, &PropensityOptions::default()).unwrap();
        let (mut frail_max, mut other_min) = (f64::MIN, f64::MAX);
        for (p, &score) in cohort.patients.iter().zip(wd.scores()) {
            if p.is_frail() {
                frail_max = frail_max.max(score);
            } else {
                other_min = other_min.min(score);
            }
        }
        assert!(frail_max < other_min, "seed {s}: frail max {frail_max}, other min {other_min}");
        // 31 with ECOG ≥ 2 plus 11 unresectable stage III
        assert_eq!(cohort.patients.iter().filter(|p| p.is_frail()).count(), 42);
    }
}

fn random_dataset(n: usize, k: usize, s: u64) -> Dataset {
    use rand::Rng;
    let mut rng = seed::rng(s);
    let records = (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let trial = i % 2 == 0 || rng.random::<f64>() < 0.3;
            let src = if trial { Source::Trial } else { Source::External };
            PatientRecord::new(src, rng.random(), x)
        })
        .collect();
    Dataset::new(names(k), records).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_invariant_to_affine_rescaling(s in any::<u64>(), scale in 0.01f64..100.0, shift in -50.0f64..50.0) {
        let data = random_dataset(80, 3, s);
        let rescaled = Dataset::new(
            names(3),
            data.records()
                .iter()
                .map(|r| PatientRecord::new(r.source, r.outcome, r.covariates.iter().map(|x| x * scale + shift).collect()))
                .collect(),
        )
        .unwrap();
        let a = predict_scores(&fit_propensity(&data, &FitOptions::default()).unwrap(), &data).unwrap();
        let b = predict_scores(&fit_propensity(&rescaled, &FitOptions::default()).unwrap(), &rescaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-8, "{} vs {}", x, y);
        }
    }

    #[test]
    fn capped_trial_weights_are_monotone_and_bounded(mut scores in proptest::collection::vec(0.001f64..0.999, 2..50)) {
        scores.sort_by(f64::total_cmp);
        let sources = vec![Source::External; scores.len()];
        let w = compute_weights(&scores, &sources, WeightScheme::new(WeightVariant::AtTrial, true)).unwrap();
        for pair in w.windows(2) {
            prop_assert!(pair[0] <= pair[1]);
        }
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let trial = compute_weights(&scores, &vec![Source::Trial; scores.len()], WeightScheme::default()).unwrap();
        prop_assert!(trial.iter().all(|&x| x == 1.0));
    }
}
