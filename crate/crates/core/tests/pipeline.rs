//! Review generator through T-boost and the tabular estimators.

use textcause::corpus::lexicon_proxy;
use textcause::estimators::{psi_matrix, psi_naive_c};
use textcause::proxy::{proxy_accuracy, TBoost};
use textcause::simulate::{estimate_propensity, generate_reviews, oracle_ate, simulate_outcomes};
use textcause::{BoostConfig, JointTable, MeasurementModel, ReviewRecipe, SimulationParams, TreatmentField};

fn corpus(n: usize, seed: u64) -> (Vec<textcause::Document>, f64) {
    let recipe = ReviewRecipe {
        n_docs: n,
        ..ReviewRecipe::default()
    };
    let (mut docs, lexicon) = generate_reviews(&recipe, seed).unwrap();
    for d in &mut docs {
        d.proxy = Some(lexicon_proxy(d, &lexicon));
    }
    let propensity = estimate_propensity(&docs, TreatmentField::True).unwrap();
    let params = SimulationParams {
        seed: seed + 1,
        ..SimulationParams::default()
    };
    simulate_outcomes(&mut docs, &params, &propensity).unwrap();
    let oracle = oracle_ate(&docs, &params, &propensity).unwrap();
    (docs, oracle)
}

#[test]
fn generator_is_deterministic() {
    let recipe = ReviewRecipe {
        n_docs: 200,
        ..ReviewRecipe::default()
    };
    let (a, la) = generate_reviews(&recipe, 9).unwrap();
    let (b, lb) = generate_reviews(&recipe, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    let (c, _) = generate_reviews(&recipe, 10).unwrap();
    assert_ne!(a, c);
}

#[test]
fn stratified_true_treatment_tracks_the_oracle() {
    let (docs, oracle) = corpus(8000, 21);
    let est = psi_naive_c(&docs, TreatmentField::True).unwrap();
    assert!(
        (est.value - oracle).abs() < 0.03,
        "naive+C {} vs oracle {oracle}",
        est.value
    );
}

/// With error rates measured on the same sample, inverting the measurement
/// model reproduces the true-treatment joint and hence its stratified ATE.
#[test]
fn matrix_adjustment_with_in_sample_rates_is_exact() {
    let (docs, _) = corpus(3000, 5);
    let truth = psi_naive_c(&docs, TreatmentField::True).unwrap().value;
    let mm = MeasurementModel::from_corpus(&docs, TreatmentField::Proxy).unwrap();
    let observed = JointTable::from_corpus(&docs, TreatmentField::Proxy).unwrap();
    let adjusted = psi_matrix(&observed, &mm).unwrap().value;
    assert!((adjusted - truth).abs() < 1e-9, "{adjusted} vs {truth}");
}

#[test]
fn boosting_keeps_precision_and_raises_recall() {
    let (mut docs, _) = corpus(4000, 8);
    let config = BoostConfig::default();
    let model = TBoost::fit(&docs, &config).unwrap();
    model.boost(&mut docs, &config).unwrap();
    let truth: Vec<bool> = docs.iter().map(|d| d.treatment_true.unwrap()).collect();
    let field = |f: TreatmentField| -> Vec<bool> { docs.iter().map(|d| d.treatment(f).unwrap()).collect() };
    let before = proxy_accuracy(&field(TreatmentField::Proxy), &truth).unwrap();
    let after = proxy_accuracy(&field(TreatmentField::Boosted), &truth).unwrap();
    assert!(after.recall >= before.recall, "{before:?} -> {after:?}");
    assert!(after.precision > 0.8, "{after:?}");
    // Relabelling only ever adds positives.
    for d in &docs {
        assert!(!d.proxy.unwrap() || d.proxy_boosted.unwrap());
    }
}
