//! Fixtures shared by the benchmarks.

use textcause::corpus::lexicon_proxy;
use textcause::proxy::TBoost;
use textcause::simulate::{estimate_propensity, generate_reviews, simulate_outcomes};
use textcause::{BoostConfig, Document, ReviewRecipe, SimulationParams, TreatmentField};

/// A review corpus with lexicon proxies, boosted labels and outcomes.
pub fn review_corpus(n: usize, seed: u64) -> Vec<Document> {
    let recipe = ReviewRecipe {
        n_docs: n,
        ..ReviewRecipe::default()
    };
    let (mut docs, lexicon) = generate_reviews(&recipe, seed).expect("default recipe is valid");
    for d in &mut docs {
        d.proxy = Some(lexicon_proxy(d, &lexicon));
    }
    let config = BoostConfig::default();
    let model = TBoost::fit(&docs, &config).expect("corpus has both proxy classes");
    model.boost(&mut docs, &config).expect("model fits its own corpus");
    let propensity = estimate_propensity(&docs, TreatmentField::True).expect("truth is set");
    let params = SimulationParams {
        seed,
        ..SimulationParams::default()
    };
    simulate_outcomes(&mut docs, &params, &propensity).expect("propensity covers every level");
    docs
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_is_complete() {
        let docs = super::review_corpus(300, 1);
        assert_eq!(docs.len(), 300);
        assert!(docs
            .iter()
            .all(|d| d.proxy.is_some() && d.proxy_boosted.is_some() && d.outcome.is_some()));
    }
}
