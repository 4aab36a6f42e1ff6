//! Estimating the causal effect of a latent linguistic property on an outcome
//! from observational text.
//!
//! The crate is organised around the estimation pipeline:
//!
//! - [`corpus`]: documents, tokenization, vocabularies, sparse features,
//!   lexicons, TF-IDF pair matching and score thresholding.
//! - [`simulate`]: semi-synthetic outcome simulation, propensities, the
//!   unit-level oracle ATE, a review-corpus generator and small enumerable
//!   generative worlds.
//! - [`proxy`]: proxy treatments (lexicon, noised) and T-boost relabeling.
//! - [`adjust`]: W-Adjust, a learned text representation feeding two
//!   per-treatment outcome heads, and the resulting ψ̂-proxy estimator.
//! - [`estimators`]: tabular ATE estimators (naive, naive+C, matrix
//!   adjustment) and replicate aggregation.
//! - [`theory`]: exact population identities checked by enumeration.

pub mod adjust;
pub mod corpus;
pub mod error;
pub mod estimators;
pub mod proxy;
pub mod rng;
pub mod simulate;
pub mod theory;

pub use adjust::{OutcomeModel, RepresentationKind, TrainConfig};
pub use corpus::{Document, FeatureVector, Lexicon, TreatmentField, Vocabulary};
pub use error::{Error, Result};
pub use estimators::{AteEstimate, Estimand, JointTable, MeasurementModel};
pub use proxy::{BoostConfig, ProxyClassifier, RelabelMode};
pub use simulate::{PropensityTable, ReviewRecipe, SimulationParams, WorldSpec};
pub use theory::{bundled_worlds, TheoryReport};

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binary cross-entropy of label `y` against logit `z`.
pub(crate) fn logit_cross_entropy(z: f64, y: bool) -> f64 {
    if y {
        softplus(-z)
    } else {
        softplus(z)
    }
}
