//! Semi-synthetic outcome simulation and ground truth.
//!
//! Outcomes follow `Y ~ Bern(σ(β_c(π(C) − β_o) + β_t·T + β_z·Z + N(0, γ²)))`
//! where `π(C)` is the (smoothed) propensity of the true treatment and `Z` an
//! optional latent text property. The oracle ATE reuses each unit's noise draw
//! in both counterfactual arms.

mod recipe;
mod world;

pub use recipe::{generate_reviews, ReviewRecipe};
pub use world::{
    enumerate_world, enumerate_world_capped, sample_world, two_token_world, CovariateRule, EnumeratedWorld, Feature,
    JointEntry, ProxyRule, TableEntry, TextOption, WorldSpec, SUPPORT_CAP,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{covariate_arity, Document, TreatmentField};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};
use crate::sigmoid;

/// Coefficients of the outcome model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationParams {
    pub beta_c: f64,
    pub beta_t: f64,
    pub beta_o: f64,
    /// Standard deviation of the Gaussian logit noise.
    pub gamma: f64,
    /// Weight of the latent text confounder; zero unless a recipe plants one.
    pub beta_z: f64,
    pub seed: u64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            beta_c: 4.0,
            beta_t: 0.8,
            beta_o: 0.9,
            gamma: 0.0,
            beta_z: 0.0,
            seed: 0,
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.beta_c, self.beta_t, self.beta_o, self.gamma, self.beta_z]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("simulation parameters must be finite".into()));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    fn logit(&self, pi: f64, treated: bool, latent: bool, noise: f64) -> f64 {
        self.beta_c * (pi - self.beta_o)
            + self.beta_t * f64::from(u8::from(treated))
            + self.beta_z * f64::from(u8::from(latent))
            + noise
    }
}

/// `π(c) = P(T=1 | C=c)` for each covariate level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PropensityRecord", into = "PropensityRecord")]
pub struct PropensityTable {
    pi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PropensityRecord {
    pi: Vec<f64>,
}

impl TryFrom<PropensityRecord> for PropensityTable {
    type Error = Error;

    fn try_from(r: PropensityRecord) -> Result<Self> {
        Self::new(r.pi)
    }
}

impl From<PropensityTable> for PropensityRecord {
    fn from(t: PropensityTable) -> Self {
        Self { pi: t.pi }
    }
}

impl PropensityTable {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::Empty("propensity table"));
        }
        if let Some((c, p)) = pi.iter().enumerate().find(|(_, p)| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Overlap(format!(
                "propensity for covariate {c} is {p}; must lie strictly inside (0, 1)"
            )));
        }
        Ok(Self { pi })
    }

    /// The same propensity for every level.
    pub fn constant(levels: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; levels])
    }

    pub fn get(&self, covariate: usize) -> Result<f64> {
        self.pi
            .get(covariate)
            .copied()
            .ok_or(Error::MissingCovariateLevel(covariate))
    }

    pub fn levels(&self) -> usize {
        self.pi.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.pi
    }
}

/// Laplace-smoothed `(k + 1) / (n + 2)` per covariate level.
pub fn estimate_propensity(docs: &[Document], field: TreatmentField) -> Result<PropensityTable> {
    if docs.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let levels = covariate_arity(docs);
    let mut treated = vec![0usize; levels];
    let mut total = vec![0usize; levels];
    for d in docs {
        total[d.covariate] += 1;
        if d.require_treatment(field)? {
            treated[d.covariate] += 1;
        }
    }
    if let Some(c) = total.iter().position(|&n| n == 0) {
        return Err(Error::MissingCovariateLevel(c));
    }
    PropensityTable::new(
        treated
            .iter()
            .zip(&total)
            .map(|(&k, &n)| (k as f64 + 1.0) / (n as f64 + 2.0))
            .collect(),
    )
}

/// Per-unit noise draws, one standard normal per document scaled by γ.
fn noise_draws(n: usize, params: &SimulationParams) -> Vec<f64> {
    let mut rng = rng::stream(params.seed, &[purpose::NOISE]);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            params.gamma * z
        })
        .collect()
}

/// Outcome probability of each unit under its factual treatment and under
/// `do(T=1)` and `do(T=0)`, sharing the noise draw.
fn unit_probabilities(
    docs: &[Document],
    params: &SimulationParams,
    propensity: &PropensityTable,
) -> Result<Vec<(bool, f64, f64)>> {
    params.validate()?;
    let noise = noise_draws(docs.len(), params);
    docs.iter()
        .zip(noise)
        .map(|(d, e)| {
            let t = d.require_treatment(TreatmentField::True)?;
            let pi = propensity.get(d.covariate)?;
            let z = d.latent.unwrap_or(false);
            Ok((
                t,
                sigmoid(params.logit(pi, true, z, e)),
                sigmoid(params.logit(pi, false, z, e)),
            ))
        })
        .collect()
}

/// Draw `Y` for every document in place.
pub fn simulate_outcomes(docs: &mut [Document], params: &SimulationParams, propensity: &PropensityTable) -> Result<()> {
    let probs = unit_probabilities(docs, params, propensity)?;
    let mut rng = rng::stream(params.seed, &[purpose::OUTCOME]);
    for (d, (t, p1, p0)) in docs.iter_mut().zip(probs) {
        let p = if t { p1 } else { p0 };
        d.outcome = Some(rng.random::<f64>() < p);
    }
    Ok(())
}

/// Mean unit-level counterfactual contrast `p(do T=1) − p(do T=0)`.
pub fn oracle_ate(docs: &[Document], params: &SimulationParams, propensity: &PropensityTable) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let probs = unit_probabilities(docs, params, propensity)?;
    Ok(probs.iter().map(|(_, p1, p0)| p1 - p0).sum::<f64>() / docs.len() as f64)
}
