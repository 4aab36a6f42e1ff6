//! Proxy treatments and T-boost.
//!
//! A lexicon proxy `T̂` tends to be precise but to miss many positives. T-boost
//! trains a logistic regression to predict `T̂` from bag-of-words features and
//! relabels confidently positive `T̂=0` documents, raising recall.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_vocabulary, covariate_arity, featurize, Document, FeatureScheme, FeatureVector, TreatmentField, Vocabulary,
};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};
use crate::{logit_cross_entropy, sigmoid};

/// Flip each label independently with probability `1 − accuracy`.
pub fn noised_proxy(treatments: &[bool], accuracy: f64, seed: u64) -> Result<Vec<bool>> {
    if !(0.5..=1.0).contains(&accuracy) {
        return Err(Error::InvalidParameter(format!(
            "proxy accuracy must lie in [0.5, 1], got {accuracy}"
        )));
    }
    let mut rng = rng::stream(seed, &[purpose::PROXY]);
    Ok(treatments
        .iter()
        .map(|&t| {
            let flip = rng.random::<f64>() >= accuracy;
            t ^ flip
        })
        .collect())
}

/// Which documents T-boost may relabel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelabelMode {
    /// Keep every `T̂=1` and relabel only `T̂=0` documents.
    #[default]
    T0Only,
    /// Replace every label by the classifier decision.
    All,
}

impl fmt::Display for RelabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelabelMode::T0Only => "t0_only",
            RelabelMode::All => "all",
        })
    }
}

impl FromStr for RelabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t0_only" => Ok(RelabelMode::T0Only),
            "all" => Ok(RelabelMode::All),
            other => Err(Error::Parse(format!("unknown relabel mode `{other}`"))),
        }
    }
}

/// Bag-of-words feature values used by the proxy classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    Presence,
    Counts,
}

impl FeatureKind {
    fn scheme(self) -> FeatureScheme<'static> {
        match self {
            FeatureKind::Presence => FeatureScheme::Presence,
            FeatureKind::Counts => FeatureScheme::Counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub relabel_mode: RelabelMode,
    /// Weight λ of the `λ/2 · ||w||²` penalty added to the mean log-loss.
    pub l2_strength: f64,
    pub threshold: f64,
    pub vocab_size: usize,
    pub features: FeatureKind,
    pub max_iter: usize,
    pub tolerance: f64,
    /// Keep only the `k` words most correlated with the covariate.
    pub restrict_to_covariate: Option<usize>,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            relabel_mode: RelabelMode::T0Only,
            l2_strength: 1e-4,
            threshold: 0.5,
            vocab_size: 2000,
            features: FeatureKind::Presence,
            max_iter: 1000,
            tolerance: 1e-6,
            restrict_to_covariate: None,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if !(self.l2_strength >= 0.0 && self.l2_strength.is_finite()) {
            return Err(Error::InvalidParameter("l2_strength must be non-negative".into()));
        }
        if self.vocab_size == 0 {
            return Err(Error::InvalidParameter("vocab_size must be positive".into()));
        }
        if self.restrict_to_covariate == Some(0) {
            return Err(Error::InvalidParameter("restrict_to_covariate must be positive".into()));
        }
        Ok(())
    }
}

/// A logistic regression over sparse features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassifierRecord", into = "ClassifierRecord")]
pub struct ProxyClassifier {
    weights: Vec<f64>,
    pub bias: f64,
    feature_subset: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct ClassifierRecord {
    dim: usize,
    weights: BTreeMap<usize, f64>,
    bias: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_subset: Option<Vec<usize>>,
}

impl TryFrom<ClassifierRecord> for ProxyClassifier {
    type Error = Error;

    fn try_from(r: ClassifierRecord) -> Result<Self> {
        let mut weights = vec![0.0; r.dim];
        for (i, w) in r.weights {
            *weights
                .get_mut(i)
                .ok_or_else(|| Error::InvalidParameter(format!("weight index {i} exceeds dimension {}", r.dim)))? = w;
        }
        ProxyClassifier::new(weights, r.bias, r.feature_subset)
    }
}

impl From<ProxyClassifier> for ClassifierRecord {
    fn from(c: ProxyClassifier) -> Self {
        ClassifierRecord {
            dim: c.weights.len(),
            weights: c
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i, *w))
                .collect(),
            bias: c.bias,
            feature_subset: c.feature_subset,
        }
    }
}

impl ProxyClassifier {
    pub fn new(weights: Vec<f64>, bias: f64, feature_subset: Option<Vec<usize>>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::InvalidParameter("classifier weights must be finite".into()));
        }
        if let Some(subset) = &feature_subset {
            if subset.iter().any(|&i| i >= weights.len()) {
                return Err(Error::InvalidParameter(
                    "feature subset exceeds classifier dimension".into(),
                ));
            }
        }
        Ok(Self {
            weights,
            bias,
            feature_subset,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn feature_subset(&self) -> Option<&[usize]> {
        self.feature_subset.as_deref()
    }

    pub fn decision(&self, x: &FeatureVector) -> f64 {
        x.dot_dense(&self.weights) + self.bias
    }

    /// `P(T̂=1 | W)`.
    pub fn predict_proba(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.decision(x))
    }
}

fn objective(features: &[FeatureVector], labels: &[bool], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = features.len() as f64;
    let loss: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| logit_cross_entropy(x.dot_dense(w) + b, y))
        .sum();
    loss / n + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

fn gradient(
    features: &[FeatureVector],
    labels: &[bool],
    w: &[f64],
    b: f64,
    lambda: f64,
    mask: Option<&[bool]>,
) -> (Vec<f64>, f64) {
    let n = features.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let r = (sigmoid(x.dot_dense(w) + b) - f64::from(u8::from(y))) / n;
        gb += r;
        for (i, v) in x.iter() {
            if i < gw.len() {
                gw[i] += r * v;
            }
        }
    }
    for (g, wi) in gw.iter_mut().zip(w) {
        *g += lambda * wi;
    }
    if let Some(mask) = mask {
        for (g, keep) in gw.iter_mut().zip(mask) {
            if !keep {
                *g = 0.0;
            }
        }
    }
    (gw, gb)
}

/// Fit an L2-penalised logistic regression by full-batch gradient descent
/// with a backtracking line search.
pub fn train_proxy_classifier(
    features: &[FeatureVector],
    labels: &[bool],
    dim: usize,
    config: &BoostConfig,
    feature_subset: Option<Vec<usize>>,
) -> Result<ProxyClassifier> {
    config.validate()?;
    if features.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if !labels.iter().any(|&y| y) {
        return Err(Error::ClassAbsent(1));
    }
    if labels.iter().all(|&y| y) {
        return Err(Error::ClassAbsent(0));
    }
    let mask: Option<Vec<bool>> = feature_subset.as_ref().map(|s| {
        let mut m = vec![false; dim];
        for &i in s {
            if i < dim {
                m[i] = true;
            }
        }
        m
    });
    let lambda = config.l2_strength;
    let mut w = vec![0.0; dim];
    let prior = labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64;
    let mut b = (prior / (1.0 - prior)).ln();
    let mut f = objective(features, labels, &w, b, lambda);
    let mut step = 1.0;
    for _ in 0..config.max_iter {
        let (gw, gb) = gradient(features, labels, &w, b, lambda, mask.as_deref());
        let sq = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        if sq.sqrt() < config.tolerance {
            break;
        }
        step *= 2.0;
        loop {
            let cand_w: Vec<f64> = w.iter().zip(&gw).map(|(wi, g)| wi - step * g).collect();
            let cand_b = b - step * gb;
            let cand_f = objective(features, labels, &cand_w, cand_b, lambda);
            if cand_f <= f - 0.5 * step * sq {
                w = cand_w;
                b = cand_b;
                f = cand_f;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return ProxyClassifier::new(w, b, feature_subset);
            }
        }
    }
    ProxyClassifier::new(w, b, feature_subset)
}

/// Relabel according to the classifier probabilities. The comparison with
/// the threshold is strict.
pub fn boost_labels(proxy: &[bool], probabilities: &[f64], config: &BoostConfig) -> Vec<bool> {
    proxy
        .iter()
        .zip(probabilities)
        .map(|(&t, &p)| {
            let confident = p > config.threshold;
            match config.relabel_mode {
                RelabelMode::T0Only => t || confident,
                RelabelMode::All => confident,
            }
        })
        .collect()
}

/// Point-biserial correlation of every feature with a binary covariate;
/// returns the `k` features of largest `|r|`, ties broken by index.
pub fn pointbiserial_restrict(
    features: &[FeatureVector],
    covariates: &[bool],
    dim: usize,
    k: usize,
) -> Result<Vec<usize>> {
    let scores = pointbiserial(features, covariates, dim)?;
    Ok(top_k(&scores, k))
}

/// `(mean₁ − mean₀)/s · sqrt(n₁n₀/n²)` per feature, `s` the population
/// standard deviation; constant features score 0.
pub fn pointbiserial(features: &[FeatureVector], covariates: &[bool], dim: usize) -> Result<Vec<f64>> {
    if features.len() != covariates.len() {
        return Err(Error::InvalidParameter(
            "features and covariates differ in length".into(),
        ));
    }
    let n = features.len() as f64;
    let n1 = covariates.iter().filter(|&&c| c).count() as f64;
    let n0 = n - n1;
    if n1 == 0.0 || n0 == 0.0 {
        return Err(Error::InvalidParameter("covariate is constant".into()));
    }
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    let mut sum1 = vec![0.0; dim];
    for (x, &c) in features.iter().zip(covariates) {
        for (i, v) in x.iter() {
            if i < dim {
                sum[i] += v;
                sum_sq[i] += v * v;
                if c {
                    sum1[i] += v;
                }
            }
        }
    }
    Ok((0..dim)
        .map(|i| {
            let mean = sum[i] / n;
            let var = (sum_sq[i] / n - mean * mean).max(0.0);
            let s = var.sqrt();
            if s <= 1e-12 {
                return 0.0;
            }
            let m1 = sum1[i] / n1;
            let m0 = (sum[i] - sum1[i]) / n0;
            (m1 - m0) / s * (n1 * n0 / (n * n)).sqrt()
        })
        .collect())
}

fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Confusion-matrix summary of a proxy against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyAccuracy {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn proxy_accuracy(proxy: &[bool], truth: &[bool]) -> Result<ProxyAccuracy> {
    if proxy.is_empty() {
        return Err(Error::Empty("proxy labels"));
    }
    if proxy.len() != truth.len() {
        return Err(Error::InvalidParameter("proxy and truth differ in length".into()));
    }
    let (mut tp, mut fp, mut fneg, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in proxy.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(ProxyAccuracy {
        accuracy: ratio(tp + tn, proxy.len()),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
    })
}

/// A fitted T-boost model: vocabulary, feature kind and classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TBoost {
    pub vocabulary: Vocabulary,
    pub features: FeatureKind,
    pub classifier: ProxyClassifier,
}

impl TBoost {
    /// Train on the `T̂` labels of a corpus.
    pub fn fit(docs: &[Document], config: &BoostConfig) -> Result<Self> {
        config.validate()?;
        let labels = docs
            .iter()
            .map(|d| d.require_treatment(TreatmentField::Proxy))
            .collect::<Result<Vec<_>>>()?;
        let vocabulary = build_vocabulary(docs, config.vocab_size)?;
        let features: Vec<FeatureVector> = docs
            .iter()
            .map(|d| featurize(d, &vocabulary, config.features.scheme()))
            .collect();
        let subset = match config.restrict_to_covariate {
            Some(k) => Some(covariate_subset(docs, &features, vocabulary.len(), k)?),
            None => None,
        };
        let classifier = train_proxy_classifier(&features, &labels, vocabulary.len(), config, subset)?;
        Ok(Self {
            vocabulary,
            features: config.features,
            classifier,
        })
    }

    pub fn predict_proba(&self, doc: &Document) -> f64 {
        self.classifier
            .predict_proba(&featurize(doc, &self.vocabulary, self.features.scheme()))
    }

    /// Fill `proxy_boosted` on every document.
    pub fn boost(&self, docs: &mut [Document], config: &BoostConfig) -> Result<()> {
        let proxy = docs
            .iter()
            .map(|d| d.require_treatment(TreatmentField::Proxy))
            .collect::<Result<Vec<_>>>()?;
        let probs: Vec<f64> = docs.iter().map(|d| self.predict_proba(d)).collect();
        for (d, t) in docs.iter_mut().zip(boost_labels(&proxy, &probs, config)) {
            d.proxy_boosted = Some(t);
        }
        Ok(())
    }
}

/// Features most correlated with any covariate level (one-vs-rest).
fn covariate_subset(docs: &[Document], features: &[FeatureVector], dim: usize, k: usize) -> Result<Vec<usize>> {
    let levels = covariate_arity(docs);
    if levels < 2 {
        return Err(Error::InvalidParameter("covariate is constant".into()));
    }
    let targets: Vec<usize> = if levels == 2 { vec![1] } else { (0..levels).collect() };
    let mut best = vec![0.0f64; dim];
    for c in targets {
        let indicator: Vec<bool> = docs.iter().map(|d| d.covariate == c).collect();
        for (b, r) in best.iter_mut().zip(pointbiserial(features, &indicator, dim)?) {
            *b = b.max(r.abs());
        }
    }
    Ok(top_k(&best, k))
}
