//! W-Adjust: adjusting for the confounding content of the text.
//!
//! A representation `b(W)` (a trained bag-of-words encoder
//! `tanh(Wᵀx + b_enc)`, or a fixed external embedding) feeds two outcome
//! heads, `Q̂(t, b(W), C) = σ(M_t^b · b(W) + M_t^c · onehot(C) + b)`. Head `t`
//! is fit on documents whose (boosted) proxy equals `t`; the encoder is shared
//! and kept small by an L2 penalty of weight `α`. The effect estimate is the
//! sample average of `Q̂(1, ·) − Q̂(0, ·)`.

mod embedding;

pub use embedding::EmbeddingFile;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_vocabulary, covariate_arity, featurize, Document, FeatureVector, TreatmentField, Vocabulary,
};
use crate::error::{Error, Result};
use crate::estimators::mean_sd;
use crate::proxy::FeatureKind;
use crate::rng::{self, purpose};
use crate::{corpus::FeatureScheme, logit_cross_entropy, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepresentationKind {
    #[default]
    TrainedBow,
    ExternalEmbedding,
}

impl fmt::Display for RepresentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RepresentationKind::TrainedBow => "trained-bow",
            RepresentationKind::ExternalEmbedding => "external-embedding",
        })
    }
}

impl FromStr for RepresentationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trained-bow" | "trained_bow" | "bow" => Ok(RepresentationKind::TrainedBow),
            "external-embedding" | "external_embedding" | "external" => Ok(RepresentationKind::ExternalEmbedding),
            other => Err(Error::Parse(format!("unknown representation `{other}`"))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub representation: RepresentationKind,
    /// Representation size `d` (ignored for external embeddings, which bring
    /// their own).
    pub dim: usize,
    pub alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Number of cross-validation folds.
    pub folds: usize,
    pub seed: u64,
    pub vocab_size: usize,
    pub features: FeatureKind,
    /// Weight of the outcome cross-entropy in the objective.
    pub outcome_weight: f64,
    /// Standard deviation of the initial encoder weights.
    pub init_scale: f64,
    /// Label that selects the head for each training document.
    pub treatment: TreatmentField,
    /// Keep the epoch with the lowest validation loss.
    pub early_stopping: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            representation: RepresentationKind::TrainedBow,
            dim: 32,
            alpha: 0.01,
            epochs: 3,
            batch_size: 32,
            learning_rate: 0.1,
            folds: 5,
            seed: 0,
            vocab_size: 2000,
            features: FeatureKind::Presence,
            outcome_weight: 1.0,
            init_scale: 0.1,
            treatment: TreatmentField::Boosted,
            early_stopping: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.dim == 0 || self.epochs == 0 || self.batch_size == 0 || self.vocab_size == 0 {
            return bad("dim, epochs, batch_size and vocab_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        if !(self.outcome_weight > 0.0 && self.outcome_weight.is_finite()) {
            return bad("outcome_weight must be positive");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be non-negative");
        }
        if self.folds < 2 {
            return bad("cross-validation needs at least 2 folds");
        }
        Ok(())
    }
}

/// Two-headed outcome model over a text representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord", into = "ModelRecord")]
pub struct OutcomeModel {
    pub kind: RepresentationKind,
    pub dim: usize,
    /// Vocabulary of the bag-of-words encoder.
    pub vocabulary: Option<Vocabulary>,
    pub features: FeatureKind,
    /// Encoder matrix, `vocabulary.len() × dim`, row-major.
    pub encoder_weights: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    /// `M_t^b`, length `dim`.
    pub head_b: [Vec<f64>; 2],
    /// `M_t^c`, one entry per covariate level.
    pub head_c: [Vec<f64>; 2],
    pub bias: f64,
    pub alpha: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    kind: RepresentationKind,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary: Option<Vocabulary>,
    #[serde(default)]
    features: FeatureKind,
    encoder_weights: Vec<Vec<f64>>,
    #[serde(default)]
    encoder_bias: Vec<f64>,
    head_b_0: Vec<f64>,
    head_b_1: Vec<f64>,
    head_c_0: Vec<f64>,
    head_c_1: Vec<f64>,
    bias: f64,
    alpha: f64,
}

impl TryFrom<ModelRecord> for OutcomeModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        if r.encoder_weights.iter().any(|row| row.len() != r.dim) {
            return Err(Error::InvalidParameter("encoder rows must have length dim".into()));
        }
        let model = OutcomeModel {
            kind: r.kind,
            dim: r.dim,
            vocabulary: r.vocabulary,
            features: r.features,
            encoder_weights: r.encoder_weights.concat(),
            encoder_bias: r.encoder_bias,
            head_b: [r.head_b_0, r.head_b_1],
            head_c: [r.head_c_0, r.head_c_1],
            bias: r.bias,
            alpha: r.alpha,
        };
        model.validate()?;
        Ok(model)
    }
}

impl From<OutcomeModel> for ModelRecord {
    fn from(m: OutcomeModel) -> Self {
        let [head_b_0, head_b_1] = m.head_b;
        let [head_c_0, head_c_1] = m.head_c;
        ModelRecord {
            kind: m.kind,
            dim: m.dim,
            vocabulary: m.vocabulary,
            features: m.features,
            encoder_weights: m.encoder_weights.chunks(m.dim.max(1)).map(<[f64]>::to_vec).collect(),
            encoder_bias: m.encoder_bias,
            head_b_0,
            head_b_1,
            head_c_0,
            head_c_1,
            bias: m.bias,
            alpha: m.alpha,
        }
    }
}

/// Model input for one document.
#[derive(Debug, Clone)]
enum Input {
    Sparse(FeatureVector),
    Dense(Vec<f64>),
}

#[derive(Debug, Clone)]
struct Example {
    x: Input,
    c: usize,
    t: usize,
    y: bool,
}

impl OutcomeModel {
    /// All-zero bag-of-words model.
    pub fn bow(vocabulary: Vocabulary, features: FeatureKind, dim: usize, levels: usize, alpha: f64) -> Self {
        let rows = vocabulary.len();
        Self {
            kind: RepresentationKind::TrainedBow,
            dim,
            vocabulary: Some(vocabulary),
            features,
            encoder_weights: vec![0.0; rows * dim],
            encoder_bias: vec![0.0; dim],
            head_b: [vec![0.0; dim], vec![0.0; dim]],
            head_c: [vec![0.0; levels], vec![0.0; levels]],
            bias: 0.0,
            alpha,
        }
    }

    /// All-zero model over external embeddings of size `dim`.
    pub fn external(dim: usize, levels: usize, alpha: f64) -> Self {
        Self {
            kind: RepresentationKind::ExternalEmbedding,
            dim,
            vocabulary: None,
            features: FeatureKind::Presence,
            encoder_weights: Vec::new(),
            encoder_bias: Vec::new(),
            head_b: [vec![0.0; dim], vec![0.0; dim]],
            head_c: [vec![0.0; levels], vec![0.0; levels]],
            bias: 0.0,
            alpha,
        }
    }

    pub fn levels(&self) -> usize {
        self.head_c[0].len()
    }

    fn rows(&self) -> usize {
        self.vocabulary.as_ref().map_or(0, Vocabulary::len)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.dim == 0 {
            return bad("model dimension must be positive");
        }
        match self.kind {
            RepresentationKind::TrainedBow => {
                if self.vocabulary.is_none() {
                    return bad("bag-of-words model needs a vocabulary");
                }
                if self.encoder_weights.len() != self.rows() * self.dim || self.encoder_bias.len() != self.dim {
                    return bad("encoder shape does not match vocabulary and dim");
                }
            }
            RepresentationKind::ExternalEmbedding => {
                if !self.encoder_weights.is_empty() || !self.encoder_bias.is_empty() {
                    return bad("external-embedding model has no encoder");
                }
            }
        }
        if self.head_b.iter().any(|h| h.len() != self.dim) {
            return bad("head_b length must equal dim");
        }
        if self.head_c[0].len() != self.head_c[1].len() {
            return bad("head_c vectors differ in length");
        }
        if !self.parameters().iter().all(|v| v.is_finite()) || !self.alpha.is_finite() || self.alpha < 0.0 {
            return bad("model parameters must be finite");
        }
        Ok(())
    }

    fn input(&self, doc: &Document) -> Result<Input> {
        match self.kind {
            RepresentationKind::TrainedBow => {
                let vocab = self
                    .vocabulary
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("bag-of-words model needs a vocabulary".into()))?;
                let scheme = match self.features {
                    FeatureKind::Presence => FeatureScheme::Presence,
                    FeatureKind::Counts => FeatureScheme::Counts,
                };
                Ok(Input::Sparse(featurize(doc, vocab, scheme)))
            }
            RepresentationKind::ExternalEmbedding => {
                let e = doc.embedding.as_ref().ok_or_else(|| Error::MissingField {
                    id: doc.id.clone(),
                    field: "embedding",
                })?;
                if e.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        id: doc.id.clone(),
                        expected: self.dim,
                        found: e.len(),
                    });
                }
                Ok(Input::Dense(e.clone()))
            }
        }
    }

    fn hidden(&self, x: &Input) -> Vec<f64> {
        match x {
            Input::Dense(v) => v.clone(),
            Input::Sparse(fv) => {
                let mut pre = self.encoder_bias.clone();
                for (j, v) in fv.iter() {
                    let row = &self.encoder_weights[j * self.dim..(j + 1) * self.dim];
                    for (p, w) in pre.iter_mut().zip(row) {
                        *p += v * w;
                    }
                }
                pre.iter().map(|p| p.tanh()).collect()
            }
        }
    }

    fn logit(&self, t: usize, h: &[f64], c: usize) -> f64 {
        let mb: f64 = self.head_b[t].iter().zip(h).map(|(m, x)| m * x).sum();
        mb + self.head_c[t][c] + self.bias
    }

    fn check_covariate(&self, doc: &Document) -> Result<()> {
        if doc.covariate >= self.levels() {
            return Err(Error::MissingCovariateLevel(doc.covariate));
        }
        Ok(())
    }

    /// `b(W)` for a document.
    pub fn encode(&self, doc: &Document) -> Result<Vec<f64>> {
        Ok(self.hidden(&self.input(doc)?))
    }

    /// `Q̂(t, b(W), C)`.
    pub fn q_predict(&self, t: bool, doc: &Document) -> Result<f64> {
        self.check_covariate(doc)?;
        let h = self.encode(doc)?;
        Ok(sigmoid(self.logit(usize::from(t), &h, doc.covariate)))
    }

    /// `(Q̂(0, ·), Q̂(1, ·))` sharing one encoding.
    pub fn q_pair(&self, doc: &Document) -> Result<(f64, f64)> {
        self.check_covariate(doc)?;
        let h = self.encode(doc)?;
        Ok((
            sigmoid(self.logit(0, &h, doc.covariate)),
            sigmoid(self.logit(1, &h, doc.covariate)),
        ))
    }

    /// Flattened parameters: encoder weights, encoder bias, `M_0^b`, `M_1^b`,
    /// `M_0^c`, `M_1^c`, then the shared bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        p.extend(&self.encoder_weights);
        p.extend(&self.encoder_bias);
        for h in &self.head_b {
            p.extend(h);
        }
        for h in &self.head_c {
            p.extend(h);
        }
        p.push(self.bias);
        p
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder_weights.len() + self.encoder_bias.len() + 2 * self.dim + 2 * self.levels() + 1
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.parameter_count() {
            return Err(Error::InvalidParameter(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                p.len()
            )));
        }
        let mut rest = p;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(&mut self.encoder_weights);
        take(&mut self.encoder_bias);
        for h in &mut self.head_b {
            take(h);
        }
        for h in &mut self.head_c {
            take(h);
        }
        take(std::slice::from_mut(&mut self.bias));
        Ok(())
    }

    fn offsets(&self) -> Offsets {
        let w = self.encoder_weights.len();
        let benc = w + self.encoder_bias.len();
        let hb = benc;
        let hc = hb + 2 * self.dim;
        let bias = hc + 2 * self.levels();
        Offsets { benc: w, hb, hc, bias }
    }

    /// Add the gradient of `scale · CE(y, logit)` for one example into `g`;
    /// returns the unscaled cross-entropy.
    fn accumulate(&self, ex: &Example, scale: f64, off: &Offsets, g: &mut [f64]) -> f64 {
        let h = self.hidden(&ex.x);
        let z = self.logit(ex.t, &h, ex.c);
        let dz = scale * (sigmoid(z) - f64::from(u8::from(ex.y)));
        let d = self.dim;
        let hb = off.hb + ex.t * d;
        for k in 0..d {
            g[hb + k] += dz * h[k];
        }
        g[off.hc + ex.t * self.levels() + ex.c] += dz;
        g[off.bias] += dz;
        if let Input::Sparse(fv) = &ex.x {
            let head = &self.head_b[ex.t];
            let da: Vec<f64> = (0..d).map(|k| dz * head[k] * (1.0 - h[k] * h[k])).collect();
            for k in 0..d {
                g[off.benc + k] += da[k];
            }
            for (j, v) in fv.iter() {
                let row = &mut g[j * d..(j + 1) * d];
                for (gw, a) in row.iter_mut().zip(&da) {
                    *gw += v * a;
                }
            }
        }
        logit_cross_entropy(z, ex.y)
    }

    fn examples<'a>(
        &self,
        docs: impl IntoIterator<Item = &'a Document>,
        field: TreatmentField,
    ) -> Result<Vec<Example>> {
        docs.into_iter()
            .map(|d| {
                self.check_covariate(d)?;
                Ok(Example {
                    x: self.input(d)?,
                    c: d.covariate,
                    t: usize::from(d.require_treatment(field)?),
                    y: d.require_outcome()?,
                })
            })
            .collect()
    }

    /// Training objective on `docs` and its gradient with respect to
    /// [`parameters`](Self::parameters):
    /// `outcome_weight · mean CE + α/2 · ||encoder_weights||²`.
    pub fn loss_and_gradient(
        &self,
        docs: &[Document],
        field: TreatmentField,
        outcome_weight: f64,
    ) -> Result<(f64, Vec<f64>)> {
        if docs.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let examples = self.examples(docs, field)?;
        let off = self.offsets();
        let mut g = vec![0.0; self.parameter_count()];
        let scale = outcome_weight / examples.len() as f64;
        let mut loss = 0.0;
        for ex in &examples {
            loss += scale * self.accumulate(ex, scale, &off, &mut g);
        }
        let mut penalty = 0.0;
        for (gw, w) in g.iter_mut().zip(&self.encoder_weights) {
            *gw += self.alpha * w;
            penalty += w * w;
        }
        Ok((loss + 0.5 * self.alpha * penalty, g))
    }

    fn mean_cross_entropy(&self, examples: &[Example]) -> f64 {
        examples
            .iter()
            .map(|ex| logit_cross_entropy(self.logit(ex.t, &self.hidden(&ex.x), ex.c), ex.y))
            .sum::<f64>()
            / examples.len() as f64
    }
}

struct Offsets {
    benc: usize,
    hb: usize,
    hc: usize,
    bias: usize,
}

fn fresh_model(
    config: &TrainConfig,
    vocabulary: Option<Vocabulary>,
    external_dim: Option<usize>,
    levels: usize,
) -> Result<OutcomeModel> {
    match config.representation {
        RepresentationKind::TrainedBow => {
            let vocab = vocabulary.ok_or_else(|| Error::InvalidParameter("missing vocabulary".into()))?;
            let mut model = OutcomeModel::bow(vocab, config.features, config.dim, levels, config.alpha);
            let normal = Normal::new(0.0, config.init_scale).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut rng = rng::stream(config.seed, &[purpose::INIT]);
            for w in &mut model.encoder_weights {
                *w = normal.sample(&mut rng);
            }
            Ok(model)
        }
        RepresentationKind::ExternalEmbedding => {
            let dim = external_dim.ok_or(Error::Empty("no document carries an embedding"))?;
            Ok(OutcomeModel::external(dim, levels, config.alpha))
        }
    }
}

fn embedding_dim(docs: &[Document]) -> Option<usize> {
    docs.iter().find_map(|d| d.embedding.as_ref().map(Vec::len))
}

/// SGD on `train`, optionally keeping the epoch with the best loss on `val`.
fn fit(mut model: OutcomeModel, train: &[Example], val: &[Example], config: &TrainConfig) -> Result<OutcomeModel> {
    for t in 0..2 {
        if !train.iter().any(|ex| ex.t == t) {
            return Err(Error::ClassAbsent(t as u8));
        }
    }
    let rate = train.iter().filter(|ex| ex.y).count() as f64 / train.len() as f64;
    let rate = rate.clamp(1e-3, 1.0 - 1e-3);
    model.bias = (rate / (1.0 - rate)).ln();
    // Start the covariate heads at the smoothed per-(t, c) outcome logits, the
    // optimum when the representation carries nothing; a few epochs of SGD
    // from zero leave them far from it and shrink the estimated effect.
    let levels = model.levels();
    let mut cells = vec![[0.0f64; 2]; 2 * levels];
    for ex in train {
        let cell = &mut cells[ex.t * levels + ex.c];
        cell[0] += f64::from(u8::from(ex.y));
        cell[1] += 1.0;
    }
    for t in 0..2 {
        for c in 0..levels {
            let [ones, n] = cells[t * levels + c];
            let p = (ones + 0.5) / (n + 1.0);
            model.head_c[t][c] = (p / (1.0 - p)).ln() - model.bias;
        }
    }

    let off = model.offsets();
    let mut grad = vec![0.0; model.parameter_count()];
    let shrink = 1.0 / (1.0 + config.learning_rate * model.alpha);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, OutcomeModel)> = None;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng::stream(config.seed, &[purpose::SHUFFLE, epoch as u64]));
        for batch in order.chunks(config.batch_size) {
            grad.fill(0.0);
            let scale = config.outcome_weight / batch.len() as f64;
            for &i in batch {
                model.accumulate(&train[i], scale, &off, &mut grad);
            }
            let mut params = model.parameters();
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
            model.set_parameters(&params)?;
            // Proximal step for the α/2·||W||² penalty.
            for w in &mut model.encoder_weights {
                *w *= shrink;
            }
        }
        if config.early_stopping && !val.is_empty() {
            let loss = model.mean_cross_entropy(val);
            if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                best = Some((loss, model.clone()));
            }
        }
    }
    let model = best.map_or(model, |(_, m)| m);
    model.validate()?;
    Ok(model)
}

/// Train on every document of `docs` (no validation split).
pub fn train(docs: &[Document], config: &TrainConfig) -> Result<OutcomeModel> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let levels = covariate_arity(docs);
    let vocab = match config.representation {
        RepresentationKind::TrainedBow => Some(build_vocabulary(docs, config.vocab_size)?),
        RepresentationKind::ExternalEmbedding => None,
    };
    let model = fresh_model(config, vocab, embedding_dim(docs), levels)?;
    let examples = model.examples(docs, config.treatment)?;
    fit(model, &examples, &[], config)
}

/// `(1/n) Σ_i [Q̂(1, W_i) − Q̂(0, W_i)]`.
pub fn estimate_psi_proxy(model: &OutcomeModel, docs: &[Document]) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let mut total = 0.0;
    for d in docs {
        let (q0, q1) = model.q_pair(d)?;
        total += q1 - q0;
    }
    Ok(total / docs.len() as f64)
}

/// Result of a cross-validated W-Adjust run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidated {
    pub estimate: f64,
    pub standard_error: f64,
    pub fold_estimates: Vec<f64>,
}

/// Assign documents to `k` folds, stratified by `(label, C)`.
pub fn stratified_folds(docs: &[Document], field: TreatmentField, k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut strata: BTreeMap<(bool, usize), Vec<usize>> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        strata
            .entry((d.require_treatment(field)?, d.covariate))
            .or_default()
            .push(i);
    }
    let mut rng = rng::stream(seed, &[purpose::FOLDS]);
    let mut folds = vec![0usize; docs.len()];
    let mut next = 0usize;
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

/// K-fold W-Adjust: fold `k` is held out for estimation, fold `k+1` (when
/// there are at least three folds) for early stopping, the rest for training.
pub fn cross_validated_ate(docs: &[Document], config: &TrainConfig) -> Result<CrossValidated> {
    config.validate()?;
    let folds = stratified_folds(docs, config.treatment, config.folds, config.seed)?;
    cross_validated_with_folds(docs, config, &folds)
}

/// Cross-validation with an explicit fold assignment.
pub fn cross_validated_with_folds(docs: &[Document], config: &TrainConfig, folds: &[usize]) -> Result<CrossValidated> {
    config.validate()?;
    if docs.len() < 3 * config.batch_size {
        return Err(Error::InvalidParameter(format!(
            "cross-validation needs at least {} documents, got {}",
            3 * config.batch_size,
            docs.len()
        )));
    }
    if folds.len() != docs.len() {
        return Err(Error::InvalidParameter(
            "fold assignment length differs from corpus".into(),
        ));
    }
    let k = folds.iter().max().map_or(0, |m| m + 1);
    if k < 2 || (0..k).any(|f| !folds.contains(&f)) {
        return Err(Error::InvalidParameter(
            "fold assignment needs at least two non-empty folds".into(),
        ));
    }
    let levels = covariate_arity(docs);
    let vocab = match config.representation {
        RepresentationKind::TrainedBow => Some(build_vocabulary(docs, config.vocab_size)?),
        RepresentationKind::ExternalEmbedding => None,
    };
    let template = fresh_model(config, vocab, embedding_dim(docs), levels)?;
    let all = template.examples(docs, config.treatment)?;

    let fold_estimates = (0..k)
        .into_par_iter()
        .map(|test| {
            let val_fold = (k >= 3).then_some((test + 1) % k);
            let (mut train, mut val, mut held) = (Vec::new(), Vec::new(), Vec::new());
            for (i, &f) in folds.iter().enumerate() {
                if f == test {
                    held.push(i);
                } else if Some(f) == val_fold {
                    val.push(all[i].clone());
                } else {
                    train.push(all[i].clone());
                }
            }
            let model = fit(template.clone(), &train, &val, config)?;
            let total: f64 = held
                .iter()
                .map(|&i| {
                    let ex = &all[i];
                    let h = model.hidden(&ex.x);
                    sigmoid(model.logit(1, &h, ex.c)) - sigmoid(model.logit(0, &h, ex.c))
                })
                .sum();
            Ok(total / held.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (estimate, sd) = mean_sd(&fold_estimates);
    Ok(CrossValidated {
        estimate,
        standard_error: sd.unwrap_or(0.0) / (k as f64).sqrt(),
        fold_estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_terms(words.iter().map(|w| w.to_string()).collect()).unwrap()
    }

    fn labelled(id: &str, text: &str, c: usize, t: bool, y: bool) -> Document {
        let mut d = Document::new(id, text, c);
        d.proxy_boosted = Some(t);
        d.outcome = Some(y);
        d
    }

    #[test]
    fn zero_encoder_encodes_to_zero() {
        let model = OutcomeModel::bow(vocab(&["a", "b"]), FeatureKind::Presence, 3, 1, 0.0);
        assert_eq!(model.encode(&Document::new("d", "a b", 0)).unwrap(), vec![0.0; 3]);
        assert_eq!(model.q_predict(true, &Document::new("d", "a", 0)).unwrap(), 0.5);
        assert_eq!(model.q_predict(false, &Document::new("d", "a", 0)).unwrap(), 0.5);
    }

    #[test]
    fn external_mode_passes_embeddings_through() {
        let model = OutcomeModel::external(2, 1, 0.0);
        let mut d = Document::new("d", "", 0);
        d.embedding = Some(vec![0.25, -3.0]);
        assert_eq!(model.encode(&d).unwrap(), vec![0.25, -3.0]);
        d.embedding = Some(vec![1.0]);
        assert!(matches!(
            model.encode(&d),
            Err(Error::DimensionMismatch { ref id, expected: 2, found: 1 }) if id == "d"
        ));
    }

    #[test]
    fn hand_set_encoder_and_head() {
        let mut model = OutcomeModel::bow(vocab(&["a"]), FeatureKind::Presence, 1, 1, 0.0);
        model.encoder_weights = vec![2.0];
        let d = Document::new("d", "a", 0);
        assert!((model.encode(&d).unwrap()[0] - 2f64.tanh()).abs() < 1e-15);
        assert!((2f64.tanh() - 0.964_027_580_075_817).abs() < 1e-12);

        let mut ext = OutcomeModel::external(1, 1, 0.0);
        ext.head_b[1] = vec![2.0];
        ext.bias = -0.5;
        let mut e = Document::new("e", "", 0);
        e.embedding = Some(vec![0.5]);
        let q = ext.q_predict(true, &e).unwrap();
        assert!((q - sigmoid(0.5)).abs() < 1e-15);
        assert!((q - 0.622_459_331_201_854_6).abs() < 1e-12);
    }

    #[test]
    fn equal_heads_give_zero_effect() {
        let mut model = OutcomeModel::bow(vocab(&["a", "b"]), FeatureKind::Presence, 2, 2, 0.0);
        model.encoder_weights = vec![0.3, -0.2, 1.1, 0.4];
        model.head_b = [vec![0.7, -1.0], vec![0.7, -1.0]];
        model.head_c = [vec![0.1, 0.2], vec![0.1, 0.2]];
        let docs = vec![Document::new("x", "a", 0), Document::new("y", "b a", 1)];
        for d in &docs {
            assert_eq!(model.q_predict(true, d).unwrap(), model.q_predict(false, d).unwrap());
        }
        assert_eq!(estimate_psi_proxy(&model, &docs).unwrap(), 0.0);
    }

    #[test]
    fn psi_proxy_single_document() {
        let mut model = OutcomeModel::external(1, 1, 0.0);
        model.head_b = [vec![0.0], vec![0.0]];
        model.head_c = [vec![(0.3f64 / 0.7).ln()], vec![4f64.ln()]];
        let mut d = Document::new("d", "", 0);
        d.embedding = Some(vec![1.0]);
        assert!((estimate_psi_proxy(&model, &[d]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn parameters_round_trip() {
        let mut model = OutcomeModel::bow(vocab(&["a", "b"]), FeatureKind::Presence, 3, 2, 0.1);
        let p: Vec<f64> = (0..model.parameter_count()).map(|i| i as f64 * 0.01).collect();
        model.set_parameters(&p).unwrap();
        assert_eq!(model.parameters(), p);
        assert_eq!(*model.head_c[1].last().unwrap(), p[p.len() - 2]);
        assert_eq!(model.bias, *p.last().unwrap());
    }

    #[test]
    fn model_json_uses_documented_keys() {
        let model = OutcomeModel::bow(vocab(&["a"]), FeatureKind::Presence, 2, 1, 0.5);
        let json = serde_json::to_value(&model).unwrap();
        for key in [
            "kind",
            "dim",
            "encoder_weights",
            "head_b_0",
            "head_b_1",
            "head_c_0",
            "head_c_1",
            "bias",
            "alpha",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["kind"], "trained-bow");
        let back: OutcomeModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, model);
    }

    fn random_corpus(n: usize, seed: u64, outcome: impl Fn(bool, &str) -> f64) -> Vec<Document> {
        let words = ["red", "green", "blue", "gift", "good", "bad"];
        let mut rng = rng::stream(seed, &[]);
        (0..n)
            .map(|i| {
                let text: Vec<&str> = words.iter().copied().filter(|_| rng.random::<bool>()).collect();
                let text = text.join(" ");
                let t = rng.random::<bool>();
                let y = rng.random::<f64>() < outcome(t, &text);
                labelled(&format!("d{i:04}"), &text, i % 2, t, y)
            })
            .collect()
    }

    #[test]
    fn huge_alpha_collapses_the_encoder() {
        let docs = random_corpus(400, 1, |t, text| if t || text.contains("gift") { 0.8 } else { 0.2 });
        let config = TrainConfig {
            alpha: 1e6,
            dim: 4,
            ..TrainConfig::default()
        };
        let model = train(&docs, &config).unwrap();
        let norm = model.encoder_weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!(norm < 1e-2, "{norm}");
    }

    #[test]
    fn null_outcome_gives_null_effect() {
        let docs = random_corpus(2000, 2, |_, _| 0.5);
        let config = TrainConfig {
            dim: 8,
            ..TrainConfig::default()
        };
        let cv = cross_validated_ate(&docs, &config).unwrap();
        assert!(cv.estimate.abs() < 0.03, "{cv:?}");
        assert!(cv.estimate.abs() < 2.0 * cv.standard_error.max(0.005), "{cv:?}");
    }

    #[test]
    fn copy_task_is_learned() {
        let docs = random_corpus(2000, 3, |t, _| if t { 1.0 } else { 0.0 });
        let config = TrainConfig {
            dim: 4,
            ..TrainConfig::default()
        };
        let model = train(&docs, &config).unwrap();
        let (loss, _) = model.loss_and_gradient(&docs, TreatmentField::Boosted, 1.0).unwrap();
        assert!(loss < 0.1, "{loss}");
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let docs = random_corpus(300, 4, |t, _| if t { 0.7 } else { 0.4 });
        let config = TrainConfig {
            dim: 3,
            ..TrainConfig::default()
        };
        let a = train(&docs, &config).unwrap();
        let b = train(&docs, &config).unwrap();
        assert_eq!(a.parameters(), b.parameters());
    }

    #[test]
    fn missing_head_class_is_an_error() {
        let docs: Vec<Document> = (0..40)
            .map(|i| labelled(&format!("d{i}"), "a", 0, true, i % 2 == 0))
            .collect();
        assert!(matches!(
            train(&docs, &TrainConfig::default()),
            Err(Error::ClassAbsent(0))
        ));
    }

    #[test]
    fn duplicated_folds_agree() {
        let half = random_corpus(120, 5, |t, text| if t && text.contains("good") { 0.9 } else { 0.3 });
        let mut docs = half.clone();
        for d in &half {
            let mut copy = d.clone();
            copy.id = format!("{}b", d.id);
            docs.push(copy);
        }
        let folds: Vec<usize> = (0..docs.len()).map(|i| usize::from(i >= half.len())).collect();
        let config = TrainConfig {
            dim: 3,
            ..TrainConfig::default()
        };
        let cv = cross_validated_with_folds(&docs, &config, &folds).unwrap();
        assert_eq!(cv.fold_estimates[0], cv.fold_estimates[1]);
        assert_eq!(cv.standard_error, 0.0);
    }

    #[test]
    fn folds_are_stratified() {
        let docs = random_corpus(500, 6, |_, _| 0.5);
        let folds = stratified_folds(&docs, TreatmentField::Boosted, 5, 0).unwrap();
        for f in 0..5 {
            for t in [false, true] {
                for c in 0..2 {
                    let in_stratum = docs
                        .iter()
                        .filter(|d| d.proxy_boosted == Some(t) && d.covariate == c)
                        .count();
                    let here = docs
                        .iter()
                        .zip(&folds)
                        .filter(|(d, &k)| k == f && d.proxy_boosted == Some(t) && d.covariate == c)
                        .count();
                    assert!((here as f64 - in_stratum as f64 / 5.0).abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn small_corpora_are_rejected() {
        let docs = random_corpus(50, 7, |_, _| 0.5);
        assert!(cross_validated_ate(&docs, &TrainConfig::default()).is_err());
    }
}
