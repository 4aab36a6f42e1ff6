//! Small generative worlds over `(T, Z, W, T̂, Y)` that can be enumerated
//! exactly.
//!
//! A writer draws `(T, Z)`, then a short token sequence `W ~ P(W | T, Z)`. The
//! proxy is a (possibly stochastic) function of `W`, and `Y` depends on the
//! reader's perception `T̃ = T` and the declared text feature `Z̃ = f(W)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Lexicon};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

/// Maximum number of distinct token sequences an enumerable world may have.
pub const SUPPORT_CAP: usize = 10_000;
const MAX_DISTINCT_TOKENS: usize = 8;
const MAX_LENGTH: usize = 4;
const MASS_TOLERANCE: f64 = 1e-9;
const PREMISE_TOLERANCE: f64 = 1e-12;

/// One token sequence and its probability within a `text_model` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextOption {
    pub tokens: Vec<String>,
    pub prob: f64,
}

impl TextOption {
    pub fn new(tokens: &[&str], prob: f64) -> Self {
        Self {
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            prob,
        }
    }
}

/// Exact-sequence override in a tabular proxy rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub tokens: Vec<String>,
    /// `P(T̂=1 | W = tokens)`.
    pub p: f64,
}

fn one() -> f64 {
    1.0
}

/// How the proxy `T̂` is read off the text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxyRule {
    /// `P(T̂=1|W)` is `p_hit` if `W` contains a lexicon word, else `p_miss`.
    Lexicon {
        words: Vec<String>,
        #[serde(default = "one")]
        p_hit: f64,
        #[serde(default)]
        p_miss: f64,
    },
    /// Like `Lexicon`, with words read from a lexicon file when the world is
    /// loaded from disk. Relative paths resolve against the world file.
    LexiconFile {
        path: String,
        #[serde(default = "one")]
        p_hit: f64,
        #[serde(default)]
        p_miss: f64,
    },
    /// Explicit per-sequence probabilities, `default` for unlisted sequences.
    Table {
        entries: Vec<TableEntry>,
        #[serde(default)]
        default: f64,
    },
}

impl ProxyRule {
    /// `P(T̂=1 | W)`.
    pub fn probability(&self, tokens: &[String]) -> Result<f64> {
        match self {
            ProxyRule::Lexicon { words, p_hit, p_miss } => Ok(if tokens.iter().any(|t| words.contains(t)) {
                *p_hit
            } else {
                *p_miss
            }),
            ProxyRule::LexiconFile { path, .. } => Err(Error::InvalidWorld(format!(
                "lexicon file `{path}` was not resolved; load the world with WorldSpec::read"
            ))),
            ProxyRule::Table { entries, default } => {
                Ok(entries.iter().find(|e| e.tokens == tokens).map_or(*default, |e| e.p))
            }
        }
    }

    fn probabilities(&self) -> Vec<f64> {
        match self {
            ProxyRule::Lexicon { p_hit, p_miss, .. } | ProxyRule::LexiconFile { p_hit, p_miss, .. } => {
                vec![*p_hit, *p_miss]
            }
            ProxyRule::Table { entries, default } => entries.iter().map(|e| e.p).chain([*default]).collect(),
        }
    }

    fn resolve(self, base: Option<&Path>) -> Result<Self> {
        match self {
            ProxyRule::LexiconFile { path, p_hit, p_miss } => {
                let full = match base {
                    Some(dir) if Path::new(&path).is_relative() => dir.join(&path),
                    _ => Path::new(&path).to_path_buf(),
                };
                let lexicon = Lexicon::read(&full)?;
                Ok(ProxyRule::Lexicon {
                    words: lexicon.words().iter().cloned().collect(),
                    p_hit,
                    p_miss,
                })
            }
            other => Ok(other),
        }
    }
}

/// The declared deterministic text feature `Z̃ = f(W)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Feature {
    ContainsToken(String),
    ContainsAny(Vec<String>),
    Constant,
}

impl Feature {
    pub fn eval(&self, tokens: &[String]) -> bool {
        match self {
            Feature::ContainsToken(w) => tokens.iter().any(|t| t == w),
            Feature::ContainsAny(ws) => tokens.iter().any(|t| ws.contains(t)),
            Feature::Constant => false,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::ContainsToken(w) => write!(f, "contains-token:{w}"),
            Feature::ContainsAny(ws) => write!(f, "contains-any:{}", ws.join("|")),
            Feature::Constant => f.write_str("constant"),
        }
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "constant" {
            return Ok(Feature::Constant);
        }
        match s.split_once(':') {
            Some(("contains-token", w)) if !w.is_empty() => Ok(Feature::ContainsToken(w.into())),
            Some(("contains-any", ws)) if !ws.is_empty() => {
                Ok(Feature::ContainsAny(ws.split('|').map(str::to_owned).collect()))
            }
            _ => Err(Error::Parse(format!("unknown text feature `{s}`"))),
        }
    }
}

impl Serialize for Feature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Feature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What a sampled document stores as its covariate `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateRule {
    #[default]
    Constant,
    /// The writer-side confounder `Z`.
    Z,
    /// The text feature `Z̃ = f(W)`.
    Ztilde,
}

/// A fully specified enumerable world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorldRecord", into = "WorldRecord")]
pub struct WorldSpec {
    pub name: String,
    /// `P(T=t, Z=z)` indexed `[t][z]`.
    pub p_tz: [[f64; 2]; 2],
    /// `P(W | T=t, Z=z)` indexed `[t][z]`.
    pub text_model: [[Vec<TextOption>; 2]; 2],
    pub proxy_rule: ProxyRule,
    /// `P(Y=1 | T̃=t, Z̃=z̃)` indexed `[t][z̃]`.
    pub outcome_model: [[f64; 2]; 2],
    pub f: Feature,
    pub covariate: CovariateRule,
}

#[derive(Serialize, Deserialize)]
struct WorldRecord {
    #[serde(default)]
    name: String,
    p_tz: [[f64; 2]; 2],
    text_model: BTreeMap<String, Vec<TextOption>>,
    proxy_rule: ProxyRule,
    outcome_model: BTreeMap<String, f64>,
    f: Feature,
    #[serde(default)]
    covariate: CovariateRule,
}

fn cell_key(a: usize, b: usize) -> String {
    format!("{a},{b}")
}

fn lookup<T: Clone>(map: &BTreeMap<String, T>, what: &str, a: usize, b: usize) -> std::result::Result<T, String> {
    let key = cell_key(a, b);
    map.get(&key)
        .or_else(|| map.get(&format!("{a}, {b}")))
        .cloned()
        .ok_or_else(|| format!("{what} is missing the \"{key}\" row"))
}

impl TryFrom<WorldRecord> for WorldSpec {
    type Error = String;

    fn try_from(r: WorldRecord) -> std::result::Result<Self, String> {
        let known: BTreeSet<String> = (0..2).flat_map(|a| (0..2).map(move |b| cell_key(a, b))).collect();
        for (what, keys) in [
            ("text_model", r.text_model.keys().collect::<Vec<_>>()),
            ("outcome_model", r.outcome_model.keys().collect()),
        ] {
            if let Some(k) = keys.iter().find(|k| !known.contains(&k.replace(' ', ""))) {
                return Err(format!("{what} has unexpected key \"{k}\""));
            }
        }
        let row = |t, z| lookup(&r.text_model, "text_model", t, z);
        let out = |t, z| lookup(&r.outcome_model, "outcome_model", t, z);
        Ok(WorldSpec {
            name: r.name,
            p_tz: r.p_tz,
            text_model: [[row(0, 0)?, row(0, 1)?], [row(1, 0)?, row(1, 1)?]],
            proxy_rule: r.proxy_rule,
            outcome_model: [[out(0, 0)?, out(0, 1)?], [out(1, 0)?, out(1, 1)?]],
            f: r.f,
            covariate: r.covariate,
        })
    }
}

impl From<WorldSpec> for WorldRecord {
    fn from(w: WorldSpec) -> Self {
        let mut text_model = BTreeMap::new();
        let mut outcome_model = BTreeMap::new();
        let [[a, b], [c, d]] = w.text_model;
        for (t, z, row) in [(0, 0, a), (0, 1, b), (1, 0, c), (1, 1, d)] {
            text_model.insert(cell_key(t, z), row);
            outcome_model.insert(cell_key(t, z), w.outcome_model[t][z]);
        }
        WorldRecord {
            name: w.name,
            p_tz: w.p_tz,
            text_model,
            proxy_rule: w.proxy_rule,
            outcome_model,
            f: w.f,
            covariate: w.covariate,
        }
    }
}

fn probability(what: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidWorld(format!("{what} = {p} is not a probability")))
    }
}

impl WorldSpec {
    /// Parse a world from JSON. `base` resolves relative lexicon-file paths.
    pub fn parse(json: &str, base: Option<&Path>) -> Result<Self> {
        let mut spec: WorldSpec = serde_json::from_str(json).map_err(|e| Error::InvalidWorld(e.to_string()))?;
        spec.proxy_rule = spec.proxy_rule.resolve(base)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)?;
        let mut spec = Self::parse(&json, path.parent())?;
        if spec.name.is_empty() {
            spec.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `P(T=t)` marginal.
    pub fn p_t(&self, t: usize) -> f64 {
        self.p_tz[t][0] + self.p_tz[t][1]
    }

    /// `P(Z=z)` marginal.
    pub fn p_z(&self, z: usize) -> f64 {
        self.p_tz[0][z] + self.p_tz[1][z]
    }

    /// `P(Z̃=1 | T=t, Z=z)` under the text model.
    pub fn ztilde_rate(&self, t: usize, z: usize) -> f64 {
        self.text_model[t][z]
            .iter()
            .filter(|o| self.f.eval(&o.tokens))
            .map(|o| o.prob)
            .sum()
    }

    /// Check every structural requirement of an enumerable world.
    pub fn validate(&self) -> Result<()> {
        let mut mass = 0.0;
        for t in 0..2 {
            for z in 0..2 {
                probability(&format!("p_tz[{t}][{z}]"), self.p_tz[t][z])?;
                mass += self.p_tz[t][z];
                probability(&format!("outcome_model[{t},{z}]"), self.outcome_model[t][z])?;
            }
        }
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidWorld(format!("p_tz sums to {mass}, not 1")));
        }

        let mut vocabulary = BTreeSet::new();
        let mut support = BTreeSet::new();
        for t in 0..2 {
            for z in 0..2 {
                let row = &self.text_model[t][z];
                if row.is_empty() {
                    return Err(Error::InvalidWorld(format!("text_model row \"{t},{z}\" is empty")));
                }
                let mut total = 0.0;
                for o in row {
                    probability(&format!("text_model[{t},{z}] entry"), o.prob)?;
                    if o.tokens.len() > MAX_LENGTH {
                        return Err(Error::InvalidWorld(format!(
                            "text {:?} is longer than {MAX_LENGTH} tokens",
                            o.tokens
                        )));
                    }
                    if let Some(bad) = o.tokens.iter().find(|w| crate::corpus::tokenize(w) != [w.as_str()]) {
                        return Err(Error::InvalidWorld(format!(
                            "token `{bad}` is not a single lowercase alphanumeric token"
                        )));
                    }
                    vocabulary.extend(o.tokens.iter().cloned());
                    support.insert(o.tokens.clone());
                    total += o.prob;
                }
                if (total - 1.0).abs() > MASS_TOLERANCE {
                    return Err(Error::InvalidWorld(format!(
                        "text_model row \"{t},{z}\" sums to {total}, not 1"
                    )));
                }
            }
        }
        if vocabulary.len() > MAX_DISTINCT_TOKENS {
            return Err(Error::InvalidWorld(format!(
                "text model uses {} distinct tokens; at most {MAX_DISTINCT_TOKENS} allowed",
                vocabulary.len()
            )));
        }
        if support.len() > SUPPORT_CAP {
            return Err(Error::SupportTooLarge {
                size: support.len(),
                cap: SUPPORT_CAP,
            });
        }
        for p in self.proxy_rule.probabilities() {
            probability("proxy probability", p)?;
        }
        if let ProxyRule::LexiconFile { path, .. } = &self.proxy_rule {
            return Err(Error::InvalidWorld(format!("lexicon file `{path}` was not resolved")));
        }

        // Z̃ must be a confounder-side feature: its law given (T, Z) may not
        // depend on T, otherwise adjusting for it would block treatment paths.
        for z in 0..2 {
            if self.p_z(z) == 0.0 {
                continue;
            }
            let (r0, r1) = (self.ztilde_rate(0, z), self.ztilde_rate(1, z));
            if (r0 - r1).abs() > PREMISE_TOLERANCE {
                return Err(Error::InvalidWorld(format!(
                    "feature {} depends on T given Z={z}: P(Z̃=1|T=0,Z={z}) = {r0}, P(Z̃=1|T=1,Z={z}) = {r1}",
                    self.f
                )));
            }
        }

        for zt in 0..2 {
            let joint = |t: usize| -> f64 {
                (0..2)
                    .map(|z| {
                        let r = self.ztilde_rate(t, z);
                        self.p_tz[t][z] * if zt == 1 { r } else { 1.0 - r }
                    })
                    .sum()
            };
            let (a0, a1) = (joint(0), joint(1));
            if a0 + a1 > 0.0 && (a0 <= 0.0 || a1 <= 0.0) {
                return Err(Error::Overlap(format!(
                    "stratum Z̃={zt} has P(T=1|Z̃={zt}) = {}",
                    a1 / (a0 + a1)
                )));
            }
        }
        Ok(())
    }
}

/// A single outcome of the joint distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointEntry {
    pub t: bool,
    pub z: bool,
    /// Index into [`EnumeratedWorld::texts`].
    pub w: usize,
    pub t_hat: bool,
    pub y: bool,
    pub prob: f64,
}

/// Exact joint table over `(T, Z, W, T̂, Y)`, zero-probability tuples dropped.
#[derive(Debug, Clone)]
pub struct EnumeratedWorld {
    /// Distinct token sequences in lexicographic order.
    pub texts: Vec<Vec<String>>,
    /// `Z̃ = f(W)` per text.
    pub ztilde: Vec<bool>,
    /// `P(T̂=1 | W)` per text.
    pub proxy: Vec<f64>,
    pub entries: Vec<JointEntry>,
}

impl EnumeratedWorld {
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.prob).sum()
    }

    /// Total probability of entries satisfying `pred`.
    pub fn mass(&self, pred: impl Fn(&JointEntry) -> bool) -> f64 {
        self.entries.iter().filter(|e| pred(e)).map(|e| e.prob).sum()
    }
}

pub fn enumerate_world(spec: &WorldSpec) -> Result<EnumeratedWorld> {
    enumerate_world_capped(spec, SUPPORT_CAP)
}

/// Enumerate with an explicit cap on the number of distinct texts.
pub fn enumerate_world_capped(spec: &WorldSpec, cap: usize) -> Result<EnumeratedWorld> {
    spec.validate()?;
    let support: BTreeSet<&Vec<String>> = spec.text_model.iter().flatten().flatten().map(|o| &o.tokens).collect();
    if support.len() > cap {
        return Err(Error::SupportTooLarge {
            size: support.len(),
            cap,
        });
    }
    let texts: Vec<Vec<String>> = support.into_iter().cloned().collect();
    let index: BTreeMap<&Vec<String>, usize> = texts.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let ztilde: Vec<bool> = texts.iter().map(|t| spec.f.eval(t)).collect();
    let proxy = texts
        .iter()
        .map(|t| spec.proxy_rule.probability(t))
        .collect::<Result<Vec<_>>>()?;

    let mut cells: BTreeMap<(bool, bool, usize, bool, bool), f64> = BTreeMap::new();
    for t in 0..2 {
        for z in 0..2 {
            let p_tz = spec.p_tz[t][z];
            for o in &spec.text_model[t][z] {
                let w = index[&o.tokens];
                let p_y = spec.outcome_model[t][usize::from(ztilde[w])];
                for t_hat in [false, true] {
                    let p_hat = if t_hat { proxy[w] } else { 1.0 - proxy[w] };
                    for y in [false, true] {
                        let p = p_tz * o.prob * p_hat * if y { p_y } else { 1.0 - p_y };
                        if p > 0.0 {
                            *cells.entry((t == 1, z == 1, w, t_hat, y)).or_default() += p;
                        }
                    }
                }
            }
        }
    }
    let entries = cells
        .into_iter()
        .map(|((t, z, w, t_hat, y), prob)| JointEntry {
            t,
            z,
            w,
            t_hat,
            y,
            prob,
        })
        .collect();
    Ok(EnumeratedWorld {
        texts,
        ztilde,
        proxy,
        entries,
    })
}

/// Draw `n` documents i.i.d. from the world.
pub fn sample_world(spec: &WorldSpec, n: usize, seed: u64) -> Result<Vec<Document>> {
    let world = enumerate_world(spec)?;
    let mut cdf = Vec::with_capacity(world.entries.len());
    let mut acc = 0.0;
    for e in &world.entries {
        acc += e.prob;
        cdf.push(acc);
    }
    let mut rng = rng::stream(seed, &[purpose::SAMPLE]);
    let width = n.max(1).to_string().len();
    Ok((0..n)
        .map(|i| {
            let u = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(world.entries.len() - 1);
            let e = world.entries[k];
            let covariate = match spec.covariate {
                CovariateRule::Constant => 0,
                CovariateRule::Z => usize::from(e.z),
                CovariateRule::Ztilde => usize::from(world.ztilde[e.w]),
            };
            let mut d = Document::new(format!("w{i:0width$}"), world.texts[e.w].join(" "), covariate);
            d.treatment_true = Some(e.t);
            d.proxy = Some(e.t_hat);
            d.outcome = Some(e.y);
            d.latent = Some(e.z);
            d
        })
        .collect())
}

/// Two tokens: a confounder marker `gift` and a sentiment word `good` read
/// by a deterministic proxy.
pub fn two_token_world() -> WorldSpec {
    let row = |p_gift: f64, p_good: f64| {
        vec![
            TextOption::new(&["gift", "good"], p_gift * p_good),
            TextOption::new(&["gift"], p_gift * (1.0 - p_good)),
            TextOption::new(&["good"], (1.0 - p_gift) * p_good),
            TextOption::new(&[], (1.0 - p_gift) * (1.0 - p_good)),
        ]
    };
    WorldSpec {
        name: "two-token".into(),
        p_tz: [[0.3, 0.2], [0.1, 0.4]],
        text_model: [[row(0.2, 0.1), row(0.7, 0.1)], [row(0.2, 0.8), row(0.7, 0.8)]],
        proxy_rule: ProxyRule::Lexicon {
            words: vec!["good".into()],
            p_hit: 1.0,
            p_miss: 0.0,
        },
        outcome_model: [[0.2, 0.5], [0.4, 0.8]],
        f: Feature::ContainsToken("gift".into()),
        covariate: CovariateRule::Ztilde,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_matches_hand_enumeration() {
        let spec = two_token_world();
        let world = enumerate_world(&spec).unwrap();
        assert!((world.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(world.texts.len(), 4);
        // P(T=1, Z=1, W="gift good", T̂=1, Y=1) = 0.4 · 0.7·0.8 · 1 · 0.8
        let w = world.texts.iter().position(|t| t == &["gift", "good"]).unwrap();
        let p = world.mass(|e| e.t && e.z && e.w == w && e.t_hat && e.y);
        assert!((p - 0.4 * 0.56 * 0.8).abs() < 1e-15);
        // P(T̂=1) = Σ_t,z P(t,z) · P(good | t)
        let p_hat = world.mass(|e| e.t_hat);
        assert!((p_hat - (0.5 * 0.1 + 0.5 * 0.8)).abs() < 1e-15);
    }

    #[test]
    fn deterministic_world_has_two_entries_per_writer_cell() {
        let mut spec = two_token_world();
        spec.text_model = [
            [
                vec![TextOption::new(&["a"], 1.0)],
                vec![TextOption::new(&["gift", "a"], 1.0)],
            ],
            [
                vec![TextOption::new(&["good"], 1.0)],
                vec![TextOption::new(&["gift", "good"], 1.0)],
            ],
        ];
        let world = enumerate_world(&spec).unwrap();
        assert_eq!(world.entries.len(), 4 * 2);
    }

    #[test]
    fn json_round_trip() {
        let spec = two_token_world();
        let json = spec.to_json().unwrap();
        let back = WorldSpec::parse(&json, None).unwrap();
        assert_eq!(back, spec);
        assert!(json.contains("\"contains-token:gift\""));
        assert!(json.contains("\"1,0\""));
    }

    #[test]
    fn lexicon_file_resolves_relative_to_world() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("lex.txt"), "# words\ngood\n").unwrap();
        let mut value = serde_json::to_value(two_token_world()).unwrap();
        value["proxy_rule"] = serde_json::json!({"kind": "lexicon_file", "path": "lex.txt"});
        value["name"] = serde_json::json!("");
        let path = dir.path().join("file-world.json");
        std::fs::write(&path, value.to_string()).unwrap();
        let spec = WorldSpec::read(&path).unwrap();
        assert_eq!(spec.name, "file-world");
        assert_eq!(spec.proxy_rule, two_token_world().proxy_rule);
    }

    #[test]
    fn validation_rejects_broken_worlds() {
        let mut spec = two_token_world();
        spec.p_tz[0][0] = 0.5;
        assert!(matches!(spec.validate(), Err(Error::InvalidWorld(_))));

        let mut spec = two_token_world();
        spec.text_model[1][1][0].prob += 0.1;
        assert!(spec.validate().is_err());

        let mut spec = two_token_world();
        spec.f = Feature::ContainsToken("good".into());
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("depends on T"), "{err}");

        let mut spec = two_token_world();
        spec.p_tz = [[0.5, 0.0], [0.0, 0.5]];
        spec.text_model[0][0] = vec![TextOption::new(&["good"], 1.0)];
        spec.text_model[0][1] = vec![TextOption::new(&["gift"], 1.0)];
        spec.text_model[1][0] = vec![TextOption::new(&["good"], 1.0)];
        spec.text_model[1][1] = vec![TextOption::new(&["gift"], 1.0)];
        let err = spec.validate().unwrap_err();
        assert!(matches!(err, Error::Overlap(_)), "{err}");
    }

    #[test]
    fn missing_row_is_a_parse_error() {
        let mut value = serde_json::to_value(two_token_world()).unwrap();
        value["text_model"].as_object_mut().unwrap().remove("1,1");
        let err = WorldSpec::parse(&value.to_string(), None).unwrap_err().to_string();
        assert!(err.contains("\"1,1\""), "{err}");
    }

    #[test]
    fn cap_is_enforced() {
        let spec = two_token_world();
        assert!(matches!(
            enumerate_world_capped(&spec, 3),
            Err(Error::SupportTooLarge { size: 4, cap: 3 })
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_concentrated() {
        let spec = two_token_world();
        assert!(sample_world(&spec, 0, 1).unwrap().is_empty());
        let a = sample_world(&spec, 10_000, 5).unwrap();
        assert_eq!(a, sample_world(&spec, 10_000, 5).unwrap());
        let rate = a.iter().filter(|d| d.treatment_true == Some(true)).count() as f64 / 1e4;
        let sd = (0.25f64 / 1e4).sqrt();
        assert!((rate - spec.p_t(1)).abs() < 3.0 * sd);
    }

    #[test]
    fn sampled_frequencies_match_enumeration() {
        let spec = two_token_world();
        let world = enumerate_world(&spec).unwrap();
        let n = 100_000;
        let docs = sample_world(&spec, n, 9).unwrap();
        let checks: [(&str, Box<dyn Fn(&JointEntry) -> bool>, Box<dyn Fn(&Document) -> bool>); 4] = [
            ("T̂", Box::new(|e| e.t_hat), Box::new(|d| d.proxy == Some(true))),
            ("Y", Box::new(|e| e.y), Box::new(|d| d.outcome == Some(true))),
            ("Z", Box::new(|e| e.z), Box::new(|d| d.latent == Some(true))),
            ("Z̃", Box::new(|e| world.ztilde[e.w]), Box::new(|d| d.covariate == 1)),
        ];
        for (name, exact, observed) in checks {
            let p = world.mass(exact);
            let rate = docs.iter().filter(|d| observed(d)).count() as f64 / n as f64;
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((rate - p).abs() < 3.0 * sd, "{name}: {rate} vs {p}");
        }
    }
}
