//! Text data model.
//!
//! A [`Document`] carries the text `W`, the observed covariate `C`, and the
//! optional treatment labels: the true treatment `T` (known only in simulated
//! data), the proxy `T̂` and the boosted proxy `T̂*`, plus the binary outcome
//! `Y`. Corpora are stored as JSON Lines.

mod matching;
mod text;

pub use matching::{match_pairs, read_scores, threshold_proxy_scores, MatchedPair};
pub use text::{
    build_vocabulary, cosine_similarity, featurize, featurize_tokens, lexicon_proxy, tokenize, DocumentFrequency,
    FeatureScheme, FeatureVector, Lexicon, Vocabulary,
};

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One text unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DocumentRecord", into = "DocumentRecord")]
pub struct Document {
    pub id: String,
    text: String,
    tokens: Vec<String>,
    /// Category index of the observed covariate `C`.
    pub covariate: usize,
    /// True treatment `T` (equal to the reader's perception `T̃`).
    pub treatment_true: Option<bool>,
    /// Proxy treatment `T̂`.
    pub proxy: Option<bool>,
    /// Boosted proxy `T̂*`.
    pub proxy_boosted: Option<bool>,
    pub outcome: Option<bool>,
    /// Externally supplied representation `b(W)`.
    pub embedding: Option<Vec<f64>>,
    /// Latent confounding property of the text. Never read by estimators;
    /// only the outcome simulator and the oracle use it.
    pub latent: Option<bool>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, covariate: usize) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Self {
            id: id.into(),
            text,
            tokens,
            covariate,
            treatment_true: None,
            proxy: None,
            proxy_boosted: None,
            outcome: None,
            embedding: None,
            latent: None,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn set_text(&mut self, text: impl Into<String>) {
        self.text = text.into();
        self.tokens = tokenize(&self.text);
    }

    pub fn treatment(&self, field: TreatmentField) -> Option<bool> {
        match field {
            TreatmentField::True => self.treatment_true,
            TreatmentField::Proxy => self.proxy,
            TreatmentField::Boosted => self.proxy_boosted,
        }
    }

    pub fn set_treatment(&mut self, field: TreatmentField, value: Option<bool>) {
        match field {
            TreatmentField::True => self.treatment_true = value,
            TreatmentField::Proxy => self.proxy = value,
            TreatmentField::Boosted => self.proxy_boosted = value,
        }
    }

    pub fn require_treatment(&self, field: TreatmentField) -> Result<bool> {
        self.treatment(field).ok_or_else(|| Error::MissingField {
            id: self.id.clone(),
            field: field.key(),
        })
    }

    pub fn require_outcome(&self) -> Result<bool> {
        self.outcome.ok_or_else(|| Error::MissingField {
            id: self.id.clone(),
            field: "y",
        })
    }
}

/// Which treatment label an estimator reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentField {
    /// `T` itself; only available on simulated data.
    True,
    /// The proxy `T̂`.
    Proxy,
    /// The boosted proxy `T̂*`.
    Boosted,
}

impl TreatmentField {
    /// Corpus-file key holding this label.
    pub fn key(self) -> &'static str {
        match self {
            TreatmentField::True => "t_true",
            TreatmentField::Proxy => "t_proxy",
            TreatmentField::Boosted => "t_boosted",
        }
    }
}

impl fmt::Display for TreatmentField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TreatmentField::True => "true",
            TreatmentField::Proxy => "proxy",
            TreatmentField::Boosted => "boosted",
        };
        f.write_str(s)
    }
}

impl FromStr for TreatmentField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true" | "t_true" | "oracle" => Ok(TreatmentField::True),
            "proxy" | "t_proxy" => Ok(TreatmentField::Proxy),
            "boosted" | "t_boosted" => Ok(TreatmentField::Boosted),
            other => Err(Error::Parse(format!("unknown treatment field `{other}`"))),
        }
    }
}

/// On-disk form of a document (one JSON Lines object).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DocumentRecord {
    id: String,
    text: String,
    c: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_true: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_proxy: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_boosted: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z: Option<u8>,
}

fn binary(id: &str, key: &str, value: Option<u8>) -> std::result::Result<Option<bool>, String> {
    match value {
        None => Ok(None),
        Some(0) => Ok(Some(false)),
        Some(1) => Ok(Some(true)),
        Some(v) => Err(format!("document {id}: `{key}` must be 0 or 1, got {v}")),
    }
}

impl TryFrom<DocumentRecord> for Document {
    type Error = String;

    fn try_from(r: DocumentRecord) -> std::result::Result<Self, String> {
        if let Some(e) = &r.embedding {
            if e.iter().any(|v| !v.is_finite()) {
                return Err(format!("document {}: embedding has non-finite values", r.id));
            }
        }
        let mut doc = Document::new(r.id.clone(), r.text, r.c);
        doc.treatment_true = binary(&r.id, "t_true", r.t_true)?;
        doc.proxy = binary(&r.id, "t_proxy", r.t_proxy)?;
        doc.proxy_boosted = binary(&r.id, "t_boosted", r.t_boosted)?;
        doc.outcome = binary(&r.id, "y", r.y)?;
        doc.latent = binary(&r.id, "z", r.z)?;
        doc.embedding = r.embedding;
        Ok(doc)
    }
}

impl From<Document> for DocumentRecord {
    fn from(d: Document) -> Self {
        let bit = |v: Option<bool>| v.map(u8::from);
        DocumentRecord {
            id: d.id,
            text: d.text,
            c: d.covariate,
            t_true: bit(d.treatment_true),
            t_proxy: bit(d.proxy),
            t_boosted: bit(d.proxy_boosted),
            y: bit(d.outcome),
            embedding: d.embedding,
            z: bit(d.latent),
        }
    }
}

/// Reject corpora with repeated ids.
pub fn check_unique_ids(docs: &[Document]) -> Result<()> {
    let mut seen = HashSet::with_capacity(docs.len());
    for d in docs {
        if !seen.insert(d.id.as_str()) {
            return Err(Error::DuplicateId(d.id.clone()));
        }
    }
    Ok(())
}

/// Parse a JSON Lines corpus. Blank lines are skipped.
pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("corpus line {}: {e}", lineno + 1)))?;
        docs.push(doc);
    }
    check_unique_ids(&docs)?;
    Ok(docs)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    parse_corpus(BufReader::new(File::open(path)?))
}

pub fn write_corpus_to(mut writer: impl Write, docs: &[Document]) -> Result<()> {
    for d in docs {
        serde_json::to_writer(&mut writer, d)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    write_corpus_to(BufWriter::new(File::create(path)?), docs)
}

/// Number of covariate levels, i.e. one past the largest index present.
pub fn covariate_arity(docs: &[Document]) -> usize {
    docs.iter().map(|d| d.covariate + 1).max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trip_preserves_fields() {
        let line = r#"{"id":"a","text":"Great CD!","c":1,"t_true":1,"t_proxy":0,"y":1,"embedding":[0.5,-1.0]}"#;
        let docs = parse_corpus(line.as_bytes()).unwrap();
        let d = &docs[0];
        assert_eq!(d.tokens(), ["great", "cd"]);
        assert_eq!(d.covariate, 1);
        assert_eq!(d.treatment_true, Some(true));
        assert_eq!(d.proxy, Some(false));
        assert_eq!(d.proxy_boosted, None);
        assert_eq!(d.embedding.as_deref(), Some(&[0.5, -1.0][..]));

        let mut out = Vec::new();
        write_corpus_to(&mut out, &docs).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().trim_end(), line);
    }

    #[test]
    fn non_binary_labels_are_rejected() {
        let line = r#"{"id":"a","text":"x","c":0,"y":2}"#;
        let err = parse_corpus(line.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("must be 0 or 1"), "{err}");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let lines = "{\"id\":\"a\",\"text\":\"x\",\"c\":0}\n{\"id\":\"a\",\"text\":\"y\",\"c\":0}\n";
        assert!(matches!(parse_corpus(lines.as_bytes()), Err(Error::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn set_text_keeps_tokens_in_sync() {
        let mut d = Document::new("a", "one", 0);
        d.set_text("Two THREE");
        assert_eq!(d.tokens(), tokenize(d.text()).as_slice());
    }
}
