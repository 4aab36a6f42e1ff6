//! Externally produced document embeddings.
//!
//! File format: a `dim=<d>` header line, then one `<id> <v1> ... <vd>` line per
//! document. Every corpus id must appear exactly once and all values must be
//! finite.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    /// Vectors in file order.
    pub vectors: Vec<(String, Vec<f64>)>,
}

impl EmbeddingFile {
    pub fn parse(contents: &str) -> Result<Self> {
        let mut lines = contents.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("embedding file is empty".into()))?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.trim().parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Parse(format!("expected a `dim=<d>` header, found `{header}`")))?;
        let mut seen = HashSet::new();
        let mut vectors = Vec::new();
        for (lineno, line) in lines {
            let mut fields = line.split_whitespace();
            let id = fields.next().expect("non-blank line has a field").to_string();
            let values = fields
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::Parse(format!("line {}: `{v}` is not a finite number", lineno + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    id,
                    expected: dim,
                    found: values.len(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            vectors.push((id, values));
        }
        Ok(Self { dim, vectors })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn render(&self) -> String {
        let mut out = format!("dim={}\n", self.dim);
        for (id, v) in &self.vectors {
            out.push_str(id);
            for x in v {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
        out
    }

    /// Check coverage against a corpus: every document id present, no
    /// unknown ids.
    pub fn validate_against(&self, docs: &[Document]) -> Result<()> {
        let ids: HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
        if let Some((id, _)) = self.vectors.iter().find(|(id, _)| !ids.contains(id.as_str())) {
            return Err(Error::Parse(format!("embedding for unknown document `{id}`")));
        }
        let have: HashSet<&str> = self.vectors.iter().map(|(id, _)| id.as_str()).collect();
        if let Some(d) = docs.iter().find(|d| !have.contains(d.id.as_str())) {
            return Err(Error::MissingField {
                id: d.id.clone(),
                field: "embedding",
            });
        }
        Ok(())
    }

    /// Validate, then store each vector on its document.
    pub fn attach(&self, docs: &mut [Document]) -> Result<()> {
        self.validate_against(docs)?;
        let by_id: BTreeMap<&str, &Vec<f64>> = self.vectors.iter().map(|(id, v)| (id.as_str(), v)).collect();
        for d in docs.iter_mut() {
            d.embedding = Some(by_id[d.id.as_str()].clone());
        }
        Ok(())
    }
}
