use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Document;
use crate::error::{Error, Result};

/// Lowercase, then split on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Ordered term list with a reverse index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!("vocabulary term `{t}` appears twice")));
            }
        }
        Ok(Self { terms, index })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(terms: Vec<String>) -> Result<Self> {
        Self::from_terms(terms)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.terms
    }
}

/// The `max_size` most frequent tokens; ties go to the lexicographically
/// smaller term.
pub fn build_vocabulary(docs: &[Document], max_size: usize) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    if max_size == 0 {
        return Err(Error::InvalidParameter("vocabulary size must be positive".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for d in docs {
        for t in d.tokens() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Empty("corpus has no tokens"));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);
    Vocabulary::from_terms(ranked.into_iter().map(|(t, _)| t.to_owned()).collect())
}

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidParameter(
                "feature indices and values differ in length".into(),
            ));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "feature indices must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("feature values must be finite".into()));
        }
        Ok(Self { indices, values })
    }

    /// Build from a map, dropping explicit zeros.
    fn from_map(map: BTreeMap<usize, f64>) -> Self {
        let (indices, values) = map.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        Self { indices, values }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Dot product with a dense vector; indices past its end contribute nothing.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().filter_map(|(i, v)| dense.get(i).map(|w| w * v)).sum()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; zero vectors have similarity 0 with everything.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        a.dot(b) / denom
    }
}

/// Per-term document frequencies over a corpus.
#[derive(Debug, Clone)]
pub struct DocumentFrequency {
    pub n_docs: usize,
    pub df: Vec<usize>,
}

impl DocumentFrequency {
    pub fn from_corpus(docs: &[Document], vocab: &Vocabulary) -> Self {
        let mut df = vec![0usize; vocab.len()];
        for d in docs {
            let present: BTreeSet<usize> = d.tokens().iter().filter_map(|t| vocab.get(t)).collect();
            for i in present {
                df[i] += 1;
            }
        }
        Self { n_docs: docs.len(), df }
    }

    /// `ln(N / df)`, or `None` for terms no document contains.
    pub fn idf(&self, index: usize) -> Option<f64> {
        match self.df.get(index) {
            Some(&df) if df > 0 => Some((self.n_docs as f64 / df as f64).ln()),
            _ => None,
        }
    }
}

/// Featurization scheme.
#[derive(Debug, Clone, Copy)]
pub enum FeatureScheme<'a> {
    /// Raw term counts.
    Counts,
    /// 1 for every vocabulary term present.
    Presence,
    /// Count times `ln(N/df)`.
    TfIdf(&'a DocumentFrequency),
}

pub fn featurize_tokens(tokens: &[String], vocab: &Vocabulary, scheme: FeatureScheme) -> FeatureVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.get(t) {
            *counts.entry(i).or_default() += 1.0;
        }
    }
    match scheme {
        FeatureScheme::Counts => FeatureVector::from_map(counts),
        FeatureScheme::Presence => FeatureVector::from_map(counts.into_iter().map(|(i, _)| (i, 1.0)).collect()),
        FeatureScheme::TfIdf(stats) => FeatureVector::from_map(
            counts
                .into_iter()
                .filter_map(|(i, c)| stats.idf(i).map(|idf| (i, c * idf)))
                .collect(),
        ),
    }
}

/// Featurize a document; out-of-vocabulary tokens are ignored.
pub fn featurize(doc: &Document, vocab: &Vocabulary, scheme: FeatureScheme) -> FeatureVector {
    featurize_tokens(doc.tokens(), vocab, scheme)
}

/// A set of lowercase words.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    words: BTreeSet<String>,
}

impl Lexicon {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    /// Parse the one-word-per-line format; text after `#` is a comment.
    pub fn parse(contents: &str) -> Self {
        Self::new(contents.lines().map(|l| l.split('#').next().unwrap_or("").trim()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for w in &self.words {
            out.push_str(w);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn words(&self) -> &BTreeSet<String> {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn insert(&mut self, word: &str) {
        let w = word.trim().to_lowercase();
        if !w.is_empty() {
            self.words.insert(w);
        }
    }
}

/// 1 iff any token of the document is in the lexicon.
pub fn lexicon_proxy(doc: &Document, lexicon: &Lexicon) -> bool {
    doc.tokens().iter().any(|t| lexicon.contains(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(texts: &[&str]) -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("d{i}"), *t, 0))
            .collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Great CD!"), ["great", "cd"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("mp3-player 2x"), ["mp3", "player", "2x"]);
        assert!(tokenize(" ,;-- ").is_empty());
    }

    #[test]
    fn vocabulary_frequency_then_lexicographic() {
        let v = build_vocabulary(&docs(&["a b", "a c"]), 2).unwrap();
        assert_eq!(v.terms(), ["a", "b"]);
        let v = build_vocabulary(&docs(&["x"]), 10).unwrap();
        assert_eq!(v.terms(), ["x"]);
        // counts a:5, b:3, c:1
        let v = build_vocabulary(&docs(&["a a b c", "a b a", "b a"]), 2).unwrap();
        assert_eq!(v.terms(), ["a", "b"]);
        assert_eq!(v.get("b"), Some(1));
        assert_eq!(v.get("c"), None);
    }

    #[test]
    fn vocabulary_errors() {
        assert!(matches!(build_vocabulary(&[], 3), Err(Error::Empty(_))));
        assert!(matches!(build_vocabulary(&docs(&["", "!!"]), 3), Err(Error::Empty(_))));
        assert!(Vocabulary::from_terms(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn featurize_counts_and_oov() {
        let vocab = Vocabulary::from_terms(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let d = Document::new("x", "a a b zzz", 0);
        let f = featurize(&d, &vocab, FeatureScheme::Counts);
        assert_eq!(f.indices(), [0, 1]);
        assert_eq!(f.values(), [2.0, 1.0]);
        let p = featurize(&d, &vocab, FeatureScheme::Presence);
        assert_eq!(p.values(), [1.0, 1.0]);
        let oov = featurize(&Document::new("y", "zzz", 0), &vocab, FeatureScheme::Counts);
        assert_eq!(oov.nnz(), 0);
    }

    #[test]
    fn featurize_tfidf_closed_form() {
        let corpus = docs(&["a", "a b", "b", "c"]);
        let vocab = Vocabulary::from_terms(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let stats = DocumentFrequency::from_corpus(&corpus, &vocab);
        assert_eq!(stats.df, [2, 2, 1]);
        let f = featurize(&corpus[0], &vocab, FeatureScheme::TfIdf(&stats));
        assert_eq!(f.indices(), [0]);
        assert!((f.values()[0] - 2f64.ln()).abs() < 1e-15);
        assert!((f.values()[0] - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn tfidf_of_term_in_every_document_is_zero() {
        let corpus = docs(&["a b", "a"]);
        let vocab = build_vocabulary(&corpus, 10).unwrap();
        let stats = DocumentFrequency::from_corpus(&corpus, &vocab);
        let f = featurize(&corpus[0], &vocab, FeatureScheme::TfIdf(&stats));
        assert_eq!(f.indices(), [vocab.get("b").unwrap()]);
    }

    #[test]
    fn feature_vector_validation() {
        assert!(FeatureVector::new(vec![1, 1], vec![1.0, 2.0]).is_err());
        assert!(FeatureVector::new(vec![2, 1], vec![1.0, 2.0]).is_err());
        assert!(FeatureVector::new(vec![0], vec![f64::NAN]).is_err());
        assert!(FeatureVector::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn cosine_edge_cases() {
        let a = FeatureVector::new(vec![0, 2], vec![1.0, 2.0]).unwrap();
        let b = FeatureVector::new(vec![1, 3], vec![5.0, 1.0]).unwrap();
        assert!((cosine_similarity(&a, &a) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&a, &b), 0.0);
        assert_eq!(cosine_similarity(&a, &FeatureVector::default()), 0.0);
    }

    #[test]
    fn lexicon_proxy_examples() {
        let lex = Lexicon::new(["great", "Good"]);
        assert!(lex.contains("good"));
        assert!(lexicon_proxy(&Document::new("a", "great cd", 0), &lex));
        assert!(!lexicon_proxy(&Document::new("b", "bad cd", 0), &lex));
        assert!(!lexicon_proxy(&Document::new("c", "great cd", 0), &Lexicon::default()));
    }

    #[test]
    fn lexicon_file_format() {
        let lex = Lexicon::parse("# positive words\ngreat\n\nGood  # trailing comment\n  \n");
        assert_eq!(lex.words().iter().collect::<Vec<_>>(), ["good", "great"]);
    }

    proptest! {
        #[test]
        fn tokenize_join_is_idempotent(text in "\\PC{0,60}") {
            let tokens = tokenize(&text);
            prop_assert_eq!(tokenize(&tokens.join(" ")), tokens);
        }

        #[test]
        fn counts_scale_with_multiplicity(words in prop::collection::vec("[a-e]{1,2}", 1..20)) {
            let text = words.join(" ");
            let doubled = format!("{text} {text}");
            let corpus = vec![Document::new("x", text.clone(), 0)];
            let vocab = build_vocabulary(&corpus, 1000).unwrap();
            let once = featurize(&corpus[0], &vocab, FeatureScheme::Counts);
            let twice = featurize(&Document::new("y", doubled, 0), &vocab, FeatureScheme::Counts);
            prop_assert_eq!(once.indices(), twice.indices());
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert_eq!(2.0 * a, *b);
            }
        }

        #[test]
        fn lexicon_proxy_is_monotone(
            words in prop::collection::vec("[a-f]", 0..8),
            lex in prop::collection::vec("[a-f]", 0..4),
            extra in prop::collection::vec("[a-f]", 0..4),
        ) {
            let doc = Document::new("d", words.join(" "), 0);
            let small = Lexicon::new(&lex);
            let big = Lexicon::new(lex.iter().chain(extra.iter()));
            prop_assert!(!lexicon_proxy(&doc, &small) || lexicon_proxy(&doc, &big));
        }
    }
}
