use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::text::{build_vocabulary, cosine_similarity, featurize, DocumentFrequency, FeatureScheme};
use super::Document;
use crate::error::{Error, Result};

/// A `Y=1` document and its most similar `Y=0` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub treated: String,
    pub control: String,
    pub similarity: f64,
}

/// Pair each `Y=1` document with the `Y=0` document of highest TF-IDF cosine
/// similarity (smaller id on ties). Controls may be reused. Output is sorted by
/// descending similarity, then by the `Y=1` id, so the `k` most similar pairs
/// are a prefix.
pub fn match_pairs(docs: &[Document]) -> Result<Vec<MatchedPair>> {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        if d.require_outcome()? {
            positives.push(i);
        } else {
            negatives.push(i);
        }
    }
    if positives.is_empty() {
        return Err(Error::Empty("no documents with y=1"));
    }
    if negatives.is_empty() {
        return Err(Error::Empty("no documents with y=0"));
    }
    negatives.sort_by(|&a, &b| docs[a].id.cmp(&docs[b].id));

    let vocab = build_vocabulary(docs, usize::MAX)?;
    let stats = DocumentFrequency::from_corpus(docs, &vocab);
    let vectors: Vec<_> = docs
        .iter()
        .map(|d| featurize(d, &vocab, FeatureScheme::TfIdf(&stats)))
        .collect();

    let mut pairs: Vec<MatchedPair> = positives
        .par_iter()
        .map(|&p| {
            let mut best = negatives[0];
            let mut best_sim = cosine_similarity(&vectors[p], &vectors[best]);
            for &n in &negatives[1..] {
                let sim = cosine_similarity(&vectors[p], &vectors[n]);
                if sim > best_sim {
                    best = n;
                    best_sim = sim;
                }
            }
            MatchedPair {
                treated: docs[p].id.clone(),
                control: docs[best].id.clone(),
                similarity: best_sim,
            }
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.treated.cmp(&b.treated))
    });
    Ok(pairs)
}

/// Label the top `quantile` fraction of scores 1 and the bottom fraction 0;
/// everything in between maps to `None`. Ranks are by score, ties by id.
pub fn threshold_proxy_scores(scores: &BTreeMap<String, f64>, quantile: f64) -> Result<BTreeMap<String, Option<bool>>> {
    if scores.is_empty() {
        return Err(Error::Empty("proxy scores"));
    }
    if !(quantile > 0.0 && quantile <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "quantile must lie in (0, 0.5], got {quantile}"
        )));
    }
    if let Some((id, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::InvalidParameter(format!("score for `{id}` is {s}")));
    }
    let mut ranked: Vec<(&String, f64)> = scores.iter().map(|(k, v)| (k, *v)).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let n = ranked.len();
    let k = (quantile * n as f64).floor() as usize;
    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(rank, (id, _))| {
            let label = if rank < k {
                Some(false)
            } else if rank >= n - k {
                Some(true)
            } else {
                None
            };
            (id.clone(), label)
        })
        .collect())
}

#[derive(Deserialize)]
struct ScoreRow {
    id: String,
    score: f64,
}

/// Read an `id,score` CSV.
pub fn read_scores(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut scores = BTreeMap::new();
    for row in reader.deserialize() {
        let row: ScoreRow = row?;
        if scores.insert(row.id.clone(), row.score).is_some() {
            return Err(Error::DuplicateId(row.id));
        }
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn doc(id: &str, text: &str, y: bool) -> Document {
        let mut d = Document::new(id, text, 0);
        d.outcome = Some(y);
        d
    }

    /// Dense TF-IDF with hash maps, independent of the sparse featurizer.
    fn brute_force_similarity(docs: &[Document]) -> HashMap<(String, String), f64> {
        let n = docs.len() as f64;
        let mut df: HashMap<&str, f64> = HashMap::new();
        for d in docs {
            let mut seen: Vec<&str> = d.tokens().iter().map(String::as_str).collect();
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1.0;
            }
        }
        let vecs: Vec<HashMap<&str, f64>> = docs
            .iter()
            .map(|d| {
                let mut v: HashMap<&str, f64> = HashMap::new();
                for t in d.tokens() {
                    *v.entry(t.as_str()).or_default() += (n / df[t.as_str()]).ln();
                }
                v
            })
            .collect();
        let mut out = HashMap::new();
        for (i, a) in docs.iter().enumerate() {
            for (j, b) in docs.iter().enumerate() {
                let dot: f64 = vecs[i]
                    .iter()
                    .map(|(t, x)| x * vecs[j].get(t).copied().unwrap_or(0.0))
                    .sum();
                let na = vecs[i].values().map(|x| x * x).sum::<f64>().sqrt();
                let nb = vecs[j].values().map(|x| x * x).sum::<f64>().sqrt();
                let sim = if na * nb == 0.0 { 0.0 } else { dot / (na * nb) };
                out.insert((a.id.clone(), b.id.clone()), sim);
            }
        }
        out
    }

    fn brute_force_pairs(docs: &[Document]) -> Vec<(String, String, f64)> {
        let table = brute_force_similarity(docs);
        let mut controls: Vec<&Document> = docs.iter().filter(|d| d.outcome == Some(false)).collect();
        controls.sort_by(|a, b| a.id.cmp(&b.id));
        let mut out: Vec<(String, String, f64)> = docs
            .iter()
            .filter(|d| d.outcome == Some(true))
            .map(|p| {
                let mut best = (controls[0].id.clone(), table[&(p.id.clone(), controls[0].id.clone())]);
                for c in &controls[1..] {
                    let s = table[&(p.id.clone(), c.id.clone())];
                    if s > best.1 + 1e-12 {
                        best = (c.id.clone(), s);
                    }
                }
                (p.id.clone(), best.0, best.1)
            })
            .collect();
        out.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
        out
    }

    #[test]
    fn identical_texts_pair_with_similarity_one() {
        let docs = vec![
            doc("p", "loan payment late", true),
            doc("n1", "loan payment late", false),
            doc("n2", "checking account fee", false),
        ];
        let pairs = match_pairs(&docs).unwrap();
        assert_eq!(pairs[0].control, "n1");
        assert!((pairs[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vocabularies_have_zero_similarity() {
        let docs = vec![doc("p", "alpha beta", true), doc("n", "gamma delta", false)];
        let pairs = match_pairs(&docs).unwrap();
        assert_eq!(pairs[0].similarity, 0.0);
        assert_eq!(pairs[0].control, "n");
    }

    #[test]
    fn toy_corpus_matches_exhaustive_table() {
        let docs = vec![
            doc("p1", "mortgage escrow payment", true),
            doc("p2", "bank overdraft fee fee", true),
            doc("p3", "credit report error dispute", true),
            doc("n1", "overdraft fee refund", false),
            doc("n2", "escrow payment mortgage late", false),
            doc("n3", "report dispute ignored", false),
        ];
        let pairs = match_pairs(&docs).unwrap();
        let expected = brute_force_pairs(&docs);
        assert_eq!(pairs.len(), 3);
        for (got, want) in pairs.iter().zip(&expected) {
            assert_eq!(got.treated, want.0);
            assert_eq!(got.control, want.1);
            assert!((got.similarity - want.2).abs() < 1e-12);
        }
        let by_treated: HashMap<_, _> = pairs.iter().map(|p| (p.treated.as_str(), p.control.as_str())).collect();
        assert_eq!(by_treated["p1"], "n2");
        assert_eq!(by_treated["p2"], "n1");
        assert_eq!(by_treated["p3"], "n3");
    }

    #[test]
    fn ties_prefer_smaller_control_id() {
        let docs = vec![
            doc("p", "same words", true),
            doc("nb", "same words", false),
            doc("na", "same words", false),
        ];
        assert_eq!(match_pairs(&docs).unwrap()[0].control, "na");
    }

    #[test]
    fn empty_class_is_an_error() {
        assert!(match_pairs(&[doc("a", "x", true)]).is_err());
        assert!(match_pairs(&[doc("a", "x", false)]).is_err());
        assert!(match_pairs(&[Document::new("a", "x", 0)]).is_err());
    }

    #[test]
    fn threshold_two_point_split() {
        let scores: BTreeMap<String, f64> = [("a".to_string(), 0.9), ("b".to_string(), 0.1)].into();
        let labels = threshold_proxy_scores(&scores, 0.5).unwrap();
        assert_eq!(labels["a"], Some(true));
        assert_eq!(labels["b"], Some(false));
    }

    #[test]
    fn threshold_quartiles_of_eight() {
        let scores: BTreeMap<String, f64> = (0..8).map(|i| (format!("s{i}"), i as f64)).collect();
        let labels = threshold_proxy_scores(&scores, 0.25).unwrap();
        let ones: Vec<_> = labels
            .iter()
            .filter(|(_, l)| **l == Some(true))
            .map(|(k, _)| k.as_str())
            .collect();
        let zeros: Vec<_> = labels
            .iter()
            .filter(|(_, l)| **l == Some(false))
            .map(|(k, _)| k.as_str())
            .collect();
        assert_eq!(ones, ["s6", "s7"]);
        assert_eq!(zeros, ["s0", "s1"]);
        assert_eq!(labels.values().filter(|l| l.is_none()).count(), 4);
    }

    #[test]
    fn threshold_equal_scores_split_by_id() {
        let scores: BTreeMap<String, f64> = ["d", "a", "c", "b"].iter().map(|k| (k.to_string(), 1.0)).collect();
        let labels = threshold_proxy_scores(&scores, 0.25).unwrap();
        assert_eq!(labels["a"], Some(false));
        assert_eq!(labels["d"], Some(true));
        assert_eq!(labels["b"], None);
    }

    #[test]
    fn threshold_errors() {
        assert!(threshold_proxy_scores(&BTreeMap::new(), 0.25).is_err());
        let scores: BTreeMap<String, f64> = [("a".to_string(), 1.0)].into();
        assert!(threshold_proxy_scores(&scores, 0.0).is_err());
        assert!(threshold_proxy_scores(&scores, 0.6).is_err());
    }

    #[test]
    fn reads_score_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        std::fs::write(&path, "id,score\na,0.25\nb,-1.5\n").unwrap();
        let scores = read_scores(&path).unwrap();
        assert_eq!(scores["a"], 0.25);
        assert_eq!(scores["b"], -1.5);
    }

    proptest! {
        #[test]
        fn threshold_label_counts(values in prop::collection::vec(-5.0f64..5.0, 1..60), q in 0.01f64..0.5) {
            let scores: BTreeMap<String, f64> = values.iter().enumerate().map(|(i, v)| (format!("{i:03}"), *v)).collect();
            let labels = threshold_proxy_scores(&scores, q).unwrap();
            let k = (q * values.len() as f64).floor() as usize;
            prop_assert_eq!(labels.values().filter(|l| **l == Some(true)).count(), k);
            prop_assert_eq!(labels.values().filter(|l| **l == Some(false)).count(), k);
        }

        #[test]
        fn match_similarities_equal_brute_force(
            texts in prop::collection::vec((prop::collection::vec("[a-h]", 1..6), any::<bool>()), 2..50)
        ) {
            let mut docs: Vec<Document> = texts
                .iter()
                .enumerate()
                .map(|(i, (w, y))| doc(&format!("d{i:02}"), &w.join(" "), *y))
                .collect();
            docs[0].outcome = Some(true);
            docs[1].outcome = Some(false);
            let pairs = match_pairs(&docs).unwrap();
            let table = brute_force_similarity(&docs);
            for p in &pairs {
                let expected = table[&(p.treated.clone(), p.control.clone())];
                prop_assert!((p.similarity - expected).abs() < 1e-9);
                let best = docs
                    .iter()
                    .filter(|d| d.outcome == Some(false))
                    .map(|d| table[&(p.treated.clone(), d.id.clone())])
                    .fold(f64::NEG_INFINITY, f64::max);
                prop_assert!((p.similarity - best).abs() < 1e-9);
            }
        }
    }
}
