//! Synthetic review corpora with known sentiment.
//!
//! Each review belongs to a product type `C` and has a true sentiment `T`
//! drawn with a type-dependent rate. A positive review has an intensity `k`
//! and contains `k` positive words the lexicon misses; each of them is
//! accompanied by a lexicon word with probability `lexicon_rate`, so strongly
//! positive reviews are more likely to be found. Lexicon hits come mostly
//! from a long tail of rare words, so a classifier over frequent words cannot
//! read the lexicon directly and has to rely on the co-occurring positive
//! vocabulary. Negative reviews occasionally contain a
//! lexicon word, giving the proxy a small false-positive rate.
//!
//! An optional latent property `Z` (gift purchases) adds marker words, makes a
//! lexicon match more likely regardless of sentiment, and can shift the
//! outcome through `SimulationParams::beta_z`.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Lexicon};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

const PRODUCT_TYPES: [&str; 3] = ["mp3", "cd", "vinyl"];
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Knobs of the review generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReviewRecipe {
    pub n_docs: usize,
    /// `P(T=1 | C=c)`; its length is the number of product types (at most 3).
    pub treatment_rate: Vec<f64>,
    pub filler_vocab: usize,
    pub min_filler: usize,
    pub max_filler: usize,
    /// Product-specific words per type, and how many appear in each review.
    pub product_vocab: usize,
    pub product_tokens: usize,
    pub positive_vocab: usize,
    pub negative_vocab: usize,
    pub common_lexicon: usize,
    pub rare_lexicon: usize,
    /// Sentiment tokens per review, uniform on `[min, max]`.
    pub min_sentiment: usize,
    pub max_sentiment: usize,
    /// Chance that each positive word comes with a lexicon word.
    pub lexicon_rate: f64,
    /// Chance that a lexicon word comes from the rare tail.
    pub rare_share: f64,
    /// Chance that a negative review contains a lexicon word.
    pub false_positive_rate: f64,
    /// `P(Z=1)`.
    pub latent_rate: f64,
    pub latent_vocab: usize,
    pub latent_tokens: usize,
    /// Chance that a `Z=1` review contains an extra lexicon word.
    pub latent_lexicon_rate: f64,
}

impl Default for ReviewRecipe {
    fn default() -> Self {
        Self {
            n_docs: 4000,
            treatment_rate: vec![0.25, 0.5, 0.8],
            filler_vocab: 300,
            min_filler: 15,
            max_filler: 45,
            product_vocab: 40,
            product_tokens: 3,
            positive_vocab: 150,
            negative_vocab: 150,
            common_lexicon: 40,
            rare_lexicon: 5000,
            min_sentiment: 1,
            max_sentiment: 6,
            lexicon_rate: 0.3,
            rare_share: 1.0,
            false_positive_rate: 0.04,
            latent_rate: 0.0,
            latent_vocab: 20,
            latent_tokens: 2,
            latent_lexicon_rate: 0.0,
        }
    }
}

impl ReviewRecipe {
    /// Every product type has the same treated share and half the reviews are
    /// gift purchases that trip the lexicon.
    pub fn crossing() -> Self {
        Self {
            treatment_rate: vec![0.8; 3],
            latent_rate: 0.5,
            latent_lexicon_rate: 0.6,
            ..Self::default()
        }
    }

    /// A lexicon that finds about half of the positive reviews.
    pub fn low_recall() -> Self {
        Self {
            lexicon_rate: 0.2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.treatment_rate.is_empty() || self.treatment_rate.len() > PRODUCT_TYPES.len() {
            return bad(format!("treatment_rate needs 1 to {} entries", PRODUCT_TYPES.len()));
        }
        if let Some(p) = self.treatment_rate.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return bad(format!("treatment rate {p} must lie strictly inside (0, 1)"));
        }
        for (name, p) in [
            ("lexicon_rate", self.lexicon_rate),
            ("rare_share", self.rare_share),
            ("false_positive_rate", self.false_positive_rate),
            ("latent_rate", self.latent_rate),
            ("latent_lexicon_rate", self.latent_lexicon_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.min_filler > self.max_filler || self.min_sentiment > self.max_sentiment {
            return bad("length ranges must have min <= max".into());
        }
        if self.min_sentiment == 0 {
            return bad("reviews need at least one sentiment token".into());
        }
        for (name, n) in [
            ("filler_vocab", self.filler_vocab),
            ("product_vocab", self.product_vocab),
            ("positive_vocab", self.positive_vocab),
            ("negative_vocab", self.negative_vocab),
            ("common_lexicon", self.common_lexicon),
            ("rare_lexicon", self.rare_lexicon),
            ("latent_vocab", self.latent_vocab),
        ] {
            if n == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    pub fn categories(&self) -> usize {
        self.treatment_rate.len()
    }
}

/// Deterministic three-syllable pseudo-words; distinct for distinct `i`
/// below the syllable space.
fn pseudo_word(i: usize) -> String {
    let syllables = CONSONANTS.len() * VOWELS.len();
    let space = syllables.pow(3);
    let mut code = (i.wrapping_mul(7919) + 12_345) % space;
    let mut word = String::with_capacity(6);
    for _ in 0..3 {
        let s = code % syllables;
        code /= syllables;
        word.push(CONSONANTS[s / VOWELS.len()] as char);
        word.push(VOWELS[s % VOWELS.len()] as char);
    }
    word
}

struct WordBank {
    filler: Vec<String>,
    filler_cdf: Vec<f64>,
    products: Vec<Vec<String>>,
    positive: Vec<String>,
    negative: Vec<String>,
    common_lexicon: Vec<String>,
    rare_lexicon: Vec<String>,
    latent: Vec<String>,
}

impl WordBank {
    fn new(r: &ReviewRecipe) -> Self {
        let mut next = 0usize;
        let mut take = |n: usize| {
            let words: Vec<String> = (next..next + n).map(pseudo_word).collect();
            next += n;
            words
        };
        let filler = take(r.filler_vocab);
        let mut acc = 0.0;
        let filler_cdf = (0..filler.len())
            .map(|rank| {
                acc += 1.0 / (rank as f64 + 100.0);
                acc
            })
            .collect();
        let products = PRODUCT_TYPES[..r.categories()]
            .iter()
            .map(|name| {
                let mut words = vec![(*name).to_string()];
                words.extend(take(r.product_vocab));
                words
            })
            .collect();
        Self {
            filler,
            filler_cdf,
            products,
            positive: take(r.positive_vocab),
            negative: take(r.negative_vocab),
            common_lexicon: take(r.common_lexicon),
            rare_lexicon: take(r.rare_lexicon),
            latent: take(r.latent_vocab),
        }
    }

    fn filler_word(&self, rng: &mut ChaCha8Rng) -> &str {
        let total = *self.filler_cdf.last().unwrap_or(&1.0);
        let u = rng.random::<f64>() * total;
        let k = self.filler_cdf.partition_point(|&c| c <= u).min(self.filler.len() - 1);
        &self.filler[k]
    }

    fn lexicon_word(&self, rare_share: f64, rng: &mut ChaCha8Rng) -> &str {
        let pool = if rng.random::<f64>() < rare_share {
            &self.rare_lexicon
        } else {
            &self.common_lexicon
        };
        pool.choose(rng).expect("non-empty lexicon pool")
    }

    fn lexicon(&self) -> Lexicon {
        Lexicon::new(self.common_lexicon.iter().chain(&self.rare_lexicon))
    }
}

/// Generate a review corpus (with `C`, `T`, `Z` and text) and its lexicon.
pub fn generate_reviews(recipe: &ReviewRecipe, seed: u64) -> Result<(Vec<Document>, Lexicon)> {
    recipe.validate()?;
    let bank = WordBank::new(recipe);
    let mut rng = rng::stream(seed, &[purpose::TEXT]);
    let width = recipe.n_docs.max(1).to_string().len();
    let mut docs = Vec::with_capacity(recipe.n_docs);
    for i in 0..recipe.n_docs {
        let c = rng.random_range(0..recipe.categories());
        let t = rng.random::<f64>() < recipe.treatment_rate[c];
        let z = rng.random::<f64>() < recipe.latent_rate;

        let mut tokens: Vec<&str> = Vec::new();
        for _ in 0..rng.random_range(recipe.min_filler..=recipe.max_filler) {
            tokens.push(bank.filler_word(&mut rng));
        }
        tokens.push(&bank.products[c][0]);
        for _ in 0..recipe.product_tokens {
            tokens.push(bank.products[c][1..].choose(&mut rng).expect("product words"));
        }
        let k = rng.random_range(recipe.min_sentiment..=recipe.max_sentiment);
        if t {
            for _ in 0..k {
                tokens.push(bank.positive.choose(&mut rng).expect("positive words"));
                if rng.random::<f64>() < recipe.lexicon_rate {
                    tokens.push(bank.lexicon_word(recipe.rare_share, &mut rng));
                }
            }
        } else {
            for _ in 0..k {
                tokens.push(bank.negative.choose(&mut rng).expect("negative words"));
            }
            if rng.random::<f64>() < recipe.false_positive_rate {
                tokens.push(bank.lexicon_word(recipe.rare_share, &mut rng));
            }
        }
        if z {
            for _ in 0..recipe.latent_tokens {
                tokens.push(bank.latent.choose(&mut rng).expect("latent words"));
            }
            if rng.random::<f64>() < recipe.latent_lexicon_rate {
                tokens.push(bank.lexicon_word(recipe.rare_share, &mut rng));
            }
        }
        tokens.shuffle(&mut rng);

        let mut doc = Document::new(format!("r{i:0width$}"), tokens.join(" "), c);
        doc.treatment_true = Some(t);
        if recipe.latent_rate > 0.0 {
            doc.latent = Some(z);
        }
        docs.push(doc);
    }
    Ok((docs, bank.lexicon()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::lexicon_proxy;
    use std::collections::BTreeSet;

    #[test]
    fn pseudo_words_are_distinct() {
        let words: BTreeSet<String> = (0..20_000).map(pseudo_word).collect();
        assert_eq!(words.len(), 20_000);
        assert!(words.iter().all(|w| w.len() == 6));
    }

    #[test]
    fn generation_is_deterministic() {
        let recipe = ReviewRecipe {
            n_docs: 300,
            ..ReviewRecipe::default()
        };
        let (a, lex_a) = generate_reviews(&recipe, 4).unwrap();
        let (b, lex_b) = generate_reviews(&recipe, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(lex_a, lex_b);
        let (c, _) = generate_reviews(&recipe, 5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lexicon_is_precise_but_incomplete() {
        let recipe = ReviewRecipe {
            n_docs: 4000,
            ..ReviewRecipe::default()
        };
        let (docs, lexicon) = generate_reviews(&recipe, 1).unwrap();
        let (mut tp, mut fp, mut pos) = (0usize, 0usize, 0usize);
        for d in &docs {
            let hit = lexicon_proxy(d, &lexicon);
            let t = d.treatment_true.unwrap();
            pos += usize::from(t);
            tp += usize::from(hit && t);
            fp += usize::from(hit && !t);
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        // 1 − mean over k = 1..6 of 0.7^k ≈ 0.657
        assert!((recall - 0.657).abs() < 0.04, "recall {recall}");
        assert!(precision > 0.9, "precision {precision}");
    }

    #[test]
    fn low_recall_variant_finds_about_half() {
        let (docs, lexicon) = generate_reviews(&ReviewRecipe::low_recall(), 2).unwrap();
        let positives: Vec<_> = docs.iter().filter(|d| d.treatment_true == Some(true)).collect();
        let recall = positives.iter().filter(|d| lexicon_proxy(d, &lexicon)).count() as f64 / positives.len() as f64;
        assert!((recall - 0.5).abs() < 0.05, "recall {recall}");
    }

    #[test]
    fn crossing_variant_plants_latent_markers() {
        let (docs, lexicon) = generate_reviews(&ReviewRecipe::crossing(), 3).unwrap();
        let rate = |z: bool| {
            let group: Vec<_> = docs.iter().filter(|d| d.latent == Some(z)).collect();
            group.iter().filter(|d| lexicon_proxy(d, &lexicon)).count() as f64 / group.len() as f64
        };
        assert!(rate(true) > rate(false) + 0.2);
        let treated = docs.iter().filter(|d| d.treatment_true == Some(true)).count() as f64;
        assert!((treated / docs.len() as f64 - 0.8).abs() < 0.03);
    }

    #[test]
    fn invalid_recipes_are_rejected() {
        let mut r = ReviewRecipe::default();
        r.treatment_rate = vec![1.0];
        assert!(r.validate().is_err());
        let mut r = ReviewRecipe::default();
        r.treatment_rate = vec![0.5; 4];
        assert!(r.validate().is_err());
        let mut r = ReviewRecipe::default();
        r.min_sentiment = 0;
        assert!(r.validate().is_err());
    }
}
