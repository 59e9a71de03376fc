//! Seeded author corpora with a latent per-author style.
//!
//! Every document mixes a shared byte-bigram table with a small set of
//! favourite letters. An author owns a favourite set drawn from the pool of
//! their style cluster and a latent trait `τ ∈ [0, 1)`. Each document uses
//! the author's own set with probability `style_strength · τ` and otherwise a
//! fresh set drawn exactly like an author's set. A single document therefore
//! carries no information about `τ`; only agreement across an author's
//! history reveals it.
//!
//! Authors also own a few signature letters, taken from the letters after the
//! alphabet and independent of `τ` and of the cluster, which every document
//! uses at rate `style_strength · signature_weight`. At `style_strength = 0`
//! all authors share one distribution.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, AuthorStream, Label, RawDocument};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_authors: usize,
    pub docs_per_author: usize,
    /// Characters per document.
    pub doc_len: usize,
    pub style_strength: f64,
    /// Letters used, starting at `a`; a space is always available.
    pub alphabet: usize,
    pub n_clusters: usize,
    pub pool_size: usize,
    pub n_favorites: usize,
    /// Letters after the alphabet that signatures are drawn from.
    pub signature_pool: usize,
    pub signature_size: usize,
    /// Rate of signature letters per character, scaled by `style_strength`.
    pub signature_weight: f64,
    /// Probability that a non-signature character is drawn from the document's favourite set.
    pub favorite_weight: f64,
    /// Dirichlet concentration of the shared bigram rows.
    pub bigram_concentration: f64,
    /// Favourite-letter share at or above which a document is labeled 1.
    pub doc_label_threshold: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_authors: 200,
            docs_per_author: 48,
            doc_len: 8,
            style_strength: 0.8,
            alphabet: 20,
            n_clusters: 8,
            pool_size: 8,
            n_favorites: 3,
            signature_pool: 6,
            signature_size: 2,
            signature_weight: 0.5,
            favorite_weight: 0.8,
            bigram_concentration: 0.3,
            doc_label_threshold: 0.4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("synthetic corpus: {m}")));
        if !(0.0..=1.0).contains(&self.style_strength) {
            return bad("style_strength must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.favorite_weight) {
            return bad("favorite_weight must lie in [0, 1]");
        }
        if self.alphabet == 0 || self.alphabet > 26 {
            return bad("alphabet must hold 1..=26 letters");
        }
        if self.n_clusters == 0 || self.pool_size == 0 || self.pool_size > self.alphabet {
            return bad("cluster pools must be non-empty subsets of the alphabet");
        }
        if self.n_favorites == 0 || self.n_favorites > self.pool_size {
            return bad("n_favorites must lie in 1..=pool_size");
        }
        if self.alphabet + self.signature_pool > 26 {
            return bad("alphabet and signature pool exceed 26 letters");
        }
        if self.signature_size == 0 || self.signature_size > self.signature_pool {
            return bad("signature_size must lie in 1..=signature_pool");
        }
        if !(0.0..=1.0).contains(&self.signature_weight) {
            return bad("signature_weight must lie in [0, 1]");
        }
        if self.bigram_concentration <= 0.0 {
            return bad("bigram_concentration must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDocument {
    pub text: String,
    /// Whether the document used the author's own favourite set.
    pub in_style: bool,
    /// Document-level label: 1 when the share of the author's favourite
    /// letters reaches the threshold.
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAuthor {
    pub author_id: String,
    pub cluster: usize,
    /// Latent scalar trait; the person-level regression label.
    pub trait_value: f64,
    pub favorites: Vec<u8>,
    pub signature: Vec<u8>,
    pub documents: Vec<SyntheticDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub config: SynthConfig,
    pub authors: Vec<SyntheticAuthor>,
}

/// Which label the exported documents carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthLabel {
    None,
    /// Person-level regression: the author's trait.
    Trait,
    /// Person-level classification: the author's style cluster.
    Cluster,
    /// Document-level classification.
    Document,
}

pub fn generate_synthetic_author_corpus(
    seed: u64,
    n_authors: usize,
    docs_per_author: usize,
    doc_len: usize,
    style_strength: f64,
) -> Result<SyntheticCorpus> {
    generate(&SynthConfig {
        seed,
        n_authors,
        docs_per_author,
        doc_len,
        style_strength,
        ..SynthConfig::default()
    })
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_sym = config.alphabet + 1; // letters then space
    let symbol = |i: usize| if i == config.alphabet { b' ' } else { b'a' + i as u8 };

    // Row `n_sym` is the start-of-document context.
    let dirichlet = Dirichlet::new(&vec![config.bigram_concentration; n_sym]).expect("valid concentration");
    let bigram: Vec<Vec<f64>> = (0..=n_sym).map(|_| dirichlet.sample(&mut rng)).collect();
    let letters: Vec<u8> = (0..config.alphabet as u8).collect();
    let pools: Vec<Vec<u8>> = (0..config.n_clusters)
        .map(|_| letters.choose_multiple(&mut rng, config.pool_size).copied().collect())
        .collect();
    let draw_set = |rng: &mut ChaCha8Rng, cluster: usize| -> Vec<u8> {
        pools[cluster]
            .choose_multiple(rng, config.n_favorites)
            .copied()
            .collect()
    };

    let signature_rate = config.style_strength * config.signature_weight;
    let signature_letters: Vec<u8> = (0..config.signature_pool).map(|i| b'a' + (config.alphabet + i) as u8).collect();
    let mut authors = Vec::with_capacity(config.n_authors);
    for a in 0..config.n_authors {
        let cluster = rng.gen_range(0..config.n_clusters);
        let favorites = draw_set(&mut rng, cluster);
        let trait_value: f64 = rng.gen();
        let signature: Vec<u8> = signature_letters
            .choose_multiple(&mut rng, config.signature_size)
            .copied()
            .collect();
        let mut documents = Vec::with_capacity(config.docs_per_author);
        for _ in 0..config.docs_per_author {
            let in_style = rng.gen::<f64>() < config.style_strength * trait_value;
            let set = if in_style {
                favorites.clone()
            } else {
                let c = rng.gen_range(0..config.n_clusters);
                draw_set(&mut rng, c)
            };
            let mut prev = n_sym;
            let mut text = Vec::with_capacity(config.doc_len);
            for _ in 0..config.doc_len {
                // Signature letters leave the bigram context untouched.
                if rng.gen::<f64>() < signature_rate {
                    text.push(*signature.choose(&mut rng).expect("non-empty signature"));
                    continue;
                }
                let s = if rng.gen::<f64>() < config.favorite_weight {
                    *set.choose(&mut rng).expect("non-empty set") as usize
                } else {
                    sample_index(&bigram[prev], &mut rng)
                };
                text.push(symbol(s));
                prev = s;
            }
            let fav_share = if text.is_empty() {
                0.0
            } else {
                text.iter().filter(|&&b| favorites.iter().any(|&f| symbol(f as usize) == b)).count() as f64
                    / text.len() as f64
            };
            documents.push(SyntheticDocument {
                text: String::from_utf8(text).expect("ascii"),
                in_style,
                label: u8::from(fav_share >= config.doc_label_threshold),
            });
        }
        authors.push(SyntheticAuthor {
            author_id: format!("author{a:05}"),
            cluster,
            trait_value,
            favorites: favorites.iter().map(|&f| symbol(f as usize)).collect(),
            signature,
            documents,
        });
    }
    Ok(SyntheticCorpus {
        config: config.clone(),
        authors,
    })
}

fn sample_index(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

impl SyntheticAuthor {
    pub fn raw_documents(&self, label: SynthLabel) -> Vec<RawDocument> {
        self.documents
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let doc = RawDocument::new(&self.author_id, &d.text)
                    .at(i as i64)
                    .with_source("synthetic");
                match label {
                    SynthLabel::None => doc,
                    SynthLabel::Trait => doc.with_label(Label::Number(self.trait_value)),
                    SynthLabel::Cluster => doc.with_label(Label::Number(self.cluster as f64)),
                    SynthLabel::Document => doc.with_label(Label::Number(d.label as f64)),
                }
            })
            .collect()
    }

    pub fn stream(&self, label: SynthLabel) -> AuthorStream {
        AuthorStream {
            author_id: self.author_id.clone(),
            documents: self.raw_documents(label).into_iter().map(normalize_text).collect(),
        }
    }
}

impl SyntheticCorpus {
    pub fn streams(&self, label: SynthLabel) -> Vec<AuthorStream> {
        self.authors.iter().map(|a| a.stream(label)).collect()
    }

    pub fn raw_documents(&self, label: SynthLabel) -> Vec<RawDocument> {
        self.authors.iter().flat_map(|a| a.raw_documents(label)).collect()
    }

    pub fn traits(&self) -> Vec<f64> {
        self.authors.iter().map(|a| a.trait_value).collect()
    }
}
