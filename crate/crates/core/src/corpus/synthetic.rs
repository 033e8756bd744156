//! Planted-topic corpora with known ground truth.
//!
//! Topic `k` concentrates its mass on a contiguous block of the word list
//! (see [`topic_block`]); the remaining words get a small floor so every
//! topic is a full distribution. Documents follow the LDA generative
//! process. Each summary carries one word of the document's dominant topic
//! that never occurs in the article.

use std::ops::Range;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;

use crate::corpus::DocumentPair;
use crate::error::{Error, Result};

/// Words per sentence in generated articles; each sentence ends in `.`.
pub const SENTENCE_WORDS: usize = 8;

const DOC_CONCENTRATION: f64 = 0.1;
const OFF_TOPIC_WEIGHT: f64 = 0.002;
const MAX_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub topics: usize,
    pub vocab_words: usize,
    pub n_docs: usize,
    pub doc_len: usize,
    pub sum_len: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub pairs: Vec<DocumentPair>,
    /// Word strings; column `v` of `beta` is `words[v]`.
    pub words: Vec<String>,
    /// True topic-word distributions, `topics × vocab_words`.
    pub beta: Vec<Vec<f64>>,
    /// True per-document topic proportions.
    pub theta: Vec<Vec<f64>>,
    /// The summary word of each document that is absent from its article.
    pub exogenous: Vec<String>,
}

/// Word indices owned by topic `k`.
pub fn topic_block(k: usize, topics: usize, vocab_words: usize) -> Range<usize> {
    k * vocab_words / topics..(k + 1) * vocab_words / topics
}

pub fn synthetic_word(v: usize, vocab_words: usize) -> String {
    let width = (vocab_words.max(2) - 1).to_string().len();
    format!("w{v:0width$}")
}

fn planted_beta(topics: usize, vocab_words: usize) -> Vec<Vec<f64>> {
    (0..topics)
        .map(|k| {
            let block = topic_block(k, topics, vocab_words);
            let mut row: Vec<f64> = (0..vocab_words)
                .map(|v| {
                    if block.contains(&v) {
                        1.0 / (1.0 + 0.15 * (v - block.start) as f64)
                    } else {
                        OFF_TOPIC_WEIGHT
                    }
                })
                .collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            row
        })
        .collect()
}

fn sample_theta(rng: &mut ChaCha8Rng, topics: usize) -> Vec<f64> {
    if topics == 1 {
        return vec![1.0];
    }
    let gamma = Gamma::new(DOC_CONCENTRATION, 1.0).expect("positive shape");
    loop {
        let draws: Vec<f64> = (0..topics).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|x| x / total).collect();
        }
    }
}

fn sample_words(
    rng: &mut ChaCha8Rng,
    theta: &[f64],
    topic_words: &[WeightedIndex<f64>],
    n: usize,
) -> Vec<usize> {
    let pick_topic = WeightedIndex::new(theta).expect("theta is a distribution");
    (0..n)
        .map(|_| topic_words[pick_topic.sample(rng)].sample(rng))
        .collect()
}

/// Generates `n_docs` article/summary pairs from `topics` planted topics
/// over `vocab_words` words. Deterministic in `seed`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.topics < 1 {
        return Err(Error::invalid("synthetic corpus needs at least one topic"));
    }
    if cfg.vocab_words < 3 * cfg.topics {
        return Err(Error::invalid(format!(
            "synthetic corpus needs at least 3 words per topic ({} words for {} topics)",
            cfg.vocab_words, cfg.topics
        )));
    }
    if cfg.n_docs == 0 || cfg.doc_len == 0 || cfg.sum_len == 0 {
        return Err(Error::invalid(
            "synthetic corpus needs n_docs, doc_len and sum_len ≥ 1",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let words: Vec<String> = (0..cfg.vocab_words)
        .map(|v| synthetic_word(v, cfg.vocab_words))
        .collect();
    let beta = planted_beta(cfg.topics, cfg.vocab_words);
    let topic_words: Vec<WeightedIndex<f64>> = beta
        .iter()
        .map(|row| WeightedIndex::new(row).expect("beta rows are distributions"))
        .collect();

    let mut pairs = Vec::with_capacity(cfg.n_docs);
    let mut thetas = Vec::with_capacity(cfg.n_docs);
    let mut exogenous = Vec::with_capacity(cfg.n_docs);
    for d in 0..cfg.n_docs {
        let (theta, article, extra) = (0..MAX_ATTEMPTS)
            .find_map(|_| {
                let theta = sample_theta(&mut rng, cfg.topics);
                let article = sample_words(&mut rng, &theta, &topic_words, cfg.doc_len);
                let dominant = argmax(&theta);
                // The block is sorted by descending weight, so the first
                // absent word is the most probable one missing.
                let extra = topic_block(dominant, cfg.topics, cfg.vocab_words)
                    .find(|v| !article.contains(v))?;
                Some((theta, article, extra))
            })
            .ok_or_else(|| {
                Error::invalid(format!(
                    "document {d}: could not place a topic word absent from the article; \
                     use a shorter doc_len or a larger vocabulary"
                ))
            })?;
        let mut summary = sample_words(&mut rng, &theta, &topic_words, cfg.sum_len - 1);
        let at = rng.random_range(0..cfg.sum_len);
        summary.insert(at, extra);

        let mut article_tokens = Vec::with_capacity(cfg.doc_len + cfg.doc_len / SENTENCE_WORDS + 1);
        for (i, &w) in article.iter().enumerate() {
            article_tokens.push(words[w].clone());
            if (i + 1) % SENTENCE_WORDS == 0 || i + 1 == article.len() {
                article_tokens.push(".".to_string());
            }
        }
        pairs.push(DocumentPair {
            id: format!("syn{d:05}"),
            article: article_tokens,
            summary: summary.iter().map(|&w| words[w].clone()).collect(),
        });
        thetas.push(theta);
        exogenous.push(words[extra].clone());
    }
    Ok(SyntheticCorpus {
        pairs,
        words,
        beta,
        theta: thetas,
        exogenous,
    })
}

const COPY_FILLER: [&str; 12] = [
    "the", "report", "city", "council", "new", "plan", "said", "today", "market", "river",
    "school", "team",
];

/// Copy task: each article hides one unique name among filler words and
/// the summary is `<name> arrived today`. Names are `prefix` plus a serial
/// and a random suffix, so they never repeat across documents.
pub fn generate_copy_task(n_docs: usize, seed: u64, prefix: &str) -> Vec<DocumentPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_docs)
        .map(|d| {
            let suffix: u32 = rng.random_range(0..100_000);
            let name = format!("{prefix}{d}n{suffix}");
            let mut article: Vec<String> = (0..8)
                .map(|_| COPY_FILLER[rng.random_range(0..COPY_FILLER.len())].to_string())
                .collect();
            let at = rng.random_range(0..=article.len());
            article.insert(at, name.clone());
            article.push(".".to_string());
            DocumentPair {
                id: format!("copy{d:04}"),
                article,
                summary: vec![name, "arrived".to_string(), "today".to_string()],
            }
        })
        .collect()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
