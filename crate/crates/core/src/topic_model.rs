//! Latent Dirichlet allocation by collapsed Gibbs sampling.
//!
//! Word ids here are LDA ids: vocabulary id minus [`NUM_SPECIALS`]. Special
//! tokens, out-of-vocabulary tokens and punctuation never reach the sampler
//! (see [`lda_document`]).
//!
//! [`TopicModel::infer_theta`] folds a new document in with `β` held fixed.
//! It takes the model by shared reference and never touches `β`, so the
//! documents used for fitting and the documents being scored stay separate.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_punctuation, Vocabulary, NUM_SPECIALS};
use crate::error::{Error, Result};

pub const TOPIC_MODEL_FORMAT_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "topic_model.json";
const BETA_FILE: &str = "topic_model.bin";

pub const DEFAULT_ETA: f64 = 0.01;
pub const DEFAULT_TRAIN_SWEEPS: usize = 200;
pub const DEFAULT_FOLD_IN_SWEEPS: usize = 50;

pub fn default_alpha(topics: usize) -> f64 {
    50.0 / topics as f64
}

/// Maps tokens to LDA ids, dropping specials, unknown words and punctuation.
pub fn lda_document<S: AsRef<str>>(vocab: &Vocabulary, tokens: &[S]) -> Vec<usize> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !is_punctuation(t))
        .filter_map(|t| vocab.get(t))
        .filter(|&id| !Vocabulary::is_special(id))
        .map(|id| id - NUM_SPECIALS)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaConfig {
    pub topics: usize,
    pub alpha: f64,
    pub eta: f64,
    pub sweeps: usize,
    pub seed: u64,
}

impl LdaConfig {
    pub fn new(topics: usize) -> Self {
        Self {
            topics,
            alpha: default_alpha(topics.max(1)),
            eta: DEFAULT_ETA,
            sweeps: DEFAULT_TRAIN_SWEEPS,
            seed: 0,
        }
    }
}

/// A point on the topic simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicVector(pub Vec<f64>);

impl TopicVector {
    pub fn uniform(topics: usize) -> Self {
        Self(vec![1.0 / topics as f64; topics])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = k;
            }
        }
        best
    }
}

/// Fitted topic-word distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    topics: usize,
    vocab_size: usize,
    alpha: f64,
    eta: f64,
    /// Row-major `topics × vocab_size`.
    beta: Vec<f64>,
}

/// Sampler state: one topic per token plus the count tables it implies.
#[derive(Debug, Clone)]
pub struct GibbsState {
    topics: usize,
    vocab_size: usize,
    pub z: Vec<Vec<usize>>,
    pub n_kw: Vec<u32>,
    pub n_dk: Vec<u32>,
    pub n_k: Vec<u32>,
}

impl GibbsState {
    /// Uniform random initial assignment.
    pub fn new(docs: &[Vec<usize>], topics: usize, vocab_size: usize, rng: &mut impl Rng) -> Self {
        let mut state = Self {
            topics,
            vocab_size,
            z: Vec::with_capacity(docs.len()),
            n_kw: vec![0; topics * vocab_size],
            n_dk: vec![0; docs.len() * topics],
            n_k: vec![0; topics],
        };
        for (d, doc) in docs.iter().enumerate() {
            let z: Vec<usize> = doc.iter().map(|_| rng.random_range(0..topics)).collect();
            for (&w, &k) in doc.iter().zip(&z) {
                state.n_kw[k * vocab_size + w] += 1;
                state.n_dk[d * topics + k] += 1;
                state.n_k[k] += 1;
            }
            state.z.push(z);
        }
        state
    }

    /// One pass over every token, resampling its topic from the collapsed
    /// conditional `(n_dk + α)(n_kw + η) / (n_k + Vη)`.
    pub fn sweep(&mut self, docs: &[Vec<usize>], alpha: f64, eta: f64, rng: &mut impl Rng) {
        let (kk, vv) = (self.topics, self.vocab_size);
        let v_eta = vv as f64 * eta;
        let mut weights = vec![0.0; kk];
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = self.z[d][i];
                self.n_kw[old * vv + w] -= 1;
                self.n_dk[d * kk + old] -= 1;
                self.n_k[old] -= 1;
                for k in 0..kk {
                    weights[k] = (self.n_dk[d * kk + k] as f64 + alpha)
                        * (self.n_kw[k * vv + w] as f64 + eta)
                        / (self.n_k[k] as f64 + v_eta);
                }
                let new = sample_index(rng, &weights);
                self.z[d][i] = new;
                self.n_kw[new * vv + w] += 1;
                self.n_dk[d * kk + new] += 1;
                self.n_k[new] += 1;
            }
        }
    }

    /// Rebuilds every count table from `z` and compares with the stored ones.
    pub fn counts_consistent(&self, docs: &[Vec<usize>]) -> bool {
        let (kk, vv) = (self.topics, self.vocab_size);
        let mut n_kw = vec![0u32; kk * vv];
        let mut n_dk = vec![0u32; docs.len() * kk];
        let mut n_k = vec![0u32; kk];
        for (d, doc) in docs.iter().enumerate() {
            for (&w, &k) in doc.iter().zip(&self.z[d]) {
                n_kw[k * vv + w] += 1;
                n_dk[d * kk + k] += 1;
                n_k[k] += 1;
            }
        }
        n_kw == self.n_kw && n_dk == self.n_dk && n_k == self.n_k
    }

    /// `β_kv = (n_kw + η) / (n_k + Vη)`.
    pub fn beta(&self, eta: f64) -> Vec<f64> {
        let vv = self.vocab_size;
        let mut beta = vec![0.0; self.topics * vv];
        for k in 0..self.topics {
            let denom = self.n_k[k] as f64 + vv as f64 * eta;
            for v in 0..vv {
                beta[k * vv + v] = (self.n_kw[k * vv + v] as f64 + eta) / denom;
            }
        }
        beta
    }

    /// Per-token log likelihood of the training documents under the current
    /// point estimates of `θ_d` and `β`.
    pub fn log_likelihood(&self, docs: &[Vec<usize>], alpha: f64, eta: f64) -> f64 {
        let (kk, vv) = (self.topics, self.vocab_size);
        let beta = self.beta(eta);
        let mut total = 0.0;
        for (d, doc) in docs.iter().enumerate() {
            let denom = doc.len() as f64 + kk as f64 * alpha;
            for &w in doc {
                let p: f64 = (0..kk)
                    .map(|k| (self.n_dk[d * kk + k] as f64 + alpha) / denom * beta[k * vv + w])
                    .sum();
                total += p.ln();
            }
        }
        total
    }
}

fn sample_index(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return k;
        }
    }
    weights.len() - 1
}

fn validate(docs: &[Vec<usize>], vocab_size: usize, cfg: &LdaConfig) -> Result<()> {
    if cfg.topics < 1 {
        return Err(Error::invalid("LDA needs at least one topic"));
    }
    if cfg.sweeps < 1 {
        return Err(Error::invalid("LDA needs at least one sweep"));
    }
    if !(cfg.alpha > 0.0 && cfg.eta > 0.0) {
        return Err(Error::invalid("LDA priors alpha and eta must be positive"));
    }
    if vocab_size == 0 {
        return Err(Error::invalid("LDA vocabulary is empty"));
    }
    if docs.iter().all(Vec::is_empty) {
        return Err(Error::invalid("LDA corpus has no tokens"));
    }
    if let Some(&w) = docs.iter().flatten().find(|&&w| w >= vocab_size) {
        return Err(Error::invalid(format!(
            "word id {w} outside LDA vocabulary of size {vocab_size}"
        )));
    }
    Ok(())
}

/// Fits `cfg.topics` topics over `vocab_size` word ids.
pub fn fit_lda(docs: &[Vec<usize>], vocab_size: usize, cfg: &LdaConfig) -> Result<TopicModel> {
    fit_lda_monitored(docs, vocab_size, cfg, 0).map(|(m, _)| m)
}

/// As [`fit_lda`], also returning `(sweep, log likelihood)` every
/// `monitor_every` sweeps (never when zero).
pub fn fit_lda_monitored(
    docs: &[Vec<usize>],
    vocab_size: usize,
    cfg: &LdaConfig,
    monitor_every: usize,
) -> Result<(TopicModel, Vec<(usize, f64)>)> {
    validate(docs, vocab_size, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = GibbsState::new(docs, cfg.topics, vocab_size, &mut rng);
    let mut history = Vec::new();
    for sweep in 1..=cfg.sweeps {
        state.sweep(docs, cfg.alpha, cfg.eta, &mut rng);
        if monitor_every > 0 && (sweep % monitor_every == 0 || sweep == 1) {
            history.push((sweep, state.log_likelihood(docs, cfg.alpha, cfg.eta)));
        }
    }
    let model = TopicModel {
        topics: cfg.topics,
        vocab_size,
        alpha: cfg.alpha,
        eta: cfg.eta,
        beta: state.beta(cfg.eta),
    };
    Ok((model, history))
}

impl TopicModel {
    /// Builds a model from explicit parameters; every row must be a strictly
    /// positive distribution.
    pub fn from_beta(
        topics: usize,
        vocab_size: usize,
        alpha: f64,
        eta: f64,
        beta: Vec<f64>,
    ) -> Result<Self> {
        if topics < 1 || vocab_size < 1 {
            return Err(Error::invalid("topic model needs K ≥ 1 and V ≥ 1"));
        }
        if !(alpha > 0.0 && eta > 0.0) {
            return Err(Error::invalid("topic model priors must be positive"));
        }
        if beta.len() != topics * vocab_size {
            return Err(Error::Dimension {
                what: "beta length",
                expected: topics * vocab_size,
                actual: beta.len(),
            });
        }
        for row in beta.chunks(vocab_size) {
            let total: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p > 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(
                    "beta rows must be strictly positive distributions",
                ));
            }
        }
        Ok(Self {
            topics,
            vocab_size,
            alpha,
            eta,
            beta,
        })
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn beta_row(&self, k: usize) -> &[f64] {
        &self.beta[k * self.vocab_size..(k + 1) * self.vocab_size]
    }

    /// Fold-in Gibbs on one document with `β` fixed. `θ*_k = (n_k + α) /
    /// (L + Kα)` from the final sweep; the empty document gets the prior mean.
    pub fn infer_theta(&self, doc: &[usize], sweeps: usize, seed: u64) -> TopicVector {
        let kk = self.topics;
        let doc: Vec<usize> = doc
            .iter()
            .copied()
            .filter(|&w| w < self.vocab_size)
            .collect();
        if doc.is_empty() || kk == 1 {
            return TopicVector::uniform(kk);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z: Vec<usize> = doc.iter().map(|_| rng.random_range(0..kk)).collect();
        let mut n_k = vec![0u32; kk];
        z.iter().for_each(|&k| n_k[k] += 1);
        let mut weights = vec![0.0; kk];
        for _ in 0..sweeps.max(1) {
            for (i, &w) in doc.iter().enumerate() {
                n_k[z[i]] -= 1;
                for k in 0..kk {
                    weights[k] = (n_k[k] as f64 + self.alpha) * self.beta[k * self.vocab_size + w];
                }
                z[i] = sample_index(&mut rng, &weights);
                n_k[z[i]] += 1;
            }
        }
        let denom = doc.len() as f64 + kk as f64 * self.alpha;
        TopicVector(
            n_k.iter()
                .map(|&n| (n as f64 + self.alpha) / denom)
                .collect(),
        )
    }

    /// `Σ_docs Σ_i ln Σ_k θ*_k β_{k,x_i}` with `θ*` folded in per document.
    pub fn log_likelihood(&self, docs: &[Vec<usize>], sweeps: usize, seed: u64) -> f64 {
        docs.iter()
            .map(|doc| {
                let theta = self.infer_theta(doc, sweeps, seed);
                doc.iter()
                    .filter(|&&w| w < self.vocab_size)
                    .map(|&w| {
                        (0..self.topics)
                            .map(|k| theta.0[k] * self.beta[k * self.vocab_size + w])
                            .sum::<f64>()
                            .ln()
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    /// The `n` most probable LDA ids of topic `k`, ties by id.
    pub fn top_word_ids(&self, k: usize, n: usize) -> Result<Vec<usize>> {
        self.check_topic(k)?;
        let row = self.beta_row(k);
        let mut ids: Vec<usize> = (0..self.vocab_size).collect();
        ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        ids.truncate(n);
        Ok(ids)
    }

    /// The `n` most probable tokens of topic `k`, ties lexicographic.
    pub fn top_words(&self, vocab: &Vocabulary, k: usize, n: usize) -> Result<Vec<String>> {
        self.check_vocab(vocab)?;
        self.check_topic(k)?;
        let row = self.beta_row(k);
        let words = vocab.words();
        let mut ids: Vec<usize> = (0..self.vocab_size).collect();
        ids.sort_by(|&a, &b| {
            row[b]
                .total_cmp(&row[a])
                .then_with(|| words[a].cmp(&words[b]))
        });
        Ok(ids.into_iter().take(n).map(|i| words[i].clone()).collect())
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.len() != self.vocab_size + NUM_SPECIALS {
            return Err(Error::Dimension {
                what: "vocabulary size (topic model V + specials)",
                expected: self.vocab_size + NUM_SPECIALS,
                actual: vocab.len(),
            });
        }
        Ok(())
    }

    fn check_topic(&self, k: usize) -> Result<()> {
        if k >= self.topics {
            return Err(Error::invalid(format!(
                "topic index {k} out of range for K = {}",
                self.topics
            )));
        }
        Ok(())
    }

    /// Writes `topic_model.json` and the little-endian `β` sidecar into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = TopicModelManifest {
            format_version: TOPIC_MODEL_FORMAT_VERSION,
            k: self.topics,
            v: self.vocab_size,
            alpha: self.alpha,
            eta: self.eta,
            beta_file: BETA_FILE.to_string(),
        };
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        let bytes: Vec<u8> = self.beta.iter().flat_map(|x| x.to_le_bytes()).collect();
        let path = dir.join(BETA_FILE);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: TopicModelManifest =
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
        if manifest.format_version != TOPIC_MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                what: "topic model",
                found: manifest.format_version,
                expected: TOPIC_MODEL_FORMAT_VERSION,
            });
        }
        let path = dir.join(&manifest.beta_file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let beta = decode_f64s(&bytes);
        Self::from_beta(manifest.k, manifest.v, manifest.alpha, manifest.eta, beta)
    }
}

pub(crate) fn decode_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TopicModelManifest {
    format_version: u32,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "V")]
    v: usize,
    alpha: f64,
    eta: f64,
    beta_file: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, topic_block, SyntheticConfig};
    use proptest::prelude::*;

    fn cfg(topics: usize, sweeps: usize, seed: u64) -> LdaConfig {
        LdaConfig {
            topics,
            alpha: 0.1,
            eta: 0.01,
            sweeps,
            seed,
        }
    }

    #[test]
    fn single_topic_beta_is_smoothed_unigram() {
        let docs = vec![vec![0, 0, 1], vec![2, 0]];
        let m = fit_lda(&docs, 4, &cfg(1, 3, 1)).unwrap();
        // counts 3,1,1,0 over N = 5
        let eta = 0.01;
        let expected = [3.0, 1.0, 1.0, 0.0].map(|c| (c + eta) / (5.0 + 4.0 * eta));
        for (a, b) in m.beta_row(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_is_deterministic_in_seed() {
        let docs = vec![vec![0, 1, 2, 3], vec![3, 2, 2], vec![0, 0, 1]];
        let a = fit_lda(&docs, 4, &cfg(2, 20, 9)).unwrap();
        let b = fit_lda(&docs, 4, &cfg(2, 20, 9)).unwrap();
        assert_eq!(a.beta(), b.beta());
    }

    #[test]
    fn fit_rejects_bad_config() {
        let docs = vec![vec![0, 1]];
        assert!(fit_lda(&docs, 2, &cfg(0, 5, 1)).is_err());
        assert!(fit_lda(&docs, 2, &cfg(2, 0, 1)).is_err());
        assert!(fit_lda(&docs, 1, &cfg(2, 5, 1)).is_err());
        assert!(fit_lda(&[vec![]], 2, &cfg(2, 5, 1)).is_err());
    }

    #[test]
    fn counts_stay_consistent_across_sweeps() {
        let docs = vec![vec![0, 1, 2, 3, 4], vec![4, 4, 2], vec![1, 0, 3, 3]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = GibbsState::new(&docs, 3, 5, &mut rng);
        assert!(state.counts_consistent(&docs));
        for _ in 0..10 {
            state.sweep(&docs, 0.5, 0.1, &mut rng);
            assert!(state.counts_consistent(&docs));
        }
        state.n_k[0] += 1;
        assert!(!state.counts_consistent(&docs));
    }

    #[test]
    fn infer_theta_edge_cases() {
        let m = TopicModel::from_beta(1, 3, 0.5, 0.01, vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(m.infer_theta(&[0, 1, 2], 10, 1).0, vec![1.0]);
        let m4 = TopicModel::from_beta(4, 2, 0.7, 0.01, vec![0.5; 8]).unwrap();
        assert_eq!(m4.infer_theta(&[], 10, 1).0, vec![0.25; 4]);
    }

    #[test]
    fn log_likelihood_single_word() {
        let m = TopicModel::from_beta(1, 3, 0.5, 0.01, vec![0.2, 0.3, 0.5]).unwrap();
        assert!((m.log_likelihood(&[vec![1]], 5, 0) - 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn top_words_ranking() {
        let vocab = Vocabulary::from_words(&["a", "b"]).unwrap();
        let docs = vec![lda_document(&vocab, &["a", "a", "b"])];
        let m = fit_lda(&docs, 2, &cfg(1, 2, 1)).unwrap();
        assert_eq!(m.top_words(&vocab, 0, 1).unwrap(), vec!["a".to_string()]);
        assert_eq!(m.top_words(&vocab, 0, 10).unwrap().len(), 2);
        assert!(m.top_words(&vocab, 1, 1).is_err());
        let tied = TopicModel::from_beta(1, 2, 0.5, 0.01, vec![0.5, 0.5]).unwrap();
        let vocab = Vocabulary::from_words(&["zeta", "alpha"]).unwrap();
        assert_eq!(tied.top_words(&vocab, 0, 2).unwrap(), vec!["alpha", "zeta"]);
    }

    #[test]
    fn lda_document_drops_specials_and_punctuation() {
        let vocab = Vocabulary::from_words(&["a", ".", "b"]).unwrap();
        let doc = lda_document(&vocab, &["a", ".", "<s>", "zzz", "b"]);
        assert_eq!(doc, vec![0, 2]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let docs = vec![vec![0, 1, 2], vec![2, 2, 1]];
        let m = fit_lda(&docs, 3, &cfg(2, 5, 4)).unwrap();
        m.save(dir.path()).unwrap();
        assert_eq!(TopicModel::load(dir.path()).unwrap(), m);
        let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        for key in [
            "\"K\"",
            "\"V\"",
            "\"alpha\"",
            "\"eta\"",
            "\"format_version\"",
        ] {
            assert!(manifest.contains(key), "{manifest}");
        }
        let bin = fs::read(dir.path().join(BETA_FILE)).unwrap();
        assert_eq!(bin.len(), 2 * 3 * 8);
        assert_eq!(
            f64::from_le_bytes(bin[..8].try_into().unwrap()),
            m.beta()[0]
        );
    }

    #[test]
    fn load_rejects_other_versions() {
        let dir = tempfile::tempdir().unwrap();
        let m = TopicModel::from_beta(1, 2, 0.5, 0.01, vec![0.5, 0.5]).unwrap();
        m.save(dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 9");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            TopicModel::load(dir.path()),
            Err(Error::Version { found: 9, .. })
        ));
    }

    #[test]
    fn planted_topic_dominates_inference_and_top_words() {
        let syn = generate_synthetic(&SyntheticConfig {
            topics: 2,
            vocab_words: 30,
            n_docs: 200,
            doc_len: 40,
            sum_len: 3,
            seed: 21,
        })
        .unwrap();
        let vocab = Vocabulary::from_words(&syn.words).unwrap();
        let docs: Vec<Vec<usize>> = syn
            .pairs
            .iter()
            .map(|p| lda_document(&vocab, &p.article))
            .collect();
        let m = fit_lda(&docs, 30, &cfg(2, 100, 5)).unwrap();
        // align fitted topic to planted topic 0 by mass on block 0
        let mass = |k: usize| topic_block(0, 2, 30).map(|v| m.beta_row(k)[v]).sum::<f64>();
        let aligned0 = if mass(0) > mass(1) { 0 } else { 1 };
        let planted: Vec<usize> = topic_block(0, 2, 30).cycle().take(40).collect();
        let theta = m.infer_theta(&planted, 50, 3);
        assert_eq!(theta.argmax(), aligned0);
        let top = m.top_word_ids(aligned0, 5).unwrap();
        assert!(top.iter().all(|v| topic_block(0, 2, 30).contains(v)));
    }

    #[test]
    fn likelihood_trend_improves_during_fit() {
        let syn = generate_synthetic(&SyntheticConfig {
            topics: 3,
            vocab_words: 45,
            n_docs: 120,
            doc_len: 30,
            sum_len: 3,
            seed: 8,
        })
        .unwrap();
        let vocab = Vocabulary::from_words(&syn.words).unwrap();
        let docs: Vec<Vec<usize>> = syn
            .pairs
            .iter()
            .map(|p| lda_document(&vocab, &p.article))
            .collect();
        let (_, history) = fit_lda_monitored(&docs, 45, &cfg(3, 60, 2), 10).unwrap();
        assert!(history.iter().all(|(_, ll)| *ll < 0.0));
        let first = history.first().unwrap().1;
        let last = history.last().unwrap().1;
        assert!(last > first, "{history:?}");
        // smoothed trend: the second half never falls below the first point
        assert!(history[history.len() / 2..]
            .iter()
            .all(|(_, ll)| *ll > first));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn single_topic_closed_form_on_random_corpora(
            docs in proptest::collection::vec(proptest::collection::vec(0usize..6, 1..12), 1..6),
            seed in 0u64..1000,
        ) {
            let m = fit_lda(&docs, 6, &cfg(1, 2, seed)).unwrap();
            let n: usize = docs.iter().map(Vec::len).sum();
            for v in 0..6 {
                let count = docs.iter().flatten().filter(|&&w| w == v).count();
                let expected = (count as f64 + 0.01) / (n as f64 + 6.0 * 0.01);
                prop_assert!((m.beta_row(0)[v] - expected).abs() < 1e-12);
            }
        }

        #[test]
        fn beta_and_theta_are_distributions(
            docs in proptest::collection::vec(proptest::collection::vec(0usize..8, 1..15), 2..6),
            topics in 1usize..5,
            seed in 0u64..1000,
        ) {
            let m = fit_lda(&docs, 8, &cfg(topics, 5, seed)).unwrap();
            for k in 0..topics {
                let row = m.beta_row(k);
                prop_assert!(row.iter().all(|&p| p > 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            let theta = m.infer_theta(&docs[0], 5, seed);
            prop_assert!(theta.0.iter().all(|&p| p >= 0.0));
            prop_assert!((theta.0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
