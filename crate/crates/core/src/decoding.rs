//! Greedy and beam-search generation over the extended vocabulary.

use std::cmp::Ordering;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tagsum_autodiff::Tape;

use crate::corpus::{encode_source, DocumentPair, EncodedPair, Vocabulary, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::model::{DecoderState, ModelParams, Net, Source};
use crate::topic_model::{lda_document, TopicModel, TopicVector, DEFAULT_FOLD_IN_SWEEPS};
use crate::training::theta_seed;

pub const DEFAULT_BEAM_SIZE: usize = 4;
pub const DEFAULT_MIN_LEN: usize = 2;
pub const DEFAULT_MAX_LEN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub max_len: usize,
    pub min_len: usize,
    pub length_norm: bool,
    /// Forces the topic weight to zero and renormalizes the other two.
    pub disable_topic_channel: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_size: DEFAULT_BEAM_SIZE,
            max_len: DEFAULT_MAX_LEN,
            min_len: DEFAULT_MIN_LEN,
            length_norm: true,
            disable_topic_channel: false,
        }
    }
}

impl DecodeConfig {
    pub fn greedy(max_len: usize, min_len: usize) -> Self {
        Self {
            beam_size: 1,
            max_len,
            min_len,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::invalid("beam size must be at least 1"));
        }
        if self.max_len == 0 {
            return Err(Error::invalid("max_len must be at least 1"));
        }
        if self.min_len > self.max_len {
            return Err(Error::invalid(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }

    /// Ranking score: the summed log probability, divided by the number of
    /// emitted tokens (EOS included) when length normalization is on.
    pub fn score(&self, log_prob: f64, emitted: usize) -> f64 {
        if self.length_norm && emitted > 0 {
            log_prob / emitted as f64
        } else {
            log_prob
        }
    }
}

/// A partial or complete output during search.
#[derive(Clone)]
pub struct Hypothesis {
    /// Extended ids, without BOS and without the final EOS.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: DecoderState,
    pub finished: bool,
    /// True when the hypothesis ended by emitting EOS.
    pub ended_with_eos: bool,
}

impl Hypothesis {
    pub fn emitted(&self) -> usize {
        self.tokens.len() + usize::from(self.ended_with_eos)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub score: f64,
}

impl Decoded {
    pub fn words(&self, src: &EncodedPair, vocab: &Vocabulary) -> Result<Vec<String>> {
        src.tokens(vocab, &self.tokens)
    }
}

struct Search<'t> {
    net: Net<'t>,
    source: Source,
    cfg: DecodeConfig,
}

impl<'t> Search<'t> {
    fn new(
        tape: &'t Tape,
        params: &ModelParams,
        src: &EncodedPair,
        theta: Option<&TopicVector>,
        cfg: DecodeConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if src.src_ids.is_empty() {
            return Err(Error::invalid(format!("document {}: empty source", src.id)));
        }
        let net = Net::constant(tape, params);
        let net = if cfg.disable_topic_channel {
            net.close_topic_channel()
        } else {
            net
        };
        let source = net.prepare(src, theta)?;
        Ok(Self { net, source, cfg })
    }

    fn start(&self) -> Hypothesis {
        Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            state: self.net.initial_state(&self.source),
            finished: false,
            ended_with_eos: false,
        }
    }

    /// Log probabilities of the next token with PAD and BOS always masked,
    /// and EOS masked until `min_len` tokens have been emitted.
    fn expand(&self, hyp: &Hypothesis) -> Result<(Vec<f64>, crate::model::Step)> {
        let step = self.net.decode_step(&self.source, &hyp.state)?;
        let mut lp: Vec<f64> = step.dist.values().iter().map(|p| p.ln()).collect();
        lp[PAD] = f64::NEG_INFINITY;
        lp[BOS] = f64::NEG_INFINITY;
        if hyp.tokens.len() < self.cfg.min_len {
            lp[EOS] = f64::NEG_INFINITY;
        }
        Ok((lp, step))
    }

    fn extend(
        &self,
        hyp: &Hypothesis,
        step: &crate::model::Step,
        token: usize,
        lp: f64,
    ) -> Hypothesis {
        let mut tokens = hyp.tokens.clone();
        let eos = token == EOS;
        if !eos {
            tokens.push(token);
        }
        let finished = eos || tokens.len() >= self.cfg.max_len;
        Hypothesis {
            tokens,
            log_prob: hyp.log_prob + lp,
            state: step.next_state(token),
            finished,
            ended_with_eos: eos,
        }
    }

    fn finish(&self, hyp: Hypothesis) -> Decoded {
        let score = self.cfg.score(hyp.log_prob, hyp.emitted());
        Decoded {
            tokens: hyp.tokens,
            log_prob: hyp.log_prob,
            score,
        }
    }
}

/// Highest log probability first; equal values go to the lower id.
fn by_log_prob(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

fn top_k(lp: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut c: Vec<(usize, f64)> = lp
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, x)| *x > f64::NEG_INFINITY)
        .collect();
    c.sort_by(by_log_prob);
    c.truncate(k);
    c
}

/// Picks the most probable token at every step.
pub fn greedy_decode(
    params: &ModelParams,
    src: &EncodedPair,
    theta: Option<&TopicVector>,
    cfg: &DecodeConfig,
) -> Result<Decoded> {
    let tape = Tape::new();
    let search = Search::new(&tape, params, src, theta, *cfg)?;
    let mut hyp = search.start();
    while !hyp.finished {
        let (lp, step) = search.expand(&hyp)?;
        let &(token, p) = top_k(&lp, 1)
            .first()
            .ok_or_else(|| Error::NonFinite("decoder distribution".into()))?;
        hyp = search.extend(&hyp, &step, token, p);
    }
    Ok(search.finish(hyp))
}

/// Beam search. Returns up to `beam_size` hypotheses ranked by score,
/// best first.
pub fn beam_search(
    params: &ModelParams,
    src: &EncodedPair,
    theta: Option<&TopicVector>,
    cfg: &DecodeConfig,
) -> Result<Vec<Decoded>> {
    let tape = Tape::new();
    let search = Search::new(&tape, params, src, theta, *cfg)?;
    let width = cfg.beam_size;
    let mut live = vec![search.start()];
    let mut done: Vec<Hypothesis> = Vec::new();
    while !live.is_empty() && done.len() < width {
        // (parent, token, total log prob, token log prob)
        let mut candidates: Vec<(usize, usize, f64, f64)> = Vec::new();
        let mut steps = Vec::with_capacity(live.len());
        for (h, hyp) in live.iter().enumerate() {
            let (lp, step) = search.expand(hyp)?;
            for (token, p) in top_k(&lp, 2 * width) {
                candidates.push((h, token, hyp.log_prob + p, p));
            }
            steps.push(step);
        }
        candidates.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.0.cmp(&b.0))
        });
        let mut next = Vec::with_capacity(width);
        for (h, token, _, p) in candidates {
            let hyp = search.extend(&live[h], &steps[h], token, p);
            if hyp.finished {
                done.push(hyp);
                if done.len() >= width {
                    break;
                }
            } else {
                next.push(hyp);
                if next.len() >= width {
                    break;
                }
            }
        }
        live = next;
    }
    if done.is_empty() {
        done = live;
    }
    let mut out: Vec<Decoded> = done.into_iter().map(|h| search.finish(h)).collect();
    out.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
    Ok(out)
}

/// Best sequence under `cfg`: greedy for beam size 1, otherwise the top beam.
pub fn decode(
    params: &ModelParams,
    src: &EncodedPair,
    theta: Option<&TopicVector>,
    cfg: &DecodeConfig,
) -> Result<Decoded> {
    if cfg.beam_size == 1 {
        return greedy_decode(params, src, theta, cfg);
    }
    beam_search(params, src, theta, cfg)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::invalid(format!("document {}: beam search found nothing", src.id)))
}

/// One line of the batch summarization output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub id: String,
    pub summary: String,
    pub score: f64,
}

/// Summarizes every article. The topic vector of document `i` is inferred
/// from its truncated article with seed `theta_seed(seed, i)`, matching
/// how training examples are prepared.
pub fn summarize(
    params: &ModelParams,
    vocab: &Vocabulary,
    topic_model: Option<&TopicModel>,
    docs: &[DocumentPair],
    max_src_len: usize,
    cfg: &DecodeConfig,
    seed: u64,
) -> Result<Vec<(SummaryRow, Vec<String>)>> {
    if params.config().vocab_size != vocab.len() {
        return Err(Error::Dimension {
            what: "vocabulary size",
            expected: params.config().vocab_size,
            actual: vocab.len(),
        });
    }
    docs.iter()
        .enumerate()
        .map(|(i, doc)| {
            let article: Vec<String> = doc.article.iter().take(max_src_len).cloned().collect();
            let src = encode_source(&doc.id, &article, vocab);
            let theta = topic_model.map(|tm| {
                tm.infer_theta(
                    &lda_document(vocab, &article),
                    DEFAULT_FOLD_IN_SWEEPS,
                    theta_seed(seed, i),
                )
            });
            let best = decode(params, &src, theta.as_ref(), cfg)?;
            let words = best.words(&src, vocab)?;
            let row = SummaryRow {
                id: doc.id.clone(),
                summary: crate::corpus::detokenize(&words),
                score: best.score,
            };
            Ok((row, words))
        })
        .collect()
}

pub fn write_summaries(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).expect("summary rows always serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summaries(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
