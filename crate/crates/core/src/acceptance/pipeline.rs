//! Small end-to-end runs shared by several criteria: fit LDA on training
//! articles, train a model, decode a document set.

use std::ops::ControlFlow;

use crate::corpus::{DocumentPair, Vocabulary, NUM_SPECIALS};
use crate::decoding::{summarize, DecodeConfig};
use crate::error::Result;
use crate::model::{Mode, ModelConfig, ModelParams};
use crate::topic_model::{fit_lda, lda_document, LdaConfig, TopicModel};
use crate::training::{evaluate_example, prepare_examples, train, EpochLoss, Example, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDims {
    pub embed: usize,
    pub hidden: usize,
    pub attn: usize,
    pub switch_hidden: usize,
}

impl ModelDims {
    pub fn config(&self, vocab: usize, topics: usize, mode: Mode, cov: bool) -> ModelConfig {
        ModelConfig {
            switch_hidden: self.switch_hidden,
            ..ModelConfig::new(vocab, topics, mode, cov).with_dims(
                self.embed,
                self.hidden,
                self.attn,
            )
        }
    }
}

/// Fits LDA on the training articles only.
pub fn fit_topics(
    train: &[DocumentPair],
    vocab: &Vocabulary,
    cfg: &LdaConfig,
) -> Result<TopicModel> {
    let docs: Vec<Vec<usize>> = train
        .iter()
        .map(|p| lda_document(vocab, &p.article))
        .collect();
    fit_lda(&docs, vocab.len() - NUM_SPECIALS, cfg)
}

pub struct Trained {
    pub params: ModelParams,
    pub history: Vec<EpochLoss>,
    pub examples: Vec<Example>,
    pub epochs_run: usize,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Mean per-token NLL of `examples` under `params`.
pub fn mean_nll(params: &ModelParams, examples: &[Example], cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        total += evaluate_example(params, ex, cfg)?.0;
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Ends training after the first epoch for which the predicate holds.
pub type StopRule<'a> = &'a dyn Fn(&ModelParams, &[Example]) -> Result<bool>;

/// Stop once the training-set NLL falls below `limit`.
pub fn nll_below(
    limit: f64,
    cfg: &TrainConfig,
) -> impl Fn(&ModelParams, &[Example]) -> Result<bool> + '_ {
    move |p, examples| Ok(mean_nll(p, examples, cfg)? < limit)
}

/// Trains a fresh model on `pairs`, checking `stop` after every epoch.
/// With a non-empty `val`, the parameters of the epoch with the lowest
/// validation NLL are kept; otherwise the last epoch's.
pub fn train_model(
    pairs: &[DocumentPair],
    val: &[DocumentPair],
    vocab: &Vocabulary,
    topics: Option<&TopicModel>,
    dims: ModelDims,
    cfg: &TrainConfig,
    stop: Option<StopRule>,
) -> Result<Trained> {
    let k = topics.map_or(1, TopicModel::topics);
    let model_cfg = dims.config(vocab.len(), k, cfg.mode, cfg.use_coverage);
    let tm = if cfg.mode == Mode::Tag { topics } else { None };
    let params = ModelParams::init(model_cfg, cfg.seed, tm)?;
    let examples = prepare_examples(pairs, vocab, tm, cfg.max_src_len, cfg.max_tgt_len, cfg.seed)?;
    let val_examples =
        prepare_examples(val, vocab, tm, cfg.max_src_len, cfg.max_tgt_len, cfg.seed)?;
    let mut epochs_run = 0;
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let outcome = train(
        params,
        &examples,
        &val_examples,
        cfg,
        |epoch, p, history| {
            epochs_run = epoch;
            if let Some(v) = history.last().filter(|h| h.split == "val") {
                if best.as_ref().is_none_or(|b| v.mean_nll < b.0) {
                    best = Some((v.mean_nll, epoch, p.clone()));
                }
            }
            if let Some(rule) = stop {
                if rule(p, &examples)? {
                    return Ok(ControlFlow::Break(()));
                }
            }
            Ok(ControlFlow::Continue(()))
        },
    )?;
    let (params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (outcome.params, epochs_run),
    };
    Ok(Trained {
        params,
        history: outcome.history,
        examples,
        epochs_run,
        best_epoch,
    })
}

/// Decodes `docs`, returning the token sequences.
pub fn decode_all(
    params: &ModelParams,
    vocab: &Vocabulary,
    topics: Option<&TopicModel>,
    docs: &[DocumentPair],
    max_src_len: usize,
    cfg: &DecodeConfig,
    seed: u64,
) -> Result<Vec<Vec<String>>> {
    let tm = if params.config().mode == Mode::Tag {
        topics
    } else {
        None
    };
    Ok(summarize(params, vocab, tm, docs, max_src_len, cfg, seed)?
        .into_iter()
        .map(|(_, words)| words)
        .collect())
}
