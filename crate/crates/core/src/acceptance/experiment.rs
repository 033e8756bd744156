//! PG versus TAG on a planted-topic corpus under identical seeds and
//! training budgets.

use serde::Serialize;

use super::pipeline::{decode_all, fit_topics, mean_nll, train_model, ModelDims};
use crate::corpus::{generate_synthetic, DocumentPair, SyntheticConfig, Vocabulary};
use crate::decoding::DecodeConfig;
use crate::error::Result;
use crate::metrics::{evaluate_systems, lead3, EvaluationReport, TopicInputs};
use crate::model::Mode;
use crate::topic_model::{LdaConfig, TopicModel};
use crate::training::{prepare_examples, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub topics: usize,
    pub vocab_words: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub doc_len: usize,
    pub sum_len: usize,
    pub lda_alpha: f64,
    pub lda_sweeps: usize,
    pub dims: [usize; 4],
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub use_coverage: bool,
    pub beam_size: usize,
    pub max_len: usize,
}

impl ExperimentConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            topics: 4,
            vocab_words: 60,
            n_train: 300,
            n_val: 50,
            n_test: 100,
            doc_len: 24,
            sum_len: 6,
            lda_alpha: 0.1,
            lda_sweeps: 200,
            dims: [32, 32, 32, 32],
            epochs: 20,
            learning_rate: 0.005,
            batch_size: 4,
            use_coverage: false,
            beam_size: 4,
            max_len: 8,
        }
    }

    fn model_dims(&self) -> ModelDims {
        let [embed, hidden, attn, switch_hidden] = self.dims;
        ModelDims {
            embed,
            hidden,
            attn,
            switch_hidden,
        }
    }

    fn train_config(&self, mode: Mode) -> TrainConfig {
        TrainConfig {
            mode,
            use_coverage: self.use_coverage,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            beam_size: self.beam_size,
            max_len: self.max_len,
            ..DecodeConfig::default()
        }
    }
}

pub struct Experiment {
    pub train: Vec<DocumentPair>,
    pub val: Vec<DocumentPair>,
    pub test: Vec<DocumentPair>,
    pub vocab: Vocabulary,
    pub topic_model: TopicModel,
    pub report: EvaluationReport,
    /// Decoded test summaries per system, Lead-3 included.
    pub outputs: Vec<(String, Vec<Vec<String>>)>,
    /// Per system: (name, kept epoch, train NLL, held-out test NLL).
    pub final_nll: Vec<(String, usize, f64, f64)>,
}

pub const PG: &str = "PG";
pub const TAG: &str = "TAG";
pub const LEAD3: &str = "Lead-3";

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let corpus = generate_synthetic(&SyntheticConfig {
        topics: cfg.topics,
        vocab_words: cfg.vocab_words,
        n_docs: cfg.n_train + cfg.n_val + cfg.n_test,
        doc_len: cfg.doc_len,
        sum_len: cfg.sum_len,
        seed: cfg.seed,
    })?;
    let mut train = corpus.pairs;
    let mut val = train.split_off(cfg.n_train);
    let test = val.split_off(cfg.n_val);
    let vocab = Vocabulary::build(&train, usize::MAX, 1)?;
    let lda = LdaConfig {
        alpha: cfg.lda_alpha,
        sweeps: cfg.lda_sweeps,
        seed: cfg.seed,
        ..LdaConfig::new(cfg.topics)
    };
    let topic_model = fit_topics(&train, &vocab, &lda)?;

    let decode = cfg.decode_config();
    let mut systems = Vec::new();
    let mut final_nll = Vec::new();
    for (name, mode) in [(PG, Mode::Pg), (TAG, Mode::Tag)] {
        let tc = cfg.train_config(mode);
        let trained = train_model(
            &train,
            &val,
            &vocab,
            Some(&topic_model),
            cfg.model_dims(),
            &tc,
            None,
        )?;
        let tm = (mode == Mode::Tag).then_some(&topic_model);
        let held_out =
            prepare_examples(&test, &vocab, tm, tc.max_src_len, tc.max_tgt_len, cfg.seed)?;
        final_nll.push((
            name.to_string(),
            trained.best_epoch,
            mean_nll(&trained.params, &trained.examples, &tc)?,
            mean_nll(&trained.params, &held_out, &tc)?,
        ));
        let out = decode_all(
            &trained.params,
            &vocab,
            Some(&topic_model),
            &test,
            tc.max_src_len,
            &decode,
            cfg.seed,
        )?;
        systems.push((name.to_string(), out));
    }
    systems.push((
        LEAD3.to_string(),
        test.iter().map(|p| lead3(&p.article)).collect(),
    ));

    let ids: Vec<String> = test.iter().map(|p| p.id.clone()).collect();
    let references: Vec<Vec<String>> = test.iter().map(|p| p.summary.clone()).collect();
    let documents: Vec<Vec<String>> = test.iter().map(|p| p.article.clone()).collect();
    let report = evaluate_systems(
        &ids,
        &references,
        &systems,
        Some(TopicInputs {
            model: &topic_model,
            vocab: &vocab,
            documents: &documents,
            seed: cfg.seed,
        }),
    )?;
    Ok(Experiment {
        train,
        val,
        test,
        vocab,
        topic_model,
        report,
        outputs: systems,
        final_nll,
    })
}
