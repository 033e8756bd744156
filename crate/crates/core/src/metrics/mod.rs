//! ROUGE, the Lead-3 baseline and topic-coherence scoring.

pub mod coherence;
pub mod report;
pub mod rouge;

pub use coherence::{coherence_eval, topic_kl, BoxStats, CoherenceReport, SystemCoherence};
pub use report::{evaluate_systems, EvaluationReport, SystemSummary, TopicInputs};
pub use rouge::{
    corpus_rouge, count_wins, lcs_len, lead3, rouge_l, rouge_n, CorpusRouge, Prf, RougeMeans,
    RougeScores,
};
