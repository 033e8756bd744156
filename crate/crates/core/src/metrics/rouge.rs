use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

use crate::corpus::is_sentence_end;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Scores from an overlap count and the two totals. Either total being
    /// zero gives all zeros.
    pub fn from_counts(overlap: usize, cand_total: usize, ref_total: usize) -> Self {
        if cand_total == 0 || ref_total == 0 {
            return Self::default();
        }
        let precision = overlap as f64 / cand_total as f64;
        let recall = overlap as f64 / ref_total as f64;
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Prf {
    assert!(n >= 1, "rouge_n needs n ≥ 1");
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    Prf::from_counts(
        overlap,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> Prf {
    Prf::from_counts(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RougeScores {
    pub rouge1: Prf,
    pub rouge2: Prf,
    #[serde(rename = "rougeL")]
    pub rouge_l: Prf,
}

impl RougeScores {
    pub fn compute<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> Self {
        Self {
            rouge1: rouge_n(candidate, reference, 1),
            rouge2: rouge_n(candidate, reference, 2),
            rouge_l: rouge_l(candidate, reference),
        }
    }

    /// Mean of the three F1 values; used to decide per-document wins.
    pub fn mean_f1(&self) -> f64 {
        (self.rouge1.f1 + self.rouge2.f1 + self.rouge_l.f1) / 3.0
    }
}

/// First three sentences, ending at `.`, `!` or `?` tokens.
pub fn lead3<S: AsRef<str> + Clone>(article: &[S]) -> Vec<S> {
    let mut seen = 0;
    for (i, tok) in article.iter().enumerate() {
        if is_sentence_end(tok.as_ref()) {
            seen += 1;
            if seen == 3 {
                return article[..=i].to_vec();
            }
        }
    }
    article.to_vec()
}

/// Mean F1 over the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RougeMeans {
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRouge {
    pub per_pair: Vec<RougeScores>,
    pub mean: RougeMeans,
}

pub fn corpus_rouge<S: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<S>],
) -> Result<CorpusRouge> {
    if candidates.len() != references.len() {
        return Err(Error::Dimension {
            what: "candidate/reference count",
            expected: references.len(),
            actual: candidates.len(),
        });
    }
    let per_pair: Vec<RougeScores> = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| {
            let c: Vec<&str> = c.iter().map(AsRef::as_ref).collect();
            let r: Vec<&str> = r.iter().map(AsRef::as_ref).collect();
            RougeScores::compute(&c, &r)
        })
        .collect();
    let n = per_pair.len().max(1) as f64;
    let mean = RougeMeans {
        rouge1: per_pair.iter().map(|s| s.rouge1.f1).sum::<f64>() / n,
        rouge2: per_pair.iter().map(|s| s.rouge2.f1).sum::<f64>() / n,
        rouge_l: per_pair.iter().map(|s| s.rouge_l.f1).sum::<f64>() / n,
    };
    Ok(CorpusRouge { per_pair, mean })
}

/// For each system, the number of documents on which its mean F1 is
/// strictly higher than every other system's.
pub fn count_wins(systems: &[&CorpusRouge]) -> Result<Vec<usize>> {
    let Some(first) = systems.first() else {
        return Ok(Vec::new());
    };
    let n = first.per_pair.len();
    if let Some(bad) = systems.iter().find(|s| s.per_pair.len() != n) {
        return Err(Error::Dimension {
            what: "per-pair table length",
            expected: n,
            actual: bad.per_pair.len(),
        });
    }
    let mut wins = vec![0; systems.len()];
    for d in 0..n {
        let scores: Vec<f64> = systems.iter().map(|s| s.per_pair[d].mean_f1()).collect();
        for (i, &x) in scores.iter().enumerate() {
            if scores.iter().enumerate().all(|(j, &y)| j == i || x > y) {
                wins[i] += 1;
            }
        }
    }
    Ok(wins)
}
