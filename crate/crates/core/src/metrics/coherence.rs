use serde::Serialize;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::topic_model::{lda_document, TopicModel, TopicVector, DEFAULT_FOLD_IN_SWEEPS};
use crate::training::theta_seed;

/// KL(p ‖ q) in nats, with 0 · ln 0 taken as 0.
pub fn topic_kl(p: &TopicVector, q: &TopicVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension {
            what: "topic vector length",
            expected: p.len(),
            actual: q.len(),
        });
    }
    let kl: f64 = p
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .filter(|(&pk, _)| pk > 0.0)
        .map(|(&pk, &qk)| pk * (pk / qk).ln())
        .sum();
    // Rounding can leave a value a few ulps below zero when p ≈ q.
    Ok(kl.max(0.0))
}

/// Five-number summary; quartiles interpolate linearly between order
/// statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("box statistics of an empty sample"));
        }
        if values.iter().any(|x| x.is_nan()) {
            return Err(Error::NonFinite("box statistics sample".into()));
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(Self {
            min: s[0],
            q1: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            q3: quantile(&s, 0.75),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemCoherence {
    pub name: String,
    /// KL(θ*_document ‖ θ*_summary) per document.
    pub kl: Vec<f64>,
    pub stats: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub systems: Vec<SystemCoherence>,
}

impl CoherenceReport {
    pub fn system(&self, name: &str) -> Option<&SystemCoherence> {
        self.systems.iter().find(|s| s.name == name)
    }
}

/// Infers θ* for every document and every summary, then scores each
/// summary by its divergence from its document. Document `i` and all of
/// its summaries share the fold-in seed `theta_seed(seed, i)`.
pub fn coherence_eval<S: AsRef<str>>(
    topic_model: &TopicModel,
    vocab: &Vocabulary,
    documents: &[Vec<S>],
    systems: &[(String, Vec<Vec<S>>)],
    seed: u64,
) -> Result<CoherenceReport> {
    if systems.is_empty() {
        return Err(Error::invalid(
            "coherence evaluation needs at least one system",
        ));
    }
    topic_model.check_vocab(vocab)?;
    for (name, sums) in systems {
        if sums.len() != documents.len() {
            return Err(Error::invalid(format!(
                "system {name}: {} summaries for {} documents",
                sums.len(),
                documents.len()
            )));
        }
    }
    let infer = |tokens: &[S], i: usize| {
        topic_model.infer_theta(
            &lda_document(vocab, tokens),
            DEFAULT_FOLD_IN_SWEEPS,
            theta_seed(seed, i),
        )
    };
    let doc_theta: Vec<TopicVector> = documents
        .iter()
        .enumerate()
        .map(|(i, d)| infer(d, i))
        .collect();
    let systems = systems
        .iter()
        .map(|(name, sums)| {
            let kl = sums
                .iter()
                .enumerate()
                .map(|(i, s)| topic_kl(&doc_theta[i], &infer(s, i)))
                .collect::<Result<Vec<f64>>>()?;
            let stats = BoxStats::from_values(&kl)?;
            Ok(SystemCoherence {
                name: name.clone(),
                kl,
                stats,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherenceReport { systems })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tv(v: &[f64]) -> TopicVector {
        TopicVector(v.to_vec())
    }

    #[test]
    fn kl_examples() {
        let p = tv(&[0.2, 0.3, 0.5]);
        assert_eq!(topic_kl(&p, &p).unwrap(), 0.0);
        let k = topic_kl(&tv(&[1.0, 0.0]), &tv(&[0.5, 0.5])).unwrap();
        assert!((k - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(topic_kl(&p, &tv(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn box_stats_interpolate() {
        let s = BoxStats::from_values(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(
            s,
            BoxStats {
                min: 1.0,
                q1: 1.75,
                median: 2.5,
                q3: 3.25,
                max: 4.0
            }
        );
        let one = BoxStats::from_values(&[7.0]).unwrap();
        assert_eq!((one.min, one.median, one.max), (7.0, 7.0, 7.0));
        assert!(BoxStats::from_values(&[]).is_err());
    }

    fn distribution(k: usize) -> impl Strategy<Value = TopicVector> {
        prop::collection::vec(1e-6f64..1.0, k).prop_map(|v| {
            let z: f64 = v.iter().sum();
            TopicVector(v.into_iter().map(|x| x / z).collect())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn kl_nonnegative_and_zero_on_identity(
            (p, q) in (1usize..8).prop_flat_map(|k| (distribution(k), distribution(k)))
        ) {
            prop_assert!(topic_kl(&p, &q).unwrap() >= 0.0);
            prop_assert_eq!(topic_kl(&p, &p).unwrap(), 0.0);
        }
    }
}
