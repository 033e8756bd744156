use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::coherence::{coherence_eval, CoherenceReport};
use super::rouge::{corpus_rouge, count_wins, CorpusRouge};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::topic_model::TopicModel;

/// One row of the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSummary {
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub kl_median: Option<f64>,
    pub kl_q1: Option<f64>,
    pub kl_q3: Option<f64>,
    pub kl_min: Option<f64>,
    pub kl_max: Option<f64>,
    pub wins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub rouge: Vec<CorpusRouge>,
    pub coherence: Option<CoherenceReport>,
    pub summary: BTreeMap<String, SystemSummary>,
}

pub struct TopicInputs<'a, S> {
    pub model: &'a TopicModel,
    pub vocab: &'a Vocabulary,
    pub documents: &'a [Vec<S>],
    pub seed: u64,
}

/// Scores every named system against the references, and against the
/// source documents' topics when `topics` is given.
pub fn evaluate_systems<S: AsRef<str>>(
    ids: &[String],
    references: &[Vec<S>],
    systems: &[(String, Vec<Vec<S>>)],
    topics: Option<TopicInputs<'_, S>>,
) -> Result<EvaluationReport> {
    if systems.is_empty() {
        return Err(Error::invalid("no systems to evaluate"));
    }
    if ids.len() != references.len() {
        return Err(Error::invalid(format!(
            "{} ids for {} references",
            ids.len(),
            references.len()
        )));
    }
    let mut names: Vec<String> = systems.iter().map(|(n, _)| n.clone()).collect();
    names.sort();
    names.dedup();
    if names.len() != systems.len() {
        return Err(Error::invalid("system names must be unique"));
    }
    let names: Vec<String> = systems.iter().map(|(n, _)| n.clone()).collect();
    let rouge = systems
        .iter()
        .map(|(name, c)| {
            corpus_rouge(c, references).map_err(|e| Error::invalid(format!("system {name}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let wins = count_wins(&rouge.iter().collect::<Vec<_>>())?;
    let coherence = topics
        .map(|t| coherence_eval(t.model, t.vocab, t.documents, systems, t.seed))
        .transpose()?;

    let summary = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let stats = coherence.as_ref().map(|c| c.systems[i].stats);
            let row = SystemSummary {
                rouge1: rouge[i].mean.rouge1,
                rouge2: rouge[i].mean.rouge2,
                rouge_l: rouge[i].mean.rouge_l,
                kl_median: stats.map(|s| s.median),
                kl_q1: stats.map(|s| s.q1),
                kl_q3: stats.map(|s| s.q3),
                kl_min: stats.map(|s| s.min),
                kl_max: stats.map(|s| s.max),
                wins: wins[i],
            };
            (name.clone(), row)
        })
        .collect();
    Ok(EvaluationReport {
        ids: ids.to_vec(),
        names,
        rouge,
        coherence,
        summary,
    })
}

impl EvaluationReport {
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("report always serializes")
    }

    /// Long-format table: one row per (document, system).
    pub fn per_pair_csv(&self) -> String {
        let mut out = String::from(
            "id,system,rouge1_p,rouge1_r,rouge1_f,rouge2_p,rouge2_r,rouge2_f,rougeL_p,rougeL_r,rougeL_f,kl\n",
        );
        for (d, id) in self.ids.iter().enumerate() {
            for (s, name) in self.names.iter().enumerate() {
                let r = &self.rouge[s].per_pair[d];
                let kl = self
                    .coherence
                    .as_ref()
                    .map(|c| c.systems[s].kl[d].to_string())
                    .unwrap_or_default();
                let _ = write!(out, "{},{}", csv_field(id), csv_field(name));
                for p in [r.rouge1, r.rouge2, r.rouge_l] {
                    let _ = write!(out, ",{},{},{}", p.precision, p.recall, p.f1);
                }
                let _ = writeln!(out, ",{kl}");
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        fs::write(&json, self.summary_json() + "\n").map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("per_pair.csv");
        fs::write(&csv, self.per_pair_csv()).map_err(|e| Error::io(&csv, e))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_candidates_score_one_and_report_serializes() {
        let refs = vec![toks("a b c"), toks("d e")];
        let ids = vec!["1".to_string(), "x,y".to_string()];
        let systems = vec![
            ("ref".to_string(), refs.clone()),
            ("other".to_string(), vec![toks("a"), toks("q")]),
        ];
        let rep = evaluate_systems(&ids, &refs, &systems, None).unwrap();
        let r = &rep.summary["ref"];
        assert_eq!((r.rouge1, r.rouge2, r.rouge_l, r.wins), (1.0, 1.0, 1.0, 2));
        assert_eq!(rep.summary["other"].wins, 0);
        let json: serde_json::Value = serde_json::from_str(&rep.summary_json()).unwrap();
        assert_eq!(json["ref"]["rougeL"], 1.0);
        assert!(json["ref"]["kl_median"].is_null());
        let csv = rep.per_pair_csv();
        assert_eq!(csv.lines().count(), 1 + 4);
        assert!(csv.contains("\"x,y\",ref,"));
    }

    #[test]
    fn rejects_bad_inputs() {
        let refs = vec![toks("a")];
        let ids = vec!["1".to_string()];
        assert!(evaluate_systems::<String>(&ids, &refs, &[], None).is_err());
        let dup = vec![
            ("a".to_string(), refs.clone()),
            ("a".to_string(), refs.clone()),
        ];
        assert!(evaluate_systems(&ids, &refs, &dup, None).is_err());
        let short = vec![("a".to_string(), vec![])];
        assert!(evaluate_systems(&ids, &refs, &short, None).is_err());
    }
}
