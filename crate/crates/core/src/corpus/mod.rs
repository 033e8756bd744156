//! Tokenization, datasets and vocabularies.

mod synthetic;
mod vocab;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synthetic::{
    generate_copy_task, generate_synthetic, synthetic_word, topic_block, SyntheticConfig,
    SyntheticCorpus, SENTENCE_WORDS,
};
pub use vocab::{
    encode_pair, encode_source, EncodedPair, Vocabulary, BOS, EOS, NUM_SPECIALS, PAD,
    SPECIAL_TOKENS, UNK,
};

/// Characters split off as standalone tokens.
pub const PUNCTUATION: [char; 11] = ['.', ',', '!', '?', ';', ':', '"', '\'', '(', ')', '-'];

/// Lowercases, splits on whitespace and splits every punctuation mark into
/// its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for ch in word.chars() {
            if PUNCTUATION.contains(&ch) {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(ch.to_string());
            } else {
                current.extend(ch.to_lowercase());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn is_punctuation(token: &str) -> bool {
    let mut chars = token.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if PUNCTUATION.contains(&c))
}

pub fn is_sentence_end(token: &str) -> bool {
    matches!(token, "." | "!" | "?")
}

/// An article and its reference summary, already tokenized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentPair {
    pub id: String,
    pub article: Vec<String>,
    pub summary: Vec<String>,
}

impl DocumentPair {
    pub fn from_text(id: impl Into<String>, article: &str, summary: &str) -> Self {
        Self {
            id: id.into(),
            article: tokenize(article),
            summary: tokenize(summary),
        }
    }

    pub fn truncated(&self, max_article: usize, max_summary: usize) -> Self {
        Self {
            id: self.id.clone(),
            article: self.article.iter().take(max_article).cloned().collect(),
            summary: self.summary.iter().take(max_summary).cloned().collect(),
        }
    }
}

#[derive(Deserialize)]
struct RawPair {
    article: String,
    summary: String,
    #[serde(default)]
    id: Option<String>,
}

#[derive(Serialize)]
struct RawPairOut<'a> {
    id: &'a str,
    article: String,
    summary: String,
}

/// Reads a JSONL dataset: one `{"article", "summary", "id"?}` object per
/// line. Blank lines are skipped; ids default to the 1-based line number.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<DocumentPair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPair = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let id = raw.id.unwrap_or_else(|| line_no.to_string());
        pairs.push(DocumentPair::from_text(id, &raw.article, &raw.summary));
    }
    Ok(pairs)
}

pub fn write_jsonl(path: impl AsRef<Path>, pairs: &[DocumentPair]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for pair in pairs {
        let raw = RawPairOut {
            id: &pair.id,
            article: detokenize(&pair.article),
            summary: detokenize(&pair.summary),
        };
        let line = serde_json::to_string(&raw).expect("plain strings always serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
