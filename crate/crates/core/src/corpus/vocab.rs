use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::DocumentPair;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const NUM_SPECIALS: usize = 4;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Bidirectional token/id map. Ids `0..4` are the special tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Specials followed by `words` in the given order. Duplicates and
    /// special-token spellings are rejected.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Result<Self> {
        let mut id_to_token: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(words.iter().map(|w| w.as_ref().to_string()));
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (id, tok) in id_to_token.iter().enumerate() {
            if token_to_id.insert(tok.clone(), id).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate vocabulary token `{tok}`"
                )));
            }
        }
        Ok(Self {
            token_to_id,
            id_to_token,
        })
    }

    /// Counts article and summary tokens, keeps those seen at least
    /// `min_freq` times, ranks by descending frequency with lexicographic
    /// tie-breaking and keeps the top `max_size - 4`.
    pub fn build(corpus: &[DocumentPair], max_size: usize, min_freq: usize) -> Result<Self> {
        if max_size <= NUM_SPECIALS {
            return Err(Error::invalid(format!(
                "vocabulary max_size must be at least {} (got {max_size})",
                NUM_SPECIALS + 1
            )));
        }
        if corpus.is_empty() {
            return Err(Error::invalid(
                "cannot build a vocabulary from an empty corpus",
            ));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for pair in corpus {
            for tok in pair.article.iter().chain(&pair.summary) {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(tok, n)| *n >= min_freq && !SPECIAL_TOKENS.contains(tok))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - NUM_SPECIALS);
        let words: Vec<&str> = ranked.into_iter().map(|(t, _)| t).collect();
        Self::from_words(&words)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn is_special(id: usize) -> bool {
        id < NUM_SPECIALS
    }

    /// Non-special tokens in id order.
    pub fn words(&self) -> &[String] {
        &self.id_to_token[NUM_SPECIALS..]
    }

    /// One token per line; line `n` (0-based) holds id `n + 4`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::new();
        for w in self.words() {
            text.push_str(w);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let words: Vec<&str> = text.lines().collect();
        Self::from_words(&words).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })
    }
}

/// A pair mapped into id space. Extended ids `V..V+U` address the source's
/// out-of-vocabulary tokens, in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub id: String,
    pub src_ids: Vec<usize>,
    pub src_extended_ids: Vec<usize>,
    pub oov_list: Vec<String>,
    /// `BOS y_1 .. y_T EOS`, OOVs as [`UNK`].
    pub tgt_ids: Vec<usize>,
    /// Same framing; source OOVs use their extended id, other OOVs [`UNK`].
    pub tgt_extended_ids: Vec<usize>,
}

impl EncodedPair {
    pub fn vocab_size_with_oovs(&self, vocab: &Vocabulary) -> usize {
        vocab.len() + self.oov_list.len()
    }

    /// Maps an extended id back to its surface token.
    pub fn token<'a>(&'a self, vocab: &'a Vocabulary, id: usize) -> Option<&'a str> {
        if id < vocab.len() {
            vocab.token(id)
        } else {
            self.oov_list.get(id - vocab.len()).map(String::as_str)
        }
    }

    pub fn tokens(&self, vocab: &Vocabulary, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&id| {
                self.token(vocab, id)
                    .map(str::to_string)
                    .ok_or_else(|| Error::invalid(format!("extended id {id} out of range")))
            })
            .collect()
    }
}

/// Encodes an article alone (no target), as used at inference time.
pub fn encode_source(id: &str, article: &[String], vocab: &Vocabulary) -> EncodedPair {
    let mut oov_list: Vec<String> = Vec::new();
    let mut src_ids = Vec::with_capacity(article.len());
    let mut src_extended_ids = Vec::with_capacity(article.len());
    for tok in article {
        match vocab.get(tok) {
            Some(i) => {
                src_ids.push(i);
                src_extended_ids.push(i);
            }
            None => {
                src_ids.push(UNK);
                let j = match oov_list.iter().position(|o| o == tok) {
                    Some(j) => j,
                    None => {
                        oov_list.push(tok.clone());
                        oov_list.len() - 1
                    }
                };
                src_extended_ids.push(vocab.len() + j);
            }
        }
    }
    EncodedPair {
        id: id.to_string(),
        src_ids,
        src_extended_ids,
        oov_list,
        tgt_ids: vec![BOS, EOS],
        tgt_extended_ids: vec![BOS, EOS],
    }
}

pub fn encode_pair(pair: &DocumentPair, vocab: &Vocabulary) -> EncodedPair {
    let mut enc = encode_source(&pair.id, &pair.article, vocab);
    let mut tgt_ids = vec![BOS];
    let mut tgt_extended_ids = vec![BOS];
    for tok in &pair.summary {
        match vocab.get(tok) {
            Some(i) => {
                tgt_ids.push(i);
                tgt_extended_ids.push(i);
            }
            None => {
                tgt_ids.push(UNK);
                let ext = enc
                    .oov_list
                    .iter()
                    .position(|o| o == tok)
                    .map_or(UNK, |j| vocab.len() + j);
                tgt_extended_ids.push(ext);
            }
        }
    }
    tgt_ids.push(EOS);
    tgt_extended_ids.push(EOS);
    enc.tgt_ids = tgt_ids;
    enc.tgt_extended_ids = tgt_extended_ids;
    enc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(article: &str, summary: &str) -> DocumentPair {
        DocumentPair::from_text("t", article, summary)
    }

    #[test]
    fn build_ranks_by_frequency() {
        let v = Vocabulary::build(&[pair("a a b", "")], 10, 1).unwrap();
        assert_eq!(v.get("a"), Some(4));
        assert_eq!(v.get("b"), Some(5));
        assert_eq!(v.len(), 6);
        assert_eq!(v.token(PAD), Some("<pad>"));
        assert_eq!(v.token(EOS), Some("</s>"));
    }

    #[test]
    fn build_breaks_ties_lexicographically_and_truncates() {
        let v = Vocabulary::build(&[pair("d c b a c", "d")], 6, 1).unwrap();
        // counts: c=2, d=2, a=1, b=1
        assert_eq!(v.words(), &["c".to_string(), "d".to_string()]);
    }

    #[test]
    fn build_rejects_tiny_max_size() {
        assert!(Vocabulary::build(&[pair("a", "b")], 4, 1).is_err());
        assert!(Vocabulary::build(&[], 10, 1).is_err());
    }

    #[test]
    fn min_freq_can_remove_everything() {
        let v = Vocabulary::build(&[pair("x", "")], 10, 2).unwrap();
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::build(&[pair("the cat sat on the mat .", "cat")], 50, 1).unwrap();
        v.write(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next(), Some("cat"));
        assert_eq!(Vocabulary::read(&path).unwrap(), v);
    }

    #[test]
    fn encode_maps_oovs_to_extended_ids() {
        let v = Vocabulary::from_words(&["a", "b"]).unwrap();
        let e = encode_pair(&pair("a zzz", "zzz b qqq"), &v);
        assert_eq!(e.src_ids, vec![4, UNK]);
        assert_eq!(e.src_extended_ids, vec![4, 6]);
        assert_eq!(e.oov_list, vec!["zzz".to_string()]);
        assert_eq!(e.tgt_ids, vec![BOS, UNK, 5, UNK, EOS]);
        // qqq is not in the source, so it cannot be copied
        assert_eq!(e.tgt_extended_ids, vec![BOS, 6, 5, UNK, EOS]);
    }

    #[test]
    fn encode_without_oov_is_identity() {
        let v = Vocabulary::from_words(&["a", "b"]).unwrap();
        let e = encode_pair(&pair("a b a", "b"), &v);
        assert_eq!(e.src_ids, e.src_extended_ids);
        assert!(e.oov_list.is_empty());
    }

    #[test]
    fn encode_deduplicates_oovs() {
        let v = Vocabulary::from_words(&["a"]).unwrap();
        let e = encode_pair(&pair("zzz a zzz", "a"), &v);
        assert_eq!(e.src_extended_ids, vec![5, 4, 5]);
        assert_eq!(e.oov_list, vec!["zzz".to_string()]);
    }

    proptest! {
        #[test]
        fn extended_ids_round_trip(words in proptest::collection::vec("[a-f]{1,2}", 1..30)) {
            let v = Vocabulary::from_words(&["a", "b", "c"]).unwrap();
            let p = DocumentPair { id: "p".into(), article: words.clone(), summary: words.clone() };
            let e = encode_pair(&p, &v);
            prop_assert_eq!(e.tokens(&v, &e.src_extended_ids).unwrap(), words.clone());
            for (i, &x) in e.src_extended_ids.iter().enumerate() {
                prop_assert_eq!(x >= v.len(), v.get(&words[i]).is_none());
            }
            let inner = &e.tgt_extended_ids[1..e.tgt_extended_ids.len() - 1];
            prop_assert_eq!(e.tokens(&v, inner).unwrap(), words);
        }

        #[test]
        fn build_is_deterministic(words in proptest::collection::vec("[a-h]{1,2}", 1..40)) {
            let p = DocumentPair { id: "p".into(), article: words.clone(), summary: vec![] };
            let a = Vocabulary::build(std::slice::from_ref(&p), 12, 1).unwrap();
            let mut rev = words.clone();
            rev.reverse();
            let q = DocumentPair { id: "q".into(), article: rev, summary: vec![] };
            let b = Vocabulary::build(&[q], 12, 1).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
