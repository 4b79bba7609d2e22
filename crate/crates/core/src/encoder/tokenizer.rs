//! Whitespace + punctuation tokenizer over an explicit vocabulary file.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";

/// Token table; id = zero-based line index of the vocab file.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidParameter {
                    name: "vocab",
                    detail: format!("duplicate token \"{t}\""),
                });
            }
        }
        for special in [CLS, SEP, UNK] {
            if !index.contains_key(special) {
                return Err(Error::InvalidParameter {
                    name: "vocab",
                    detail: format!("missing special token {special}"),
                });
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading vocab {}", path.display()), e))?;
        Vocab::new(text.lines().map(|l| l.to_string()).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        std::fs::write(path, out)
            .map_err(|e| Error::io(format!("writing vocab {}", path.display()), e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or_else(|| self.index[UNK])
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn cls_id(&self) -> usize {
        self.index[CLS]
    }

    pub fn sep_id(&self) -> usize {
        self.index[SEP]
    }

    pub fn unk_id(&self) -> usize {
        self.index[UNK]
    }
}

/// Lowercases and splits on whitespace, peeling punctuation characters off as
/// single-character tokens.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        } else if ch.is_alphanumeric() || ch == '\'' {
            current.push(ch);
        } else {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            out.push(ch.to_string());
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Encoded sentence pair: `[CLS] a.. [SEP] b.. [SEP]` with segment ids 0
/// through the first `[SEP]` and 1 after.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub ids: Vec<usize>,
    pub segments: Vec<u8>,
}

/// Tokenizes a sentence pair. Sentence B is truncated first when the total
/// would exceed `max_len`.
pub fn tokenize(vocab: &Vocab, sent_a: &str, sent_b: &str, max_len: usize) -> Result<Encoding> {
    let mut a = split_words(sent_a);
    let mut b = split_words(sent_b);
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySentence);
    }
    // [CLS] + a + [SEP] + b + [SEP]
    while 3 + a.len() + b.len() > max_len && !b.is_empty() {
        b.pop();
    }
    while 3 + a.len() + b.len() > max_len && !a.is_empty() {
        a.pop();
    }

    let mut ids = Vec::with_capacity(3 + a.len() + b.len());
    let mut segments = Vec::with_capacity(ids.capacity());
    ids.push(vocab.cls_id());
    segments.push(0);
    for w in &a {
        ids.push(vocab.id_or_unk(w));
        segments.push(0);
    }
    ids.push(vocab.sep_id());
    segments.push(0);
    for w in &b {
        ids.push(vocab.id_or_unk(w));
        segments.push(1);
    }
    ids.push(vocab.sep_id());
    segments.push(1);
    Ok(Encoding { ids, segments })
}

/// Tokenizes a single sentence as `[CLS] tokens [SEP]`, all segment 0. Used
/// when collecting hidden states for subspace estimation.
pub fn tokenize_single(vocab: &Vocab, sent: &str, max_len: usize) -> Result<Encoding> {
    let mut words = split_words(sent);
    if words.is_empty() {
        return Err(Error::EmptySentence);
    }
    while 2 + words.len() > max_len {
        words.pop();
    }
    let mut ids = Vec::with_capacity(2 + words.len());
    ids.push(vocab.cls_id());
    for w in &words {
        ids.push(vocab.id_or_unk(w));
    }
    ids.push(vocab.sep_id());
    let segments = vec![0; ids.len()];
    Ok(Encoding { ids, segments })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_vocab() -> Vocab {
        Vocab::new(
            ["[CLS]", "[SEP]", "[UNK]", "a", "b", "c", "."]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn pair_layout_and_segments() {
        let v = small_vocab();
        let enc = tokenize(&v, "A b.", "C", 64).unwrap();
        let toks: Vec<&str> = enc.ids.iter().map(|&i| v.token(i)).collect();
        assert_eq!(toks, vec!["[CLS]", "a", "b", ".", "[SEP]", "c", "[SEP]"]);
        assert_eq!(enc.segments, vec![0, 0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn empty_sentence_is_rejected() {
        let v = small_vocab();
        let err = tokenize(&v, "", "x", 64).unwrap_err();
        assert!(err.to_string().contains("empty sentence"));
        assert!(tokenize(&v, "a", "   ", 64).is_err());
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = small_vocab();
        let enc = tokenize(&v, "zzz qqq", "a", 64).unwrap();
        let toks: Vec<&str> = enc.ids.iter().map(|&i| v.token(i)).collect();
        assert_eq!(toks, vec!["[CLS]", "[UNK]", "[UNK]", "[SEP]", "a", "[SEP]"]);
    }

    #[test]
    fn truncates_sentence_b_first() {
        let v = small_vocab();
        let enc = tokenize(&v, "a b", "a b c a b c", 8).unwrap();
        let toks: Vec<&str> = enc.ids.iter().map(|&i| v.token(i)).collect();
        // 8 positions: [CLS] a b [SEP] + 3 of b + [SEP]
        assert_eq!(toks.len(), 8);
        assert_eq!(toks[..4], ["[CLS]", "a", "b", "[SEP]"]);
        assert_eq!(*toks.last().unwrap(), "[SEP]");
    }

    #[test]
    fn single_sentence_layout() {
        let v = small_vocab();
        let enc = tokenize_single(&v, "a b c", 64).unwrap();
        let toks: Vec<&str> = enc.ids.iter().map(|&i| v.token(i)).collect();
        assert_eq!(toks, vec!["[CLS]", "a", "b", "c", "[SEP]"]);
        assert!(enc.segments.iter().all(|&s| s == 0));
    }
}
