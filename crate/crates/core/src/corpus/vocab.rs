use super::Example;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const START: usize = 2;
pub const STOP: usize = 3;
/// Number of reserved ids at the start of every vocabulary.
pub const RESERVED: usize = 4;

const RESERVED_TOKENS: [&str; RESERVED] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token/id map with the reserved ids `PAD`, `UNK`, `START`, `STOP` first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<String>", try_from = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(all: Vec<String>) -> Result<Self> {
        if all.len() < RESERVED || all[..RESERVED] != RESERVED_TOKENS {
            return Err(Error::Input("vocabulary does not start with the reserved tokens".into()));
        }
        Self::from_tokens(all.into_iter().skip(RESERVED))
    }
}

impl Vocabulary {
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut all: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        let mut ids = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::Input(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens: all, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    /// Id of `token`, or `UNK`.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id_or_unk(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(RESERVED_TOKENS[UNK]).to_string())
            .collect()
    }
}

/// Keeps the `max_size - RESERVED` most frequent tokens, ties broken
/// lexicographically.
pub fn build_vocabulary(corpus: &[Example], max_size: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Input("cannot build a vocabulary from an empty corpus".into()));
    }
    if max_size <= RESERVED {
        return Err(Error::Config(format!(
            "vocabulary size {max_size} leaves no room beyond the {RESERVED} reserved tokens"
        )));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for ex in corpus {
        let all = ex
            .document
            .iter()
            .chain(ex.summary.iter())
            .chain(ex.comments.iter().flatten());
        for t in all {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !RESERVED_TOKENS.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_tokens(
        ranked
            .into_iter()
            .take(max_size - RESERVED)
            .map(|(t, _)| t.to_string()),
    )
}

/// Per-example extension of the vocabulary with the document's
/// out-of-vocabulary tokens, numbered from `base_size` upward in order of
/// first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedVocabulary {
    pub base_size: usize,
    pub oov: Vec<String>,
}

impl ExtendedVocabulary {
    pub fn len(&self) -> usize {
        self.base_size + self.oov.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn oov_id(&self, token: &str) -> Option<usize> {
        self.oov.iter().position(|t| t == token).map(|p| self.base_size + p)
    }

    pub fn decode(&self, vocab: &Vocabulary, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| {
                if i >= self.base_size {
                    self.oov
                        .get(i - self.base_size)
                        .cloned()
                        .unwrap_or_else(|| RESERVED_TOKENS[UNK].to_string())
                } else {
                    vocab.token(i).unwrap_or(RESERVED_TOKENS[UNK]).to_string()
                }
            })
            .collect()
    }
}

/// Id-level view of an [`Example`].
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedExample {
    /// Document ids in the base vocabulary (OOV -> `UNK`), used for lookups.
    pub document: Vec<usize>,
    /// Document ids in the extended vocabulary, used as copy targets.
    pub document_ext: Vec<usize>,
    pub comments: Vec<Vec<usize>>,
    pub comment_labels: Option<Vec<u8>>,
    /// Summary ids in the extended vocabulary, without `STOP`.
    pub summary: Vec<usize>,
    pub ext: ExtendedVocabulary,
}

impl EncodedExample {
    /// Decoder targets: the summary followed by `STOP`.
    pub fn targets(&self) -> Vec<usize> {
        let mut t = self.summary.clone();
        t.push(STOP);
        t
    }
}

pub fn encode_example(example: &Example, vocab: &Vocabulary) -> EncodedExample {
    let mut ext = ExtendedVocabulary {
        base_size: vocab.len(),
        oov: Vec::new(),
    };
    let mut document = Vec::with_capacity(example.document.len());
    let mut document_ext = Vec::with_capacity(example.document.len());
    for t in &example.document {
        match vocab.id(t) {
            Some(id) => {
                document.push(id);
                document_ext.push(id);
            }
            None => {
                let id = match ext.oov_id(t) {
                    Some(id) => id,
                    None => {
                        ext.oov.push(t.clone());
                        ext.len() - 1
                    }
                };
                document.push(UNK);
                document_ext.push(id);
            }
        }
    }
    let summary = example
        .summary
        .iter()
        .map(|t| vocab.id(t).or_else(|| ext.oov_id(t)).unwrap_or(UNK))
        .collect();
    EncodedExample {
        document,
        document_ext,
        comments: example.comments.iter().map(|c| vocab.encode(c)).collect(),
        comment_labels: example.comment_labels.clone(),
        summary,
        ext,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use proptest::prelude::*;

    fn ex(doc: &str, comments: &[&str], summary: &str) -> Example {
        Example {
            document: tokenize(doc),
            comments: comments.iter().map(|c| tokenize(c)).collect(),
            summary: tokenize(summary),
            comment_labels: None,
        }
    }

    #[test]
    fn frequency_then_lexicographic() {
        let v = build_vocabulary(&[ex("a a a b", &[], "a")], RESERVED + 1).unwrap();
        assert_eq!(v.len(), RESERVED + 1);
        assert!(v.id("a").is_some() && v.id("b").is_none());
        let v = build_vocabulary(&[ex("b b a", &[], "a")], RESERVED + 1).unwrap();
        assert_eq!(v.token(RESERVED), Some("a"));
    }

    #[test]
    fn reserved_ids_are_fixed() {
        let v = build_vocabulary(&[ex("x", &[], "y")], 100).unwrap();
        assert_eq!(v.id("<pad>"), Some(PAD));
        assert_eq!(v.id("<unk>"), Some(UNK));
        assert_eq!(v.id("<s>"), Some(START));
        assert_eq!(v.id("</s>"), Some(STOP));
    }

    #[test]
    fn empty_corpus_and_tiny_size_fail() {
        assert!(build_vocabulary(&[], 10).is_err());
        assert!(build_vocabulary(&[ex("a", &[], "a")], RESERVED).is_err());
    }

    #[test]
    fn in_vocab_example_has_no_extension() {
        let e = ex("a b c", &["b"], "a c");
        let v = build_vocabulary(std::slice::from_ref(&e), 100).unwrap();
        let enc = encode_example(&e, &v);
        assert!(enc.ext.oov.is_empty());
        assert_eq!(enc.document, enc.document_ext);
    }

    #[test]
    fn copied_oov_shares_extended_id() {
        let v = build_vocabulary(&[ex("a b", &[], "a")], 100).unwrap();
        let e = ex("a zorp b", &[], "zorp a blip");
        let enc = encode_example(&e, &v);
        let zorp = enc.document_ext[1];
        assert_eq!(zorp, v.len());
        assert_eq!(enc.document[1], UNK);
        assert_eq!(enc.summary[0], zorp);
        assert_eq!(enc.summary[2], UNK);
        assert_eq!(enc.ext.decode(&v, &[zorp]), vec!["zorp".to_string()]);
    }

    proptest! {
        #[test]
        fn decode_inverts_encode_in_vocab(words in proptest::collection::vec("[a-e]{1,3}", 1..20)) {
            let e = Example { document: words.clone(), comments: vec![], summary: words.clone(), comment_labels: None };
            let v = build_vocabulary(&[e], 1000).unwrap();
            prop_assert_eq!(v.decode(&v.encode(&words)), words);
        }
    }
}
