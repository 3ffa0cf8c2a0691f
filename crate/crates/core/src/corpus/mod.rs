//! Corpus records, tokenization, comment labeling, and JSONL serialization.

mod synthetic;
mod vocab;

pub use synthetic::{make_synthetic_corpus, SyntheticConfig};
pub use vocab::{build_vocabulary, encode_example, EncodedExample, ExtendedVocabulary, Vocabulary};
pub use vocab::{PAD, RESERVED, START, STOP, UNK};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

/// One document with its reader comments and reference summary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub document: Vec<String>,
    pub comments: Vec<Vec<String>>,
    pub summary: Vec<String>,
    /// Helpfulness label per comment, when known.
    pub comment_labels: Option<Vec<u8>>,
}

impl Example {
    pub fn validate(&self) -> Result<()> {
        if self.document.is_empty() {
            return Err(Error::Input("empty document".into()));
        }
        if self.summary.is_empty() {
            return Err(Error::Input("empty summary".into()));
        }
        if self.comments.iter().any(Vec::is_empty) {
            return Err(Error::Input("empty comment".into()));
        }
        if let Some(labels) = &self.comment_labels {
            if labels.len() != self.comments.len() {
                return Err(Error::Input(format!(
                    "{} labels for {} comments",
                    labels.len(),
                    self.comments.len()
                )));
            }
            if labels.iter().any(|&l| l > 1) {
                return Err(Error::Input("labels must be 0 or 1".into()));
            }
        }
        Ok(())
    }

    /// Fills `comment_labels` using [`label_comments`].
    pub fn with_labels(mut self, stopwords: &HashSet<String>) -> Self {
        self.comment_labels = Some(label_comments(&self.summary, &self.comments, stopwords));
        self
    }
}

/// Line format of the JSONL corpus files.
#[derive(Debug, Serialize, Deserialize)]
struct ExampleRecord {
    document: String,
    comments: Vec<String>,
    summary: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    comment_labels: Option<Vec<u8>>,
}

/// Lowercases, splits on whitespace, and splits every non-alphanumeric
/// character into its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if ch.is_alphanumeric() {
                word.extend(ch.to_lowercase());
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(ch.to_string());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| !c.is_alphanumeric())
}

const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "if", "of", "to", "in", "into", "on", "at", "by", "for",
    "with", "from", "as", "is", "are", "was", "were", "be", "been", "being", "it", "its", "this",
    "that", "these", "those", "i", "you", "he", "she", "we", "they", "me", "him", "her", "us",
    "them", "my", "your", "his", "our", "their", "s", "t", "do", "does", "did", "have", "has",
    "had", "will", "would", "can", "could", "should", "so", "not", "no", "very", "too", "just",
    "than", "then", "there", "here", "what", "which", "who", "about", "up", "out", "all",
];

pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// Reads one stopword per line; blank lines and `#` comments are skipped.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

fn content_words<'a>(tokens: &'a [String], stopwords: &HashSet<String>) -> HashSet<&'a str> {
    tokens
        .iter()
        .map(String::as_str)
        .filter(|t| !is_punctuation(t) && !stopwords.contains(*t))
        .collect()
}

/// A comment is helpful (`1`) when it shares at least one non-stopword,
/// non-punctuation token with the summary.
pub fn label_comments(
    summary: &[String],
    comments: &[Vec<String>],
    stopwords: &HashSet<String>,
) -> Vec<u8> {
    let summary_words = content_words(summary, stopwords);
    comments
        .iter()
        .map(|c| {
            let shared = c
                .iter()
                .any(|t| !is_punctuation(t) && !stopwords.contains(t) && summary_words.contains(t.as_str()));
            u8::from(shared)
        })
        .collect()
}

pub fn write_jsonl(path: &Path, examples: &[Example]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&to_jsonl(examples)?)?;
    out.flush()?;
    Ok(())
}

pub fn to_jsonl(examples: &[Example]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for ex in examples {
        let rec = ExampleRecord {
            document: ex.document.join(" "),
            comments: ex.comments.iter().map(|c| c.join(" ")).collect(),
            summary: ex.summary.join(" "),
            comment_labels: ex.comment_labels.clone(),
        };
        serde_json::to_writer(&mut buf, &rec)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Example>> {
    let file = std::fs::File::open(path)?;
    let mut examples = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExampleRecord = serde_json::from_str(&line)?;
        let ex = Example {
            document: tokenize(&rec.document),
            comments: rec
                .comments
                .iter()
                .map(|c| tokenize(c))
                .collect(),
            summary: tokenize(&rec.summary),
            comment_labels: rec.comment_labels,
        };
        ex.validate()
            .map_err(|e| Error::Input(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        examples.push(ex);
    }
    Ok(examples)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Written next to the split files by `make-corpus`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub config: SyntheticConfig,
    pub config_hash: String,
    pub splits: BTreeMap<String, SplitInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub file: String,
    pub examples: usize,
    pub sha256: String,
}

/// Train/dev/test split sizes for `n` examples (80/10/10, remainder to train).
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let dev = n / 10;
    let test = n / 10;
    (n - dev - test, dev, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_splits_punctuation_and_lowercases() {
        assert_eq!(toks("Toyota's  Uber, OK."), ["toyota", "'", "s", "uber", ",", "ok", "."]);
        assert!(toks("   ").is_empty());
    }

    #[test]
    fn labels_shared_content_word() {
        let summary = toks("toyota invests 500 million into uber");
        let comments = vec![toks("toyota's investment in uber is a wise choice"), toks("x y z")];
        let labels = label_comments(&summary, &comments, &default_stopwords());
        assert_eq!(labels, vec![1, 0]);
    }

    #[test]
    fn disjoint_comment_is_unhelpful() {
        let labels = label_comments(&toks("a b c"), &[toks("x y z")], &HashSet::new());
        assert_eq!(labels, vec![0]);
    }

    #[test]
    fn stopwords_do_not_count() {
        let stop: HashSet<String> = ["the".to_string()].into_iter().collect();
        let labels = label_comments(&toks("the cat sat"), &[toks("the dog ran")], &stop);
        assert_eq!(labels, vec![0]);
    }

    #[test]
    fn punctuation_does_not_count() {
        let labels = label_comments(&toks("a , b"), &[toks("x , y")], &HashSet::new());
        assert_eq!(labels, vec![0]);
    }

    #[test]
    fn labels_invariant_to_order_and_duplicates() {
        let summary = toks("red fox jumps");
        let comments = vec![toks("fox fox fox"), toks("blue sky"), toks("jumps high")];
        let stop = default_stopwords();
        let base = label_comments(&summary, &comments, &stop);
        let rev: Vec<_> = comments.iter().rev().cloned().collect();
        let mut rev_labels = label_comments(&summary, &rev, &stop);
        rev_labels.reverse();
        assert_eq!(base, rev_labels);
        let dedup = vec![toks("fox"), toks("blue sky"), toks("jumps high high")];
        assert_eq!(base, label_comments(&summary, &dedup, &stop));
    }

    #[test]
    fn jsonl_round_trip() {
        let ex = Example {
            document: toks("a b . c d ."),
            comments: vec![toks("nice one !")],
            summary: toks("a b"),
            comment_labels: Some(vec![1]),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_jsonl(&path, std::slice::from_ref(&ex)).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), vec![ex]);
    }

    #[test]
    fn validation_catches_label_count() {
        let ex = Example {
            document: toks("a"),
            comments: vec![toks("b")],
            summary: toks("a"),
            comment_labels: Some(vec![1, 0]),
        };
        assert!(ex.validate().is_err());
    }
}
