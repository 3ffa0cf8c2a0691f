//! ROUGE-N and ROUGE-L on raw tokens (no stemming, no stopword removal).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// From an overlap count and the two totals; zero when either total is.
    pub fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Self {
        if candidate == 0 || reference == 0 {
            return Self::default();
        }
        let precision = overlap as f64 / candidate as f64;
        let recall = overlap as f64 / reference as f64;
        // Harmonic mean of P and R reduced to one division, so F1 is the
        // correctly rounded value of an exact fraction.
        let f1 = (2 * overlap) as f64 / (candidate + reference) as f64;
        Self { precision, recall, f1 }
    }
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap.
pub fn rouge_n<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> Result<Prf> {
    if n == 0 {
        return Err(Error::Input("ROUGE-N needs n >= 1".into()));
    }
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    Ok(Prf::from_counts(
        overlap,
        cand.values().sum(),
        refs.values().sum(),
    ))
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> Prf {
    Prf::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// ROUGE-1, ROUGE-2 and ROUGE-L of one candidate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
}

impl RougeScores {
    pub fn score<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> Self {
        Self {
            rouge1: rouge_n(candidate, reference, 1).expect("n is positive"),
            rouge2: rouge_n(candidate, reference, 2).expect("n is positive"),
            rouge_l: rouge_l(candidate, reference),
        }
    }

    /// Arithmetic mean of every field.
    pub fn mean(all: &[RougeScores]) -> Self {
        if all.is_empty() {
            return Self::default();
        }
        let n = all.len() as f64;
        let avg = |f: fn(&RougeScores) -> Prf| {
            let (p, r, f1) = all.iter().map(f).fold((0.0, 0.0, 0.0), |acc, x| {
                (acc.0 + x.precision, acc.1 + x.recall, acc.2 + x.f1)
            });
            Prf {
                precision: p / n,
                recall: r / n,
                f1: f1 / n,
            }
        };
        Self {
            rouge1: avg(|s| s.rouge1),
            rouge2: avg(|s| s.rouge2),
            rouge_l: avg(|s| s.rouge_l),
        }
    }
}
