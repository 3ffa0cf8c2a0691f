//! Scoring generated summaries, the LEAD1 baseline, and the two training
//! diagnostics (comment-salience recall and decoder/reader focus distance).

mod rouge;

pub use rouge::{lcs_len, rouge_l, rouge_n, Prf, RougeScores};

use crate::corpus::{encode_example, is_punctuation, Example};
use crate::denoising;
use crate::error::{Error, Result};
use crate::model::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const SENTENCE_END: [&str; 4] = [".", "!", "?", "…"];

/// First non-empty sentence of a tokenized document, or the whole
/// document when it has no sentence-ending token.
pub fn lead1(document: &[String]) -> Vec<String> {
    let mut sentence = Vec::new();
    for tok in document {
        if SENTENCE_END.contains(&tok.as_str()) {
            if sentence.iter().any(|t: &String| !is_punctuation(t)) {
                return sentence;
            }
            sentence.clear();
        } else {
            sentence.push(tok.clone());
        }
    }
    if sentence.iter().any(|t| !is_punctuation(t)) {
        sentence
    } else {
        document.to_vec()
    }
}

/// `normalize(alpha + mix * reader)`.
pub fn s2sr_mode(alpha: &[f64], reader: &[f64], mix: f64) -> Vec<f64> {
    let sum: Vec<f64> = alpha.iter().zip(reader).map(|(a, e)| a + mix * e).collect();
    let total: f64 = sum.iter().sum();
    sum.iter().map(|v| v / total).collect()
}

/// `1 - cos(a, b)`; `1` when either vector is zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        1.0
    } else {
        1.0 - dot / (na * nb)
    }
}

/// Worker count from `RASG_THREADS`, defaulting to the available cores.
pub fn threads_from_env() -> usize {
    std::env::var("RASG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Order-preserving parallel map over contiguous chunks.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                let f = &f;
                s.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(i, x)| f(c * chunk + i, x))
                        .collect::<Vec<R>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub beam: usize,
    pub max_len: usize,
    pub threads: usize,
    /// Keep per-step attention in the generation records.
    pub dump_attention: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            beam: 5,
            max_len: 40,
            threads: 1,
            dump_attention: false,
        }
    }
}

/// One line of the per-example generation output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub id: usize,
    pub generated: String,
    pub reference: String,
    pub scores: RougeScores,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attention: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reader_attention: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub system: String,
    pub examples: usize,
    pub mean: RougeScores,
    pub per_example: Vec<RougeScores>,
    /// `true` when the scores are recall rather than F1 in tables.
    #[serde(default)]
    pub recall_only: bool,
}

impl RougeReport {
    pub fn new(system: &str, per_example: Vec<RougeScores>) -> Self {
        Self {
            system: system.to_string(),
            examples: per_example.len(),
            mean: RougeScores::mean(&per_example),
            per_example,
            recall_only: false,
        }
    }

    fn headline(&self, p: Prf) -> f64 {
        if self.recall_only {
            p.recall
        } else {
            p.f1
        }
    }

    /// ROUGE-1/2/L headline numbers in points.
    pub fn points(&self) -> [f64; 3] {
        [
            100.0 * self.headline(self.mean.rouge1),
            100.0 * self.headline(self.mean.rouge2),
            100.0 * self.headline(self.mean.rouge_l),
        ]
    }
}

fn check_split(examples: &[Example]) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::Input("cannot evaluate an empty split".into()));
    }
    Ok(())
}

/// Scores already-generated candidates against their references.
pub fn score_candidates(system: &str, candidates: &[Vec<String>], examples: &[Example]) -> Result<(RougeReport, Vec<GeneratedRecord>)> {
    check_split(examples)?;
    let records: Vec<GeneratedRecord> = candidates
        .iter()
        .zip(examples)
        .enumerate()
        .map(|(id, (c, ex))| GeneratedRecord {
            id,
            generated: c.join(" "),
            reference: ex.summary.join(" "),
            scores: RougeScores::score(c, &ex.summary),
            attention: None,
            reader_attention: None,
        })
        .collect();
    let report = RougeReport::new(system, records.iter().map(|r| r.scores).collect());
    Ok((report, records))
}

pub fn evaluate_lead1(examples: &[Example]) -> Result<(RougeReport, Vec<GeneratedRecord>)> {
    let candidates: Vec<Vec<String>> = examples.iter().map(|e| lead1(&e.document)).collect();
    score_candidates("LEAD1", &candidates, examples)
}

/// Decodes every example with beam search and scores the output.
pub fn evaluate_model(model: &Model, examples: &[Example], opts: &EvalOptions) -> Result<(RougeReport, Vec<GeneratedRecord>)> {
    check_split(examples)?;
    let generated = parallel_map(examples, opts.threads, |_, ex| {
        let enc = encode_example(ex, &model.vocab);
        model.generate(&enc, opts.beam, opts.max_len)
    });
    let generated = generated.into_iter().collect::<Result<Vec<_>>>()?;
    let candidates: Vec<Vec<String>> = generated.iter().map(|g| g.tokens.clone()).collect();
    let (report, mut records) = score_candidates(model.variant().label(), &candidates, examples)?;
    if opts.dump_attention {
        for (r, g) in records.iter_mut().zip(generated) {
            r.attention = Some(g.attention);
            r.reader_attention = g.reader_attention;
        }
    }
    Ok((report, records))
}

/// Split-level diagnostics of a model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Share of helpful comments scored above 0.5, pooled over the split.
    pub denoise_recall: Option<f64>,
    /// Mean `1 - cos(ν_T, ε)` under greedy decoding.
    pub cosine_distance: Option<f64>,
}

/// Salience recall over the labelled comments of `examples`.
pub fn denoise_recall(model: &Model, examples: &[Example], threads: usize) -> Result<Option<f64>> {
    let per = parallel_map(examples, threads, |_, ex| -> Result<(usize, usize)> {
        let Some(labels) = &ex.comment_labels else {
            return Ok((0, 0));
        };
        let enc = encode_example(ex, &model.vocab);
        let Some(scores) = model.salience(&enc)? else {
            return Ok((0, 0));
        };
        let positives = labels.iter().filter(|&&l| l == 1).count();
        let hits = denoising::recall(&scores, labels).map_or(0, |r| (r * positives as f64).round() as usize);
        Ok((hits, positives))
    });
    let (mut hits, mut positives) = (0, 0);
    for r in per {
        let (h, p) = r?;
        hits += h;
        positives += p;
    }
    Ok((positives > 0).then(|| hits as f64 / positives as f64))
}

/// Mean cosine distance between the decoder focus at the last greedy step
/// and the reader attention. `None` for variants without either.
pub fn focus_distance(model: &Model, examples: &[Example], threads: usize) -> Result<Option<f64>> {
    let per = parallel_map(examples, threads, |_, ex| -> Result<Option<f64>> {
        let enc = encode_example(ex, &model.vocab);
        let g = model.generate(&enc, 1, model.config.max_decode_len)?;
        Ok(match (g.final_focus, g.reader_attention) {
            (Some(nu), Some(eps)) => Some(cosine_distance(&nu, &eps)),
            _ => None,
        })
    });
    let values: Vec<f64> = per.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    Ok((!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64))
}

pub fn diagnostics(model: &Model, examples: &[Example], threads: usize) -> Result<Diagnostics> {
    Ok(Diagnostics {
        denoise_recall: denoise_recall(model, examples, threads)?,
        cosine_distance: focus_distance(model, examples, threads)?,
    })
}

/// Markdown comparison table, one row per system, scores in points.
pub fn markdown_table(reports: &[RougeReport]) -> String {
    let mut out = String::from("| System | ROUGE-1 | ROUGE-2 | ROUGE-L |\n|---|---|---|---|\n");
    for r in reports {
        let [r1, r2, rl] = r.points();
        out.push_str(&format!("| {} | {r1:.2} | {r2:.2} | {rl:.2} |\n", r.system));
    }
    out
}

/// Two-sided paired permutation test on per-example scores: the share of
/// random sign flips whose mean difference is at least as extreme as the
/// observed one.
pub fn paired_permutation_test(a: &[f64], b: &[f64], rounds: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Input("paired test needs two equally long, non-empty samples".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let observed = diffs.iter().sum::<f64>().abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..rounds {
        let s: f64 = diffs
            .iter()
            .map(|d| if rng.gen::<bool>() { *d } else { -*d })
            .sum();
        if s.abs() >= observed - 1e-12 {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (rounds + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    #[test]
    fn lead1_fixtures() {
        assert_eq!(lead1(&tokenize("a b . c d .")), tokenize("a b"));
        assert_eq!(lead1(&tokenize("a b c")), tokenize("a b c"));
        assert_eq!(lead1(&tokenize("… a b . c")), tokenize("a b"));
        assert_eq!(lead1(&tokenize(". . x ! y")), tokenize("x"));
        assert_eq!(lead1(&tokenize("a , b ? c")), tokenize("a , b"));
    }

    #[test]
    fn lead1_scores_one_when_summary_is_first_sentence() {
        let ex = Example {
            document: tokenize("the cat sat . then it left ."),
            comments: vec![],
            summary: tokenize("the cat sat"),
            comment_labels: None,
        };
        let (report, _) = evaluate_lead1(&[ex]).unwrap();
        assert_eq!(report.mean.rouge1.f1, 1.0);
        assert_eq!(report.mean.rouge_l.f1, 1.0);
    }

    #[test]
    fn copying_the_reference_scores_one() {
        let ex = Example {
            document: tokenize("x y z ."),
            comments: vec![],
            summary: tokenize("a b c d"),
            comment_labels: None,
        };
        let (report, records) = score_candidates("copy", std::slice::from_ref(&ex.summary), std::slice::from_ref(&ex)).unwrap();
        assert_eq!(report.points(), [100.0, 100.0, 100.0]);
        assert_eq!(records[0].generated, "a b c d");
    }

    #[test]
    fn empty_split_is_an_error() {
        assert!(evaluate_lead1(&[]).is_err());
    }

    #[test]
    fn s2sr_fixtures() {
        let alpha = [0.2, 0.5, 0.3];
        assert_eq!(s2sr_mode(&alpha, &[1.0, 0.0, 0.0], 0.0), alpha.to_vec());
        let adj = s2sr_mode(&[0.5, 0.5], &[1.0, 0.0], 1.0);
        assert!((adj[0] - 0.75).abs() < 1e-15 && (adj[1] - 0.25).abs() < 1e-15);
        let adj = s2sr_mode(&alpha, &[0.1, 0.1, 0.8], 2.5);
        assert!((adj.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_fixtures() {
        assert!(cosine_distance(&[0.2, 0.8], &[0.2, 0.8]).abs() < 1e-15);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn parallel_map_keeps_order() {
        let xs: Vec<usize> = (0..37).collect();
        for threads in [1, 2, 5, 64] {
            let ys = parallel_map(&xs, threads, |i, x| i * 100 + x);
            assert_eq!(ys, xs.iter().map(|x| x * 101).collect::<Vec<_>>());
        }
    }

    #[test]
    fn permutation_test_separates_clear_differences() {
        let a: Vec<f64> = (0..30).map(|i| 0.5 + 0.01 * i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x - 0.2).collect();
        assert!(paired_permutation_test(&a, &b, 999, 1).unwrap() < 0.01);
        let p = paired_permutation_test(&a, &a, 999, 1).unwrap();
        assert_eq!(p, 1.0);
        assert!(paired_permutation_test(&a, &b[..3], 10, 1).is_err());
    }

    #[test]
    fn markdown_has_one_row_per_system() {
        let r = RougeReport::new("LEAD1", vec![RougeScores::score(&["a"], &["a"])]);
        let table = markdown_table(&[r.clone(), RougeReport { system: "B".into(), ..r }]);
        assert_eq!(table.lines().count(), 4);
        assert!(table.contains("| LEAD1 | 100.00 | 0.00 | 100.00 |"));
    }
}
