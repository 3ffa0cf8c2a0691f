//! Comment salience: which comments are worth listening to.

use crate::encoder::CommentEncoding;
use crate::graph::{Graph, Var};

/// Probabilities are clamped to `[EPS, 1 - EPS]` inside logarithms.
pub const EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug)]
pub struct SalienceParams {
    /// `1 x 4H`, acting on `[a_i; h^d_T]`.
    pub weight: Var,
    pub bias: Var,
}

#[derive(Clone, Debug)]
pub struct SalienceScores {
    /// Average-pooled comment states `a_i`.
    pub pooled: Vec<Var>,
    /// Predicted salience per comment, `None` when there are no comments.
    pub scores: Option<Var>,
}

pub fn comment_salience(
    g: &mut Graph,
    comments: &CommentEncoding,
    doc_final: Var,
    params: &SalienceParams,
) -> SalienceScores {
    let mut pooled = Vec::with_capacity(comments.len());
    let mut logits = Vec::with_capacity(comments.len());
    for &states in &comments.comments {
        let a = g.mean_rows(states);
        let joined = g.concat(&[a, doc_final]);
        let z = g.matvec(params.weight, joined);
        logits.push(g.add(z, params.bias));
        pooled.push(a);
    }
    let scores = if logits.is_empty() {
        None
    } else {
        let z = g.concat(&logits);
        Some(g.sigmoid(z))
    };
    SalienceScores { pooled, scores }
}

/// Binary cross-entropy averaged over comments; `0` without comments.
pub fn denoising_loss(g: &mut Graph, scores: Option<Var>, labels: &[u8]) -> Var {
    let Some(scores) = scores else {
        return g.vector(vec![0.0]);
    };
    assert_eq!(g.size(scores), labels.len(), "one label per comment");
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let not_y: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
    let y = g.vector(y);
    let not_y = g.vector(not_y);
    let log_p = g.log(scores, EPS);
    let q = g.one_minus(scores);
    let log_q = g.log(q, EPS);
    let pos = g.mul(y, log_p);
    let neg = g.mul(not_y, log_q);
    let both = g.add(pos, neg);
    let total = g.sum(both);
    g.scale(total, -1.0 / labels.len() as f64)
}

/// Fraction of helpful comments predicted helpful (`score > 0.5`).
/// `None` when there are no helpful comments.
pub fn recall(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return None;
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| l == 1 && s > 0.5)
        .count();
    Some(hits as f64 / positives as f64)
}
