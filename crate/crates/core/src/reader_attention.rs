//! Reader attention: which document words the comments point at.
//!
//! Every document word is aligned to every comment word by an embedding
//! dot product. The strongest match inside each comment is kept, comments
//! are combined with their salience weights, and a softmax over document
//! positions gives the reader attention. Its weighted sum of document
//! states is the reader-focused aspect.

use crate::encoder::DocumentEncoding;
use crate::graph::{Graph, Var};

#[derive(Clone, Debug)]
pub struct Alignment {
    /// `T^d x (sum of comment lengths)`; column block `j` belongs to comment `j`.
    pub scores: Var,
    pub comment_lens: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ReaderFocus {
    pub alignment: Option<Alignment>,
    /// `T^d x T^c` per-comment maxima.
    pub comment_max: Option<Var>,
    /// Pre-softmax scores.
    pub logits: Var,
    /// Distribution over document positions.
    pub attention: Var,
    /// Reader-focused aspect vector.
    pub aspect: Var,
}

/// Embedding dot products between each document word and each comment
/// word. With `cosine` the embeddings are length-normalised first.
/// Returns `None` when there are no comments.
pub fn alignment_scores(
    g: &mut Graph,
    embeddings: Var,
    doc_ids: &[usize],
    comment_ids: &[Vec<usize>],
    cosine: bool,
) -> Option<Alignment> {
    if comment_ids.is_empty() {
        return None;
    }
    let flat: Vec<usize> = comment_ids.concat();
    let mut doc = g.gather_rows(embeddings, doc_ids);
    let mut com = g.gather_rows(embeddings, &flat);
    if cosine {
        doc = g.row_l2_normalize(doc);
        com = g.row_l2_normalize(com);
    }
    Some(Alignment {
        scores: g.matmul_t(doc, com),
        comment_lens: comment_ids.iter().map(Vec::len).collect(),
    })
}

pub fn comment_max(g: &mut Graph, alignment: &Alignment) -> Var {
    g.segment_max(alignment.scores, &alignment.comment_lens)
}

/// Salience-weighted sum over comments followed by a softmax over
/// document positions. `salience = None` weights every comment by one.
/// Without comments the attention is uniform. Returns `(logits, attention)`.
pub fn reader_attention(
    g: &mut Graph,
    comment_max: Option<Var>,
    salience: Option<Var>,
    doc_len: usize,
) -> (Var, Var) {
    let logits = match comment_max {
        None => g.zeros(doc_len),
        Some(delta) => {
            let (rows, n_comments) = g.shape(delta);
            assert_eq!(rows, doc_len);
            let weights = match salience {
                Some(s) => s,
                None => g.vector(vec![1.0; n_comments]),
            };
            g.matvec(delta, weights)
        }
    };
    let attention = g.softmax(logits);
    (logits, attention)
}

pub fn reader_aspect(g: &mut Graph, attention: Var, doc: &DocumentEncoding) -> Var {
    g.weighted_rows(doc.states, attention)
}

/// The full pipeline from ids to [`ReaderFocus`].
pub fn reader_focus(
    g: &mut Graph,
    embeddings: Var,
    doc_ids: &[usize],
    comment_ids: &[Vec<usize>],
    salience: Option<Var>,
    doc: &DocumentEncoding,
    cosine: bool,
) -> ReaderFocus {
    let alignment = alignment_scores(g, embeddings, doc_ids, comment_ids, cosine);
    let delta = alignment.as_ref().map(|a| comment_max(g, a));
    let (logits, attention) = reader_attention(g, delta, salience, doc_ids.len());
    let aspect = reader_aspect(g, attention, doc);
    ReaderFocus {
        alignment,
        comment_max: delta,
        logits,
        attention,
        aspect,
    }
}
