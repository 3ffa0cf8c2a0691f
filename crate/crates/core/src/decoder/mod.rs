//! Attention decoder with a pointer-copy output layer.
//!
//! The pieces here are the per-step building blocks; the model wires them
//! together with the supervisor and goal tracker in the order
//! state -> attention -> focus/gap -> goal -> output distribution.

mod beam;

pub use beam::{beam_search, greedy, Hypothesis, StepModel};

use crate::encoder::{lstm_cell, DocumentEncoding, LstmParams};
use crate::error::Result;
use crate::graph::{Graph, Var};

/// Probabilities are floored here before taking the log in the NLL.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    /// `A x D`, applied to the decoder state.
    pub state: Var,
    /// `A x 2H`, applied to each document state.
    pub memory: Var,
    /// `A`-vector scoring the joint features.
    pub score: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectionParams {
    /// `V x (D + G + 2H)` over `[s_t; g_t; d_t]`.
    pub weight: Var,
    pub bias: Var,
    /// `1 x (2H + D + E)` over `[f_t; s_t; e(y_{t-1})]`.
    pub pointer: Var,
    pub pointer_bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub hidden: Var,
    pub cell: Var,
    /// Context vector consumed by the next transition.
    pub context: Var,
}

/// Initial decoder state from the last document state. Cell and context
/// start at zero.
pub fn init_decoder(g: &mut Graph, doc_final: Var, weight: Var, bias: Var, context_dim: usize) -> DecoderState {
    let z = g.matvec(weight, doc_final);
    let hidden = g.add(z, bias);
    let dim = g.size(hidden);
    DecoderState {
        hidden,
        cell: g.zeros(dim),
        context: g.zeros(context_dim),
    }
}

/// Advances the recurrent state on `[f_{t-1}; e(y_{t-1})]`. The returned
/// state still carries the previous context; attention replaces it.
pub fn transition(g: &mut Graph, lstm: &LstmParams, prev: DecoderState, prev_embedding: Var) -> Result<DecoderState> {
    let input = g.concat(&[prev.context, prev_embedding]);
    let (hidden, cell) = lstm_cell(g, lstm, prev.hidden, prev.cell, input)?;
    Ok(DecoderState {
        hidden,
        cell,
        context: prev.context,
    })
}

/// Document-side attention features, computed once per example.
pub fn attention_memory(g: &mut Graph, params: &AttentionParams, doc: &DocumentEncoding) -> Var {
    g.matmul_t(doc.states, params.memory)
}

/// Additive attention. Returns `(α_t, f_t)`.
pub fn attention(
    g: &mut Graph,
    params: &AttentionParams,
    memory: Var,
    hidden: Var,
    doc: &DocumentEncoding,
) -> (Var, Var) {
    let q = g.matvec(params.state, hidden);
    let joint = g.add_row_broadcast(memory, q);
    let joint = g.tanh(joint);
    let logits = g.matvec(joint, params.score);
    let alpha = g.softmax(logits);
    let context = g.weighted_rows(doc.states, alpha);
    (alpha, context)
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    /// Distribution over the extended vocabulary.
    pub dist: Var,
    pub p_gen: Var,
}

/// Mixes the vocabulary softmax with copying from the document.
///
/// `doc_ext` gives each document position's id in the extended
/// vocabulary of size `ext_len`.
#[allow(clippy::too_many_arguments)]
pub fn output_projection(
    g: &mut Graph,
    params: &ProjectionParams,
    hidden: Var,
    goal: Var,
    gap: Var,
    context: Var,
    prev_embedding: Var,
    alpha: Var,
    doc_ext: &[usize],
    ext_len: usize,
) -> StepOutput {
    let features = g.concat(&[hidden, goal, gap]);
    let logits = g.matvec(params.weight, features);
    let logits = g.add(logits, params.bias);
    let vocab = g.softmax(logits);
    let gate_in = g.concat(&[context, hidden, prev_embedding]);
    let z = g.matvec(params.pointer, gate_in);
    let z = g.add(z, params.pointer_bias);
    let p_gen = g.sigmoid(z);
    let dist = mix(g, vocab, alpha, p_gen, doc_ext, ext_len);
    StepOutput { dist, p_gen }
}

/// `p_gen * pad(vocab) + (1 - p_gen) * scatter(alpha)`.
pub fn mix(g: &mut Graph, vocab: Var, alpha: Var, p_gen: Var, doc_ext: &[usize], ext_len: usize) -> Var {
    let generated = g.pad(vocab, ext_len);
    let generated = g.scale_by(generated, p_gen);
    let copied = g.scatter(alpha, doc_ext, ext_len);
    let p_copy = g.one_minus(p_gen);
    let copied = g.scale_by(copied, p_copy);
    g.add(generated, copied)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// Negative log-likelihood of `targets` under the step distributions.
pub fn nll_loss(g: &mut Graph, dists: &[Var], targets: &[usize], reduction: Reduction) -> Var {
    let steps = dists.len().min(targets.len());
    if steps < targets.len() {
        log::warn!("gold summary of {} tokens truncated to {steps} steps", targets.len());
    }
    if steps == 0 {
        return g.vector(vec![0.0]);
    }
    let picked: Vec<Var> = (0..steps).map(|t| g.pick(dists[t], targets[t])).collect();
    let p = g.concat(&picked);
    let logp = g.log(p, PROB_FLOOR);
    let total = g.sum(logp);
    let scale = match reduction {
        Reduction::Mean => -1.0 / steps as f64,
        Reduction::Sum => -1.0,
    };
    g.scale(total, scale)
}
