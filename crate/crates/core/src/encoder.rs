//! Bi-directional LSTM encoders over the shared embedding table.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};

/// Weights of one LSTM direction: `weight` is `4H x (I + H)` over `[x; h]`
/// with gate blocks input, forget, output, candidate; `bias` is `4H`.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

/// One LSTM transition. Returns `(hidden, cell)`.
pub fn lstm_cell(
    g: &mut Graph,
    params: &LstmParams,
    prev_hidden: Var,
    prev_cell: Var,
    input: Var,
) -> Result<(Var, Var)> {
    let hidden = g.size(prev_hidden);
    let (rows, cols) = g.shape(params.weight);
    if rows != 4 * hidden || cols != g.size(input) + hidden {
        return Err(Error::Shape(format!(
            "lstm weight {rows}x{cols} for input {} and hidden {hidden}",
            g.size(input)
        )));
    }
    if g.size(params.bias) != 4 * hidden || g.size(prev_cell) != hidden {
        return Err(Error::Shape(format!(
            "lstm bias {} / cell {} for hidden {hidden}",
            g.size(params.bias),
            g.size(prev_cell)
        )));
    }
    let out = g.lstm(params.weight, params.bias, input, prev_hidden, prev_cell);
    Ok((g.slice(out, 0, hidden), g.slice(out, hidden, hidden)))
}

fn run_direction(g: &mut Graph, params: &LstmParams, inputs: &[Var], reverse: bool) -> Result<Vec<Var>> {
    let hidden = g.shape(params.weight).0 / 4;
    let mut h = g.zeros(hidden);
    let mut c = g.zeros(hidden);
    let mut states = vec![h; inputs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..inputs.len()).rev())
    } else {
        Box::new(0..inputs.len())
    };
    for t in order {
        (h, c) = lstm_cell(g, params, h, c, inputs[t])?;
        states[t] = h;
    }
    Ok(states)
}

/// Runs both directions over `ids` and stacks `[forward_t; backward_t]` as
/// the rows of a `T x 2H` matrix.
pub fn encode_sequence(g: &mut Graph, embeddings: Var, ids: &[usize], params: &BiLstmParams) -> Result<Var> {
    if ids.is_empty() {
        return Err(Error::Input("cannot encode an empty sequence".into()));
    }
    let rows = g.gather_rows(embeddings, ids);
    let inputs: Vec<Var> = (0..ids.len()).map(|t| g.row(rows, t)).collect();
    let fw = run_direction(g, &params.forward, &inputs, false)?;
    let bw = run_direction(g, &params.backward, &inputs, true)?;
    let joined: Vec<Var> = fw
        .iter()
        .zip(&bw)
        .map(|(&f, &b)| g.concat(&[f, b]))
        .collect();
    Ok(g.stack_rows(&joined))
}

#[derive(Clone, Copy, Debug)]
pub struct DocumentEncoding {
    /// `T^d x 2H`.
    pub states: Var,
    /// Row `T^d` of `states`, used as the document representation.
    pub final_state: Var,
    pub len: usize,
}

pub fn encode_document(
    g: &mut Graph,
    embeddings: Var,
    ids: &[usize],
    params: &BiLstmParams,
) -> Result<DocumentEncoding> {
    let states = encode_sequence(g, embeddings, ids, params)?;
    let final_state = g.row(states, ids.len() - 1);
    Ok(DocumentEncoding {
        states,
        final_state,
        len: ids.len(),
    })
}

#[derive(Clone, Debug, Default)]
pub struct CommentEncoding {
    /// One `T^c_i x 2H` matrix per comment.
    pub comments: Vec<Var>,
}

impl CommentEncoding {
    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }
}

pub fn encode_comments(
    g: &mut Graph,
    embeddings: Var,
    comments: &[Vec<usize>],
    params: &BiLstmParams,
) -> Result<CommentEncoding> {
    let comments = comments
        .iter()
        .map(|c| encode_sequence(g, embeddings, c, params))
        .collect::<Result<_>>()?;
    Ok(CommentEncoding { comments })
}
