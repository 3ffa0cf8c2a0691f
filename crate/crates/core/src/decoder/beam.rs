use crate::corpus::{START, STOP};

/// Anything that can score the next token given a decoding state.
pub trait StepModel {
    type State: Clone;

    /// Consumes `token` in `state`; returns the new state and log
    /// probabilities over the whole (extended) vocabulary.
    fn step(&mut self, state: &Self::State, token: usize) -> (Self::State, Vec<f64>);
}

#[derive(Clone, Debug)]
pub struct Hypothesis<S> {
    /// Generated ids, without `STOP`.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
    pub state: S,
}

impl<S> Hypothesis<S> {
    /// Mean log probability per emitted token, `STOP` included.
    pub fn score(&self) -> f64 {
        let n = self.tokens.len() + usize::from(self.finished);
        if n == 0 {
            0.0
        } else {
            self.log_prob / n as f64
        }
    }

    fn last(&self) -> usize {
        self.tokens.last().copied().unwrap_or(START)
    }
}

/// Indices of the `n` largest entries, largest first, lower index first on
/// ties.
fn top_n(values: &[f64], n: usize, skip: Option<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| Some(i) != skip).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx.truncate(n);
    idx
}

/// Length-wise beam search. `STOP` is not allowed as the first token.
/// Stops once `beam` hypotheses have finished or after `max_len` steps and
/// returns the best finished hypothesis by [`Hypothesis::score`], falling
/// back to unfinished ones.
pub fn beam_search<M: StepModel>(model: &mut M, start: M::State, beam: usize, max_len: usize) -> Hypothesis<M::State> {
    assert!(beam >= 1 && max_len >= 1);
    let mut alive = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
        state: start,
    }];
    let mut done: Vec<Hypothesis<M::State>> = Vec::new();

    for _ in 0..max_len {
        let mut candidates = Vec::new();
        for hyp in &alive {
            let (state, logp) = model.step(&hyp.state, hyp.last());
            let skip = hyp.tokens.is_empty().then_some(STOP);
            for tok in top_n(&logp, 2 * beam, skip) {
                candidates.push((hyp.log_prob + logp[tok], tok, hyp.tokens.clone(), state.clone()));
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));

        let mut next = Vec::with_capacity(beam);
        for (log_prob, tok, mut tokens, state) in candidates {
            let finished = tok == STOP;
            if !finished {
                tokens.push(tok);
            }
            let hyp = Hypothesis {
                tokens,
                log_prob,
                finished,
                state,
            };
            if finished {
                done.push(hyp);
            } else {
                next.push(hyp);
            }
            if next.len() == beam || done.len() == beam {
                break;
            }
        }
        alive = next;
        if done.len() >= beam || alive.is_empty() {
            break;
        }
    }

    let pool = if done.is_empty() { alive } else { done };
    pool.into_iter()
        .reduce(|best, h| if h.score() > best.score() { h } else { best })
        .expect("beam search keeps at least one hypothesis")
}

/// Greedy decoding: the most likely token at every step.
pub fn greedy<M: StepModel>(model: &mut M, start: M::State, max_len: usize) -> Hypothesis<M::State> {
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
        state: start,
    };
    for _ in 0..max_len {
        let (state, logp) = model.step(&hyp.state, hyp.last());
        let skip = hyp.tokens.is_empty().then_some(STOP);
        let tok = top_n(&logp, 1, skip)[0];
        hyp.log_prob += logp[tok];
        hyp.state = state;
        if tok == STOP {
            hyp.finished = true;
            break;
        }
        hyp.tokens.push(tok);
    }
    hyp
}
