//! Compares what the decoder has been looking at with what readers care
//! about: the decoder's recent focus, a small CNN discriminator telling the
//! two apart, the discounted adversarial losses, and the gap between them.

use crate::denoising::EPS;
use crate::encoder::DocumentEncoding;
use crate::graph::{Graph, Var};

#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorParams {
    /// `n_f x w` kernel bank, convolved along the state axis.
    pub conv: Var,
    /// `1 x n_f`.
    pub weight: Var,
    pub bias: Var,
}

/// Decoder focus over the latest `k` attention distributions.
///
/// `history` holds `α_1..α_t` oldest first. Missing history (`t < k`)
/// counts as zero, so the mass of the result is `min(t, k) / k`; with
/// `renormalize` the average is taken over the available steps instead.
/// Returns `(ν_t, m_t)`.
pub fn decoder_focus(
    g: &mut Graph,
    history: &[Var],
    k: usize,
    doc: &DocumentEncoding,
    renormalize: bool,
) -> (Var, Var) {
    assert!(k >= 1, "focus window must be at least one step");
    let recent = &history[history.len().saturating_sub(k)..];
    let nu = if recent.is_empty() {
        g.zeros(doc.len)
    } else {
        let mut total = recent[0];
        for &a in &recent[1..] {
            total = g.add(total, a);
        }
        let denom = if renormalize { recent.len() } else { k };
        g.scale(total, 1.0 / denom as f64)
    };
    let m = g.weighted_rows(doc.states, nu);
    (nu, m)
}

pub fn cnn_feature(g: &mut Graph, params: &DiscriminatorParams, x: Var) -> Var {
    g.conv_max_relu(params.conv, x)
}

/// Probability that `x` is the reader-focused aspect. Also returns the
/// CNN feature so it can be leaked to the goal tracker.
pub fn discriminate(g: &mut Graph, params: &DiscriminatorParams, x: Var) -> (Var, Var) {
    let feature = cnn_feature(g, params, x);
    let z = g.matvec(params.weight, feature);
    let z = g.add(z, params.bias);
    (g.sigmoid(z), feature)
}

/// `φ^{T-t}` for `t = 1..=T`.
pub fn discount_weights(steps: usize, phi: f64) -> Vec<f64> {
    (1..=steps).map(|t| phi.powi((steps - t) as i32)).collect()
}

fn discounted_sum(g: &mut Graph, per_step: &[Var], phi: f64) -> Var {
    let stacked = g.concat(per_step);
    let w = g.vector(discount_weights(per_step.len(), phi));
    g.dot(stacked, w)
}

fn log_not(g: &mut Graph, tau: Var) -> Var {
    let q = g.one_minus(tau);
    g.log(q, EPS)
}

/// Discriminator objective `Σ_t φ^{T-t} (log τ^u + log(1 - τ^m_t))`,
/// which the discriminator maximises.
pub fn discriminator_objective(g: &mut Graph, tau_u: Var, tau_m: &[Var], phi: f64) -> Var {
    if tau_m.is_empty() {
        return g.vector(vec![0.0]);
    }
    let log_u = g.log(tau_u, EPS);
    let per_step: Vec<Var> = tau_m
        .iter()
        .map(|&t| {
            let l = log_not(g, t);
            g.add(log_u, l)
        })
        .collect();
    discounted_sum(g, &per_step, phi)
}

/// Generator adversarial term `Σ_t φ^{T-t} log(1 - τ^m_t)`, minimised by
/// the generator.
pub fn generator_adv_loss(g: &mut Graph, tau_m: &[Var], phi: f64) -> Var {
    if tau_m.is_empty() {
        return g.vector(vec![0.0]);
    }
    let per_step: Vec<Var> = tau_m.iter().map(|&t| log_not(g, t)).collect();
    discounted_sum(g, &per_step, phi)
}

/// Reader focus the decoder has not covered yet. Returns `(ζ_t, d_t)`.
pub fn attention_gap(g: &mut Graph, reader: Var, nu: Var, doc: &DocumentEncoding) -> (Var, Var) {
    let zeta = g.sub(reader, nu);
    let d = g.weighted_rows(doc.states, zeta);
    (zeta, d)
}
