//! Finite-difference check of the analytic gradients of the training
//! objectives.

use crate::corpus::{build_vocabulary, encode_example, make_synthetic_corpus, EncodedExample, SyntheticConfig};
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::model::{Model, ModelConfig, Pass, Variant};
use crate::params::{Grads, ParamGroup, ParamId};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which scalar to differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Summary negative log-likelihood `L_g`.
    Nll,
    /// Comment denoising loss `L_d`.
    Denoise,
    /// Generator adversarial loss `L_c^g`.
    GeneratorAdv,
    /// `L_g + L_d + L_c^g`, what the generator update minimises.
    Generator,
    /// `-L_c^d`, what the discriminator update minimises.
    Discriminator,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::Nll,
        Objective::Denoise,
        Objective::GeneratorAdv,
        Objective::Generator,
        Objective::Discriminator,
    ];

    /// The parameters this objective trains.
    pub fn group(self) -> ParamGroup {
        match self {
            Objective::Discriminator => ParamGroup::Discriminator,
            _ => ParamGroup::Generator,
        }
    }
}

/// Worst relative error over the checked coordinates of one block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockError {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

fn objective_value(model: &Model, ex: &EncodedExample, objective: Objective) -> Result<(Graph, Var)> {
    let mut g = Graph::new();
    let pass = match objective {
        Objective::Discriminator => Pass::Discriminator,
        _ => Pass::Full,
    };
    let l = model.forward(&mut g, ex, pass)?.losses;
    let out = match objective {
        Objective::Nll => l.nll,
        Objective::Denoise => l.denoise,
        Objective::GeneratorAdv => l.gen_adv,
        Objective::Generator => {
            let a = g.add(l.nll, l.denoise);
            g.add(a, l.gen_adv)
        }
        Objective::Discriminator => g.scale(l.disc_objective, -1.0),
    };
    Ok((g, out))
}

/// Backprop gradient of the objective.
pub fn analytic_gradient(model: &Model, ex: &EncodedExample, objective: Objective) -> Result<Grads> {
    let (g, out) = objective_value(model, ex, objective)?;
    Ok(g.backward(out, &model.store))
}

/// Central difference along one coordinate; the parameter is restored.
pub fn numeric_partial(
    model: &mut Model,
    ex: &EncodedExample,
    objective: Objective,
    id: ParamId,
    index: usize,
    eps: f64,
) -> Result<f64> {
    let orig = model.store.block(id).data[index];
    model.store.block_mut(id).data[index] = orig + eps;
    let plus = objective_value(model, ex, objective).map(|(g, v)| g.scalar(v));
    model.store.block_mut(id).data[index] = orig - eps;
    let minus = objective_value(model, ex, objective).map(|(g, v)| g.scalar(v));
    model.store.block_mut(id).data[index] = orig;
    Ok((plus? - minus?) / (2.0 * eps))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares backprop against central differences with step `eps` on up to
/// `per_block` randomly chosen coordinates of every block the objective
/// updates. The parameters are restored afterwards.
pub fn grad_check(
    model: &mut Model,
    ex: &EncodedExample,
    objective: Objective,
    eps: f64,
    per_block: usize,
    seed: u64,
) -> Result<Vec<BlockError>> {
    let grads = analytic_gradient(model, ex, objective)?;
    compare(model, ex, objective, &grads, eps, per_block, seed)
}

/// Like [`grad_check`] but against a caller-supplied gradient.
pub fn compare(
    model: &mut Model,
    ex: &EncodedExample,
    objective: Objective,
    grads: &Grads,
    eps: f64,
    per_block: usize,
    seed: u64,
) -> Result<Vec<BlockError>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Vec::new();
    for id in model.store.ids().collect::<Vec<_>>() {
        let block = model.store.block(id);
        if block.group != objective.group() {
            continue;
        }
        let name = block.name.clone();
        let n = block.data.len();
        let analytic = grads.block(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        let picks = sample(&mut rng, n, per_block.min(n));
        let mut worst: f64 = 0.0;
        for k in picks.iter() {
            let numeric = numeric_partial(model, ex, objective, id, k, eps)?;
            worst = worst.max(relative_error(analytic[k], numeric));
        }
        report.push(BlockError {
            name,
            checked: picks.len(),
            max_rel_error: worst,
        });
    }
    Ok(report)
}

/// A model with every width at most 8 and one short synthetic example,
/// small enough for coordinate-wise finite differences. Salience is
/// coupled to the summary loss so no gradient path is cut.
pub fn tiny_instance(variant: Variant, seed: u64) -> Result<(Model, EncodedExample)> {
    let corpus_cfg = SyntheticConfig {
        aspects_per_doc: 2,
        filler_sentences: (0, 0),
        comments_per_doc: (2, 3),
        comment_len: (3, 5),
        entity_pool: 8,
        place_pool: 4,
        verb_pool: 2,
        ..SyntheticConfig::default()
    };
    let ex = make_synthetic_corpus(seed, 1, &corpus_cfg)?.remove(0);
    let config = ModelConfig {
        variant,
        embedding_dim: 6,
        hidden_dim: 3,
        filters: 4,
        couple_salience: true,
        ..ModelConfig::default()
    };
    // A short vocabulary leaves some source words to the copy path.
    let vocab = build_vocabulary(std::slice::from_ref(&ex), crate::corpus::RESERVED + 16)?;
    let encoded = encode_example(&ex, &vocab);
    Ok((Model::new(config, vocab, seed)?, encoded))
}
