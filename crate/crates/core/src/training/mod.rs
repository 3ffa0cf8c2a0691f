//! Adversarial training: generator updates on `L_g + L_d + L_c^g`
//! alternating with discriminator updates on `-L_c^d`.

mod checkpoint;
mod gradcheck;

pub use checkpoint::Checkpoint;
pub use gradcheck::{
    analytic_gradient, compare, grad_check, numeric_partial, relative_error, tiny_instance, BlockError, Objective,
};

use crate::corpus::{build_vocabulary, default_stopwords, encode_example, label_comments, EncodedExample, Example};
use crate::error::{Error, Result};
use crate::evaluation::{self, EvalOptions};
use crate::graph::Graph;
use crate::model::{Model, ModelConfig, Pass};
use crate::params::{Adagrad, Grads, ParamGroup};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub nll: f64,
    pub denoise: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            nll: 1.0,
            denoise: 1.0,
            adversarial: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub model: ModelConfig,
    pub seed: u64,
    /// Upper bound on the vocabulary, reserved tokens included.
    pub vocab_size: usize,
    pub batch_size: usize,
    /// Number of generator updates.
    pub max_steps: u64,
    pub learning_rate: f64,
    pub initial_accumulator: f64,
    /// Global gradient-norm clip per update; `0` disables clipping.
    pub clip_norm: f64,
    /// Discriminator updates after every generator update.
    pub disc_steps_per_gen: usize,
    /// Generator-only updates before adversarial training starts.
    pub warm_start_steps: u64,
    pub loss_weights: LossWeights,
    pub beam_size: usize,
    /// Dev-set evaluation period in generator steps; `0` evaluates only at
    /// the end.
    pub eval_every: u64,
    /// Dev examples used by periodic evaluation; `0` means all.
    pub eval_examples: usize,
    /// Decode the dev set for ROUGE during periodic evaluation.
    pub eval_rouge: bool,
    /// Checkpoint period in generator steps; `0` disables.
    pub checkpoint_every: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            seed: 1,
            vocab_size: 5000,
            batch_size: 16,
            max_steps: 5000,
            learning_rate: 0.15,
            initial_accumulator: 0.1,
            clip_norm: 2.0,
            disc_steps_per_gen: 1,
            warm_start_steps: 0,
            loss_weights: LossWeights::default(),
            beam_size: 5,
            eval_every: 0,
            eval_examples: 0,
            eval_rouge: true,
            checkpoint_every: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return fail("batch size must be positive");
        }
        if self.beam_size == 0 {
            return fail("beam size must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning rate must be a non-negative number");
        }
        if self.initial_accumulator <= 0.0 {
            return fail("initial accumulator must be positive");
        }
        if self.clip_norm < 0.0 {
            return fail("clip norm must be non-negative");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        crate::corpus::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Mean loss terms of one generator update, plus the discriminator
/// objective of the update that followed it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub nll: f64,
    pub denoise: f64,
    pub gen_adv: f64,
    pub total: f64,
    pub disc_objective: Option<f64>,
}

/// One line of the metrics log.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    #[serde(rename = "L_g")]
    pub nll: f64,
    #[serde(rename = "L_d")]
    pub denoise: f64,
    #[serde(rename = "L_c^g")]
    pub gen_adv: f64,
    #[serde(rename = "L_c^d")]
    pub disc_objective: Option<f64>,
    pub denoise_recall: Option<f64>,
    pub cosine_distance: Option<f64>,
    #[serde(rename = "rouge_1")]
    pub rouge1: Option<f64>,
    #[serde(rename = "rouge_2")]
    pub rouge2: Option<f64>,
    pub rouge_l: Option<f64>,
}

/// Dev-set measurements at one point of training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub denoise_recall: Option<f64>,
    pub cosine_distance: Option<f64>,
    /// ROUGE-1/2/L F1 in points.
    pub rouge: Option<[f64; 3]>,
}

fn labelled(ex: &Example) -> Example {
    let mut ex = ex.clone();
    if ex.comment_labels.is_none() {
        ex.comment_labels = Some(label_comments(&ex.summary, &ex.comments, &default_stopwords()));
    }
    ex
}

pub struct Trainer {
    pub config: TrainingConfig,
    pub model: Model,
    pub optimizer: Adagrad,
    /// Generator updates done so far.
    pub step: u64,
    /// Kind of every update, in order, when tracing is on.
    pub update_trace: Option<Vec<ParamGroup>>,
    train: Vec<EncodedExample>,
}

impl Trainer {
    /// Fresh model with a vocabulary built from `train`.
    pub fn new(config: TrainingConfig, train: &[Example]) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::Input("training split is empty".into()));
        }
        let vocab = build_vocabulary(train, config.vocab_size)?;
        let model = Model::new(config.model.clone(), vocab, config.seed)?;
        let optimizer = Adagrad::new(&model.store, config.learning_rate, config.initial_accumulator);
        Self::assemble(config, model, optimizer, 0, train)
    }

    pub fn from_checkpoint(ckpt: Checkpoint, train: &[Example]) -> Result<Self> {
        if ckpt.config.hash() != ckpt.config_hash {
            return Err(Error::Checkpoint("stored config does not match its hash".into()));
        }
        let model = Model::from_store(ckpt.config.model.clone(), ckpt.vocab, ckpt.store)?;
        Self::assemble(ckpt.config, model, ckpt.optimizer, ckpt.step, train)
    }

    fn assemble(config: TrainingConfig, model: Model, optimizer: Adagrad, step: u64, train: &[Example]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Input("training split is empty".into()));
        }
        if model.variant().uses_comments() && train.iter().all(|e| e.comments.is_empty()) {
            return Err(Error::Input(format!(
                "variant {} reads comments but the training split has none",
                model.variant().label()
            )));
        }
        let mut encoded = Vec::with_capacity(train.len());
        for ex in train {
            ex.validate()?;
            encoded.push(encode_example(&labelled(ex), &model.vocab));
        }
        Ok(Self {
            config,
            model,
            optimizer,
            step,
            update_trace: None,
            train: encoded,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            step: self.step,
            config: self.config.clone(),
            config_hash: self.config.hash(),
            vocab: self.model.vocab.clone(),
            store: self.model.store.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    pub fn train_examples(&self) -> &[EncodedExample] {
        &self.train
    }

    /// Example indices of the batch for generator step `step`. Each epoch
    /// is a permutation seeded by `(seed, epoch)`, so batches depend only
    /// on the step number.
    pub fn batch_indices(&self, step: u64) -> Vec<usize> {
        let n = self.train.len() as u64;
        let b = self.config.batch_size as u64;
        let mut out = Vec::with_capacity(b as usize);
        let mut cached: Option<(u64, Vec<usize>)> = None;
        for pos in step * b..(step + 1) * b {
            let epoch = pos / n;
            if cached.as_ref().map(|c| c.0) != Some(epoch) {
                let mut perm: Vec<usize> = (0..n as usize).collect();
                let seed = self.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ epoch;
                perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                cached = Some((epoch, perm));
            }
            out.push(cached.as_ref().expect("filled above").1[(pos % n) as usize]);
        }
        out
    }

    fn adversarial_active(&self) -> bool {
        self.model.variant().uses_discriminator() && self.step >= self.config.warm_start_steps
    }

    fn trace(&mut self, group: ParamGroup) {
        if let Some(t) = &mut self.update_trace {
            t.push(group);
        }
    }

    /// One update of the generation-side parameters.
    pub fn generator_step(&mut self, batch: &[usize]) -> Result<StepLosses> {
        let w = self.config.loss_weights;
        let adversarial = self.adversarial_active();
        let scale = 1.0 / batch.len() as f64;
        let mut grads = Grads::zeros_like(&self.model.store);
        let mut out = StepLosses::default();
        for &i in batch {
            let mut g = Graph::new();
            let trace = self.model.forward(&mut g, &self.train[i], Pass::Full)?;
            let l = trace.losses;
            let terms = [
                ("L_g", g.scalar(l.nll)),
                ("L_d", g.scalar(l.denoise)),
                ("L_c^g", g.scalar(l.gen_adv)),
            ];
            for (component, v) in terms {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        component,
                        step: self.step,
                    });
                }
            }
            let nll = g.scale(l.nll, w.nll);
            let den = g.scale(l.denoise, w.denoise);
            let mut total = g.add(nll, den);
            if adversarial {
                let adv = g.scale(l.gen_adv, w.adversarial);
                total = g.add(total, adv);
            }
            out.nll += scale * terms[0].1;
            out.denoise += scale * terms[1].1;
            out.gen_adv += scale * terms[2].1;
            out.total += scale * g.scalar(total);
            grads.add_assign_scaled(&g.backward(total, &self.model.store), scale);
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite {
                component: "generator gradient",
                step: self.step,
            });
        }
        self.optimizer
            .step(&mut self.model.store, &grads, ParamGroup::Generator, self.config.clip_norm);
        self.trace(ParamGroup::Generator);
        Ok(out)
    }

    /// One update of the discriminator on the current generator's focus.
    /// Returns the mean discriminator objective before the update.
    pub fn discriminator_step(&mut self, batch: &[usize]) -> Result<f64> {
        let scale = 1.0 / batch.len() as f64;
        let mut grads = Grads::zeros_like(&self.model.store);
        let mut objective = 0.0;
        for &i in batch {
            let mut g = Graph::new();
            let trace = self.model.forward(&mut g, &self.train[i], Pass::Discriminator)?;
            let obj = trace.losses.disc_objective;
            let v = g.scalar(obj);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    component: "L_c^d",
                    step: self.step,
                });
            }
            objective += scale * v;
            let loss = g.scale(obj, -1.0);
            grads.add_assign_scaled(&g.backward(loss, &self.model.store), scale);
        }
        self.optimizer
            .step(&mut self.model.store, &grads, ParamGroup::Discriminator, self.config.clip_norm);
        self.trace(ParamGroup::Discriminator);
        Ok(objective)
    }

    /// A generator update followed by the configured discriminator updates.
    pub fn train_step(&mut self) -> Result<StepLosses> {
        let batch = self.batch_indices(self.step);
        let mut losses = self.generator_step(&batch)?;
        if self.adversarial_active() {
            for _ in 0..self.config.disc_steps_per_gen {
                losses.disc_objective = Some(self.discriminator_step(&batch)?);
            }
        }
        self.step += 1;
        Ok(losses)
    }

    /// Recall, focus distance and (optionally) ROUGE on `dev`.
    pub fn evaluate(&self, dev: &[Example], threads: usize) -> Result<EvalSnapshot> {
        let n = match self.config.eval_examples {
            0 => dev.len(),
            k => k.min(dev.len()),
        };
        let dev = &dev[..n];
        if dev.is_empty() {
            return Ok(EvalSnapshot::default());
        }
        let dev: Vec<Example> = dev.iter().map(labelled).collect();
        let diag = evaluation::diagnostics(&self.model, &dev, threads)?;
        let rouge = if self.config.eval_rouge {
            let opts = EvalOptions {
                beam: self.config.beam_size,
                max_len: self.config.model.max_decode_len,
                threads,
                dump_attention: false,
            };
            Some(evaluation::evaluate_model(&self.model, &dev, &opts)?.0.points())
        } else {
            None
        };
        Ok(EvalSnapshot {
            denoise_recall: diag.denoise_recall,
            cosine_distance: diag.cosine_distance,
            rouge,
        })
    }

    /// Trains until `max_steps`, evaluating on `dev` every `eval_every`
    /// steps and at the end. `on_row` sees every metrics row together with
    /// the trainer, e.g. to write checkpoints.
    pub fn run(
        &mut self,
        dev: &[Example],
        threads: usize,
        mut on_row: impl FnMut(&Trainer, &MetricsRow) -> Result<()>,
    ) -> Result<()> {
        while self.step < self.config.max_steps {
            let losses = self.train_step()?;
            let mut row = MetricsRow {
                step: self.step,
                nll: losses.nll,
                denoise: losses.denoise,
                gen_adv: losses.gen_adv,
                disc_objective: losses.disc_objective,
                ..MetricsRow::default()
            };
            let every = self.config.eval_every;
            let due = (every > 0 && self.step.is_multiple_of(every)) || self.step == self.config.max_steps;
            if due && !dev.is_empty() {
                let snap = self.evaluate(dev, threads)?;
                row.denoise_recall = snap.denoise_recall;
                row.cosine_distance = snap.cosine_distance;
                if let Some([r1, r2, rl]) = snap.rouge {
                    row.rouge1 = Some(r1);
                    row.rouge2 = Some(r2);
                    row.rouge_l = Some(rl);
                }
            }
            on_row(self, &row)?;
        }
        Ok(())
    }
}

/// Appends rows to a metrics CSV, writing the header only for a new file.
pub struct MetricsWriter {
    inner: csv::Writer<std::fs::File>,
}

impl MetricsWriter {
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let inner = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row).map_err(csv_error)?;
        self.inner.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    reader
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_synthetic_corpus, SyntheticConfig};
    use crate::model::Variant;

    pub(super) fn tiny_corpus(n: usize, seed: u64) -> Vec<Example> {
        let cfg = SyntheticConfig {
            aspects_per_doc: 2,
            filler_sentences: (0, 1),
            comments_per_doc: (2, 3),
            comment_len: (3, 5),
            entity_pool: 12,
            place_pool: 6,
            verb_pool: 4,
            ..SyntheticConfig::default()
        };
        make_synthetic_corpus(seed, n, &cfg).unwrap()
    }

    pub(super) fn tiny_config(variant: Variant) -> TrainingConfig {
        TrainingConfig {
            model: ModelConfig {
                variant,
                embedding_dim: 6,
                hidden_dim: 3,
                filters: 4,
                max_decode_len: 16,
                ..ModelConfig::default()
            },
            batch_size: 2,
            max_steps: 6,
            ..TrainingConfig::default()
        }
    }

    /// Finite differences see every path, so the salience scores must not
    /// be detached from the summary loss.
    pub(super) fn coupled(variant: Variant) -> TrainingConfig {
        let mut cfg = tiny_config(variant);
        cfg.model.couple_salience = true;
        cfg
    }

    fn group_values(store: &crate::params::ParamStore, group: ParamGroup) -> Vec<Vec<f64>> {
        store
            .blocks()
            .iter()
            .filter(|b| b.group == group)
            .map(|b| b.data.clone())
            .collect()
    }

    #[test]
    fn generator_step_leaves_discriminator_alone_and_vice_versa() {
        let data = tiny_corpus(6, 3);
        let mut t = Trainer::new(tiny_config(Variant::Rasg), &data).unwrap();
        let batch = t.batch_indices(0);
        let disc = group_values(&t.model.store, ParamGroup::Discriminator);
        let gen = group_values(&t.model.store, ParamGroup::Generator);
        t.generator_step(&batch).unwrap();
        assert_eq!(group_values(&t.model.store, ParamGroup::Discriminator), disc);
        assert_ne!(group_values(&t.model.store, ParamGroup::Generator), gen);
        let gen = group_values(&t.model.store, ParamGroup::Generator);
        t.discriminator_step(&batch).unwrap();
        assert_eq!(group_values(&t.model.store, ParamGroup::Generator), gen);
        assert_ne!(group_values(&t.model.store, ParamGroup::Discriminator), disc);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_and_reports_losses() {
        let data = tiny_corpus(4, 5);
        let cfg = TrainingConfig {
            learning_rate: 0.0,
            ..tiny_config(Variant::Rasg)
        };
        let mut t = Trainer::new(cfg, &data).unwrap();
        let before = t.model.store.clone();
        let l = t.train_step().unwrap();
        assert_eq!(t.model.store, before);
        assert!(l.nll > 0.0 && l.denoise > 0.0 && l.gen_adv < 0.0, "{l:?}");
        assert!(l.disc_objective.unwrap() < 0.0);
    }

    #[test]
    fn without_gtd_has_no_adversarial_term() {
        let data = tiny_corpus(4, 5);
        let mut t = Trainer::new(tiny_config(Variant::WithoutGtd), &data).unwrap();
        t.update_trace = Some(Vec::new());
        for _ in 0..3 {
            let l = t.train_step().unwrap();
            assert_eq!(l.gen_adv, 0.0);
            assert_eq!(l.disc_objective, None);
            assert!((l.total - l.nll - l.denoise).abs() < 1e-12);
        }
        assert_eq!(t.update_trace.unwrap(), vec![ParamGroup::Generator; 3]);
    }

    #[test]
    fn one_to_one_alternation() {
        let data = tiny_corpus(4, 5);
        let mut t = Trainer::new(tiny_config(Variant::Rasg), &data).unwrap();
        t.update_trace = Some(Vec::new());
        for _ in 0..3 {
            t.train_step().unwrap();
        }
        let trace = t.update_trace.unwrap();
        for (i, g) in trace.iter().enumerate() {
            let expected = if i % 2 == 0 {
                ParamGroup::Generator
            } else {
                ParamGroup::Discriminator
            };
            assert_eq!(*g, expected);
        }
        assert_eq!(trace.len(), 6);
    }

    #[test]
    fn warm_start_delays_the_discriminator() {
        let data = tiny_corpus(4, 5);
        let cfg = TrainingConfig {
            warm_start_steps: 2,
            ..tiny_config(Variant::Rasg)
        };
        let mut t = Trainer::new(cfg, &data).unwrap();
        t.update_trace = Some(Vec::new());
        for _ in 0..3 {
            t.train_step().unwrap();
        }
        use ParamGroup::{Discriminator as D, Generator as G};
        assert_eq!(t.update_trace.unwrap(), vec![G, G, G, D]);
    }

    #[test]
    fn nll_falls_on_a_fixed_batch() {
        let data = tiny_corpus(2, 9);
        let mut t = Trainer::new(tiny_config(Variant::Rasg), &data).unwrap();
        let batch = vec![0, 1];
        let mut prev = f64::INFINITY;
        let mut falls = 0;
        for _ in 0..101 {
            let l = t.generator_step(&batch).unwrap();
            if l.nll < prev {
                falls += 1;
            }
            prev = l.nll;
            t.discriminator_step(&batch).unwrap();
        }
        // The first comparison is against infinity.
        assert!(falls > 90, "L_g fell on only {} of 100 steps", falls - 1);
    }

    #[test]
    fn discriminator_learns_against_a_frozen_generator() {
        let data = tiny_corpus(2, 9);
        let mut t = Trainer::new(tiny_config(Variant::Rasg), &data).unwrap();
        let batch = vec![0, 1];
        let first = -t.discriminator_step(&batch).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = -t.discriminator_step(&batch).unwrap();
        }
        assert!(last < first, "-L_c^d went from {first} to {last}");
    }

    #[test]
    fn batches_depend_only_on_step_and_cover_each_epoch() {
        let data = tiny_corpus(5, 1);
        let cfg = TrainingConfig {
            batch_size: 5,
            ..tiny_config(Variant::S2s)
        };
        let t = Trainer::new(cfg, &data).unwrap();
        for step in 0..4 {
            let mut b = t.batch_indices(step);
            assert_eq!(b, t.batch_indices(step));
            b.sort_unstable();
            assert_eq!(b, vec![0, 1, 2, 3, 4]);
        }
        assert_ne!(t.batch_indices(0), t.batch_indices(1));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let data = tiny_corpus(4, 2);
        let mut t = Trainer::new(tiny_config(Variant::Rasg), &data).unwrap();
        t.train_step().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ckpt = t.checkpoint();
        ckpt.save(dir.path()).unwrap();
        assert_eq!(Checkpoint::load(dir.path()).unwrap(), ckpt);
    }

    #[test]
    fn resume_matches_uninterrupted_training() {
        let data = tiny_corpus(5, 4);
        let cfg = tiny_config(Variant::Rasg);
        let mut straight = Trainer::new(cfg.clone(), &data).unwrap();
        for _ in 0..6 {
            straight.train_step().unwrap();
        }
        let mut first = Trainer::new(cfg, &data).unwrap();
        for _ in 0..3 {
            first.train_step().unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        first.checkpoint().save(dir.path()).unwrap();
        let mut resumed = Trainer::from_checkpoint(Checkpoint::load(dir.path()).unwrap(), &data).unwrap();
        for _ in 0..3 {
            resumed.train_step().unwrap();
        }
        assert_eq!(resumed.model.store, straight.model.store);
        assert_eq!(resumed.optimizer, straight.optimizer);
    }

    #[test]
    fn tampered_config_is_refused() {
        let data = tiny_corpus(3, 2);
        let t = Trainer::new(tiny_config(Variant::Rasg), &data).unwrap();
        let mut ckpt = t.checkpoint();
        ckpt.config.seed += 1;
        assert!(matches!(Trainer::from_checkpoint(ckpt, &data), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn metrics_csv_round_trips_and_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let a = MetricsRow {
            step: 1,
            nll: 2.5,
            disc_objective: Some(-1.0),
            ..MetricsRow::default()
        };
        let b = MetricsRow {
            step: 2,
            rouge_l: Some(12.5),
            ..MetricsRow::default()
        };
        MetricsWriter::open(&path).unwrap().write(&a).unwrap();
        MetricsWriter::open(&path).unwrap().write(&b).unwrap();
        assert_eq!(read_metrics(&path).unwrap(), vec![a, b]);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("step,L_g,L_d,L_c^g,L_c^d,denoise_recall,cosine_distance,rouge_1,rouge_2,rouge_l\n"));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let data = tiny_corpus(2, 1);
        for cfg in [
            TrainingConfig {
                batch_size: 0,
                ..tiny_config(Variant::Rasg)
            },
            TrainingConfig {
                beam_size: 0,
                ..tiny_config(Variant::Rasg)
            },
        ] {
            assert!(matches!(Trainer::new(cfg, &data), Err(Error::Config(_))));
        }
        assert!(Trainer::new(tiny_config(Variant::Rasg), &[]).is_err());
    }

    #[test]
    fn tiny_model_gradients_match_finite_differences() {
        let data = tiny_corpus(1, 7);
        let t = Trainer::new(coupled(Variant::Rasg), &data).unwrap();
        let ex = t.train_examples()[0].clone();
        let mut model = t.model;
        for objective in Objective::ALL {
            for b in grad_check(&mut model, &ex, objective, 1e-5, 6, 1).unwrap() {
                assert!(b.max_rel_error < 1e-3, "{objective:?} {}: {}", b.name, b.max_rel_error);
            }
        }
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let data = tiny_corpus(1, 7);
        let t = Trainer::new(coupled(Variant::Rasg), &data).unwrap();
        let ex = t.train_examples()[0].clone();
        let mut model = t.model;
        let mut grads = analytic_gradient(&model, &ex, Objective::Nll).unwrap();
        let id = model.store.id("output.weight").unwrap();
        for v in grads.block_mut(id).unwrap() {
            *v *= 1.5;
        }
        let report = compare(&mut model, &ex, Objective::Nll, &grads, 1e-5, 6, 1).unwrap();
        let bad = report.iter().find(|b| b.name == "output.weight").unwrap();
        assert!(bad.max_rel_error > 0.1);
        assert!(report.iter().filter(|b| b.name != "output.weight").all(|b| b.max_rel_error < 1e-3));
    }
}
