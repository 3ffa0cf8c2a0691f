//! The full summarizer: parameters, the teacher-forced forward pass that
//! produces every loss term, and step-wise inference for beam search.

use crate::corpus::{EncodedExample, Vocabulary, UNK};
use crate::decoder::{
    self, attention, attention_memory, init_decoder, output_projection, transition, AttentionParams, DecoderState,
    ProjectionParams, Reduction, StepModel,
};
use crate::denoising::{comment_salience, denoising_loss, SalienceParams};
use crate::encoder::{encode_comments, encode_document, BiLstmParams, DocumentEncoding, LstmParams};
use crate::error::{Error, Result};
use crate::goal_tracker::{track_goal, GoalState};
use crate::graph::{Graph, Var};
use crate::params::{ParamGroup, ParamId, ParamStore};
use crate::reader_attention::reader_focus;
use crate::supervisor::{
    attention_gap, decoder_focus, discriminate, discriminator_objective, generator_adv_loss, DiscriminatorParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which parts of the model are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Everything on.
    #[default]
    Rasg,
    /// Comment salience fixed at one and no denoising loss.
    WithoutDm,
    /// Gap content zeroed in the output layer and the goal tracker.
    WithoutG,
    /// Goal vector zeroed; adversarial training kept.
    WithoutGt,
    /// No goal tracker, no adversarial losses, no discriminator.
    WithoutGtd,
    /// Pointer-copy seq2seq that ignores comments.
    S2s,
    /// Seq2seq whose attention has the reader attention added to it.
    S2sr,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Rasg,
        Variant::WithoutDm,
        Variant::WithoutG,
        Variant::WithoutGt,
        Variant::WithoutGtd,
        Variant::S2s,
        Variant::S2sr,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Rasg => "RASG",
            Variant::WithoutDm => "RASG w/o DM",
            Variant::WithoutG => "RASG w/o G",
            Variant::WithoutGt => "RASG w/o GT",
            Variant::WithoutGtd => "RASG w/o GTD",
            Variant::S2s => "S2S",
            Variant::S2sr => "S2SR",
        }
    }

    pub fn uses_comments(self) -> bool {
        self != Variant::S2s
    }

    pub fn uses_denoising(self) -> bool {
        !matches!(self, Variant::S2s | Variant::WithoutDm)
    }

    /// Focus, gap content and the rest of the supervisor machinery.
    pub fn uses_supervisor(self) -> bool {
        !matches!(self, Variant::S2s | Variant::S2sr)
    }

    pub fn uses_gap(self) -> bool {
        self.uses_supervisor() && self != Variant::WithoutG
    }

    pub fn uses_goal(self) -> bool {
        self.uses_supervisor() && !matches!(self, Variant::WithoutGt | Variant::WithoutGtd)
    }

    pub fn uses_discriminator(self) -> bool {
        self.uses_supervisor() && self != Variant::WithoutGtd
    }

    pub fn adds_reader_to_attention(self) -> bool {
        self == Variant::S2sr
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub embedding_dim: usize,
    /// Hidden size of each encoder direction; encoder states are twice this.
    pub hidden_dim: usize,
    /// Attention feature size; defaults to the decoder state size.
    pub attention_dim: Option<usize>,
    /// Goal vector size; defaults to the encoder state size.
    pub goal_dim: Option<usize>,
    pub filters: usize,
    pub filter_width: usize,
    /// Number of recent attention steps that make up the decoder focus.
    pub focus_window: usize,
    pub discount: f64,
    /// Average the focus over available steps instead of the full window.
    pub renormalize_focus: bool,
    /// Length-normalise embeddings before aligning comments to the document.
    pub cosine_alignment: bool,
    /// Let the summary loss reach the salience classifier through the
    /// reader attention.
    pub couple_salience: bool,
    /// Keep the generator's adversarial gradient out of the encoder states.
    pub stop_adv_at_attention: bool,
    /// Weight of the reader attention added in the S2SR baseline.
    pub s2sr_mix: f64,
    pub nll_reduction: Reduction,
    pub max_decode_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Rasg,
            embedding_dim: 64,
            hidden_dim: 32,
            attention_dim: None,
            goal_dim: None,
            filters: 64,
            filter_width: 3,
            focus_window: 5,
            discount: 0.5,
            renormalize_focus: false,
            cosine_alignment: false,
            couple_salience: false,
            stop_adv_at_attention: false,
            s2sr_mix: 1.0,
            nll_reduction: Reduction::Mean,
            max_decode_len: 40,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return fail("embedding and hidden sizes must be positive".into());
        }
        if self.focus_window == 0 {
            return fail("focus window must be at least 1".into());
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return fail(format!("discount {} outside (0, 1]", self.discount));
        }
        if self.filters == 0 || self.filter_width == 0 || self.filter_width > self.state_dim() {
            return fail(format!(
                "need at least one filter of width 1..={}, got {} of width {}",
                self.state_dim(),
                self.filters,
                self.filter_width
            ));
        }
        if self.attention_dim == Some(0) || self.goal_dim == Some(0) {
            return fail("attention and goal sizes must be positive".into());
        }
        if self.max_decode_len == 0 {
            return fail("max decode length must be positive".into());
        }
        if !self.s2sr_mix.is_finite() || self.s2sr_mix < 0.0 {
            return fail(format!("reader mix weight {} must be non-negative", self.s2sr_mix));
        }
        Ok(())
    }

    /// Encoder state size `2H`; also the decoder state size.
    pub fn state_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn attention_size(&self) -> usize {
        self.attention_dim.unwrap_or(self.state_dim())
    }

    pub fn goal_size(&self) -> usize {
        self.goal_dim.unwrap_or(self.state_dim())
    }
}

#[derive(Clone, Copy, Debug)]
struct BiIds {
    fw_w: ParamId,
    fw_b: ParamId,
    bw_w: ParamId,
    bw_b: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Ids {
    embedding: ParamId,
    doc_encoder: BiIds,
    comment_encoder: BiIds,
    salience_w: ParamId,
    salience_b: ParamId,
    init_w: ParamId,
    init_b: ParamId,
    decoder_w: ParamId,
    decoder_b: ParamId,
    att_state: ParamId,
    att_memory: ParamId,
    att_score: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    pointer_w: ParamId,
    pointer_b: ParamId,
    goal_w: ParamId,
    goal_b: ParamId,
    disc_conv: ParamId,
    disc_w: ParamId,
    disc_b: ParamId,
}

/// Parameter names and shapes for a vocabulary of `vocab` ids.
pub fn parameter_layout(config: &ModelConfig, vocab: usize) -> Vec<(String, usize, usize, ParamGroup)> {
    use ParamGroup::{Discriminator as D, Generator as G};
    let e = config.embedding_dim;
    let h = config.hidden_dim;
    let s = config.state_dim();
    let a = config.attention_size();
    let gd = config.goal_size();
    let nf = config.filters;
    let mut out = vec![("embedding".to_string(), vocab, e, G)];
    for enc in ["doc_encoder", "comment_encoder"] {
        for dir in ["fw", "bw"] {
            out.push((format!("{enc}.{dir}.weight"), 4 * h, e + h, G));
            out.push((format!("{enc}.{dir}.bias"), 4 * h, 1, G));
        }
    }
    out.extend([
        ("salience.weight".to_string(), 1, 2 * s, G),
        ("salience.bias".to_string(), 1, 1, G),
        ("decoder.init.weight".to_string(), s, s, G),
        ("decoder.init.bias".to_string(), s, 1, G),
        ("decoder.lstm.weight".to_string(), 4 * s, s + e + s, G),
        ("decoder.lstm.bias".to_string(), 4 * s, 1, G),
        ("attention.state".to_string(), a, s, G),
        ("attention.memory".to_string(), a, s, G),
        ("attention.score".to_string(), a, 1, G),
        ("output.weight".to_string(), vocab, s + gd + s, G),
        ("output.bias".to_string(), vocab, 1, G),
        ("pointer.weight".to_string(), 1, s + s + e, G),
        ("pointer.bias".to_string(), 1, 1, G),
        ("goal.weight".to_string(), 4 * gd, nf + s + gd, G),
        ("goal.bias".to_string(), 4 * gd, 1, G),
        ("discriminator.conv".to_string(), nf, config.filter_width, D),
        ("discriminator.weight".to_string(), 1, nf, D),
        ("discriminator.bias".to_string(), 1, 1, D),
    ]);
    out
}

/// Parameters bound onto one graph.
#[derive(Clone, Copy, Debug)]
struct Bound {
    embedding: Var,
    doc_encoder: BiLstmParams,
    comment_encoder: BiLstmParams,
    salience: SalienceParams,
    init_w: Var,
    init_b: Var,
    decoder: LstmParams,
    attention: AttentionParams,
    projection: ProjectionParams,
    goal: LstmParams,
    disc: DiscriminatorParams,
}

/// Everything fixed for one example once the encoders have run.
#[derive(Clone, Debug)]
struct ExampleContext {
    doc: DocumentEncoding,
    /// Document states as seen by the adversarial term.
    adv_doc: DocumentEncoding,
    memory: Var,
    doc_ext: Vec<usize>,
    ext_len: usize,
    salience: Option<Var>,
    /// Reader attention `ε` and reader aspect `u`.
    reader: Option<(Var, Var)>,
    tau_u: Option<Var>,
    zero_gap: Var,
    zero_goal: Var,
}

/// Recurrent state carried between decoding steps.
#[derive(Clone, Debug)]
pub struct StepState {
    decoder: DecoderState,
    goal: GoalState,
    history: Vec<Var>,
    focus: Option<Var>,
}

/// Per-step outputs kept by the teacher-forced pass.
#[derive(Clone, Copy, Debug)]
pub struct StepTrace {
    pub alpha: Var,
    pub focus: Option<Var>,
    pub tau_m: Option<Var>,
    pub dist: Option<Var>,
    pub p_gen: Option<Var>,
}

/// The loss terms of one example. Absent terms are zero.
#[derive(Clone, Copy, Debug)]
pub struct Losses {
    pub nll: Var,
    pub denoise: Var,
    pub gen_adv: Var,
    /// Discriminator objective (maximised by the discriminator).
    pub disc_objective: Var,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub steps: Vec<StepTrace>,
    pub salience: Option<Var>,
    pub reader_attention: Option<Var>,
    pub losses: Losses,
}

/// What the forward pass is for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pass {
    /// All outputs and losses.
    Full,
    /// Only what the discriminator needs; generator-side values are
    /// detached and the output layer is skipped.
    Discriminator,
}

/// A decoded summary with the traces used by diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    /// Ids in the example's extended vocabulary, without `STOP`.
    pub ids: Vec<usize>,
    pub tokens: Vec<String>,
    pub log_prob: f64,
    pub finished: bool,
    /// Decoder attention at every step.
    pub attention: Vec<Vec<f64>>,
    pub reader_attention: Option<Vec<f64>>,
    pub salience: Option<Vec<f64>>,
    /// Decoder focus at the last step.
    pub final_focus: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    ids: Ids,
}

fn glorot(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

impl Model {
    /// Fresh model with Glorot-uniform weights, zero biases and
    /// uniform embeddings.
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for (name, rows, cols, group) in parameter_layout(&config, vocab.len()) {
            let data: Vec<f64> = if name == "embedding" {
                let s = (3.0 / config.embedding_dim as f64).sqrt();
                (0..rows * cols).map(|_| rng.gen_range(-s..=s)).collect()
            } else if name.ends_with("bias") {
                vec![0.0; rows * cols]
            } else {
                let s = glorot(rows, cols);
                (0..rows * cols).map(|_| rng.gen_range(-s..=s)).collect()
            };
            store.insert(&name, rows, cols, group, data)?;
        }
        Self::from_store(config, vocab, store)
    }

    /// Wraps an existing parameter store, checking it against the layout.
    pub fn from_store(config: ModelConfig, vocab: Vocabulary, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let layout = parameter_layout(&config, vocab.len());
        if layout.len() != store.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter blocks, found {}",
                layout.len(),
                store.len()
            )));
        }
        for (name, rows, cols, group) in &layout {
            let id = store
                .id(name)
                .ok_or_else(|| Error::Shape(format!("missing parameter block {name}")))?;
            let b = store.block(id);
            if (b.rows, b.cols, b.group) != (*rows, *cols, *group) {
                return Err(Error::Shape(format!(
                    "block {name} is {}x{} {:?}, expected {rows}x{cols} {group:?}",
                    b.rows, b.cols, b.group
                )));
            }
        }
        let id = |n: &str| store.id(n).expect("layout checked above");
        let bi = |p: &str| BiIds {
            fw_w: id(&format!("{p}.fw.weight")),
            fw_b: id(&format!("{p}.fw.bias")),
            bw_w: id(&format!("{p}.bw.weight")),
            bw_b: id(&format!("{p}.bw.bias")),
        };
        let ids = Ids {
            embedding: id("embedding"),
            doc_encoder: bi("doc_encoder"),
            comment_encoder: bi("comment_encoder"),
            salience_w: id("salience.weight"),
            salience_b: id("salience.bias"),
            init_w: id("decoder.init.weight"),
            init_b: id("decoder.init.bias"),
            decoder_w: id("decoder.lstm.weight"),
            decoder_b: id("decoder.lstm.bias"),
            att_state: id("attention.state"),
            att_memory: id("attention.memory"),
            att_score: id("attention.score"),
            out_w: id("output.weight"),
            out_b: id("output.bias"),
            pointer_w: id("pointer.weight"),
            pointer_b: id("pointer.bias"),
            goal_w: id("goal.weight"),
            goal_b: id("goal.bias"),
            disc_conv: id("discriminator.conv"),
            disc_w: id("discriminator.weight"),
            disc_b: id("discriminator.bias"),
        };
        Ok(Self {
            config,
            vocab,
            store,
            ids,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    fn bind(&self, g: &mut Graph) -> Bound {
        let s = &self.store;
        let ids = &self.ids;
        let mut p = |id| g.param(s, id);
        let mut bi = |b: BiIds| BiLstmParams {
            forward: LstmParams {
                weight: p(b.fw_w),
                bias: p(b.fw_b),
            },
            backward: LstmParams {
                weight: p(b.bw_w),
                bias: p(b.bw_b),
            },
        };
        let doc_encoder = bi(ids.doc_encoder);
        let comment_encoder = bi(ids.comment_encoder);
        let mut p = |id| g.param(s, id);
        Bound {
            embedding: p(ids.embedding),
            doc_encoder,
            comment_encoder,
            salience: SalienceParams {
                weight: p(ids.salience_w),
                bias: p(ids.salience_b),
            },
            init_w: p(ids.init_w),
            init_b: p(ids.init_b),
            decoder: LstmParams {
                weight: p(ids.decoder_w),
                bias: p(ids.decoder_b),
            },
            attention: AttentionParams {
                state: p(ids.att_state),
                memory: p(ids.att_memory),
                score: p(ids.att_score),
            },
            projection: ProjectionParams {
                weight: p(ids.out_w),
                bias: p(ids.out_b),
                pointer: p(ids.pointer_w),
                pointer_bias: p(ids.pointer_b),
            },
            goal: LstmParams {
                weight: p(ids.goal_w),
                bias: p(ids.goal_b),
            },
            disc: DiscriminatorParams {
                conv: p(ids.disc_conv),
                weight: p(ids.disc_w),
                bias: p(ids.disc_b),
            },
        }
    }

    fn check_example(&self, ex: &EncodedExample, need_labels: bool) -> Result<()> {
        if ex.document.is_empty() {
            return Err(Error::Input("empty document".into()));
        }
        if ex.ext.base_size != self.vocab.len() {
            return Err(Error::Input(format!(
                "example encoded against a vocabulary of {} ids, model has {}",
                ex.ext.base_size,
                self.vocab.len()
            )));
        }
        let base = self.vocab.len();
        let bad = ex.document.iter().chain(ex.comments.iter().flatten()).any(|&i| i >= base);
        if bad {
            return Err(Error::Input("input id outside the vocabulary".into()));
        }
        if need_labels && self.variant().uses_denoising() && !ex.comments.is_empty() {
            match &ex.comment_labels {
                Some(l) if l.len() == ex.comments.len() => {}
                _ => return Err(Error::Input("comment labels are required for the denoising loss".into())),
            }
        }
        Ok(())
    }

    fn context(&self, g: &mut Graph, p: &Bound, ex: &EncodedExample, pass: Pass) -> Result<ExampleContext> {
        let cfg = &self.config;
        let variant = cfg.variant;
        let mut doc = encode_document(g, p.embedding, &ex.document, &p.doc_encoder)?;
        if pass == Pass::Discriminator {
            let states = g.detach(doc.states);
            let final_state = g.row(states, doc.len - 1);
            doc = DocumentEncoding {
                states,
                final_state,
                len: doc.len,
            };
        }
        let adv_doc = if cfg.stop_adv_at_attention && pass == Pass::Full {
            let states = g.detach(doc.states);
            DocumentEncoding {
                states,
                final_state: doc.final_state,
                len: doc.len,
            }
        } else {
            doc
        };
        let memory = attention_memory(g, &p.attention, &doc);

        let mut salience = None;
        let mut reader = None;
        let mut tau_u = None;
        if variant.uses_comments() {
            let mut weights = None;
            if variant.uses_denoising() && !ex.comments.is_empty() {
                let comments = encode_comments(g, p.embedding, &ex.comments, &p.comment_encoder)?;
                let scores = comment_salience(g, &comments, doc.final_state, &p.salience);
                salience = scores.scores;
                weights = match (salience, cfg.couple_salience) {
                    (Some(s), false) => Some(g.detach(s)),
                    (s, _) => s,
                };
            }
            let focus = reader_focus(
                g,
                p.embedding,
                &ex.document,
                &ex.comments,
                weights,
                &doc,
                cfg.cosine_alignment,
            );
            let (eps, mut u) = (focus.attention, focus.aspect);
            if pass == Pass::Discriminator {
                u = g.detach(u);
            }
            if variant.uses_discriminator() {
                tau_u = Some(discriminate(g, &p.disc, u).0);
            }
            reader = Some((eps, u));
        }
        let zero_gap = g.zeros(cfg.state_dim());
        let zero_goal = g.zeros(cfg.goal_size());
        Ok(ExampleContext {
            doc,
            adv_doc,
            memory,
            doc_ext: ex.document_ext.clone(),
            ext_len: ex.ext.len(),
            salience,
            reader,
            tau_u,
            zero_gap,
            zero_goal,
        })
    }

    fn initial_state(&self, g: &mut Graph, p: &Bound, ctx: &ExampleContext) -> StepState {
        StepState {
            decoder: init_decoder(g, ctx.doc.final_state, p.init_w, p.init_b, self.config.state_dim()),
            goal: GoalState::zeros(g, self.config.goal_size()),
            history: Vec::new(),
            focus: None,
        }
    }

    fn step(
        &self,
        g: &mut Graph,
        p: &Bound,
        ctx: &ExampleContext,
        state: &StepState,
        prev_token: usize,
        pass: Pass,
    ) -> Result<(StepState, StepTrace)> {
        let cfg = &self.config;
        let variant = cfg.variant;
        let input_id = if prev_token < self.vocab.len() { prev_token } else { UNK };
        let prev_embedding = g.gather_rows(p.embedding, &[input_id]);
        let mut dec = transition(g, &p.decoder, state.decoder, prev_embedding)?;
        let (mut alpha, mut context) = attention(g, &p.attention, ctx.memory, dec.hidden, &ctx.doc);
        if let (true, Some((eps, _))) = (variant.adds_reader_to_attention(), ctx.reader) {
            let scaled = g.scale(eps, cfg.s2sr_mix);
            let sum = g.add(alpha, scaled);
            alpha = g.normalize(sum);
            context = g.weighted_rows(ctx.doc.states, alpha);
        }
        dec.context = context;

        let mut history = state.history.clone();
        history.push(alpha);
        let mut goal = state.goal;
        let mut focus = None;
        let mut tau_m = None;
        let mut gap = ctx.zero_gap;
        let mut goal_vec = ctx.zero_goal;
        if variant.uses_supervisor() {
            let (nu, m) = decoder_focus(g, &history, cfg.focus_window, &ctx.adv_doc, cfg.renormalize_focus);
            focus = Some(nu);
            let mut feature = None;
            if variant.uses_discriminator() {
                let m = if pass == Pass::Discriminator { g.detach(m) } else { m };
                let (tau, f) = discriminate(g, &p.disc, m);
                tau_m = Some(tau);
                feature = Some(f);
            }
            if pass == Pass::Full {
                let eps = ctx.reader.expect("supervised variants read comments").0;
                if variant.uses_gap() {
                    // the gap is taken against the main document states even
                    // when the adversarial path is detached
                    let (nu_main, _) = if cfg.stop_adv_at_attention {
                        decoder_focus(g, &history, cfg.focus_window, &ctx.doc, cfg.renormalize_focus)
                    } else {
                        (nu, m)
                    };
                    gap = attention_gap(g, eps, nu_main, &ctx.doc).1;
                }
                if variant.uses_goal() {
                    let f = feature.expect("goal tracking implies a discriminator");
                    goal = track_goal(g, &p.goal, state.goal, f, gap)?;
                    goal_vec = goal.goal;
                }
            }
        }

        let (dist, p_gen) = if pass == Pass::Full {
            let out = output_projection(
                g,
                &p.projection,
                dec.hidden,
                goal_vec,
                gap,
                context,
                prev_embedding,
                alpha,
                &ctx.doc_ext,
                ctx.ext_len,
            );
            (Some(out.dist), Some(out.p_gen))
        } else {
            (None, None)
        };
        let next = StepState {
            decoder: dec,
            goal,
            history,
            focus,
        };
        Ok((
            next,
            StepTrace {
                alpha,
                focus,
                tau_m,
                dist,
                p_gen,
            },
        ))
    }

    /// Teacher-forced pass over the gold summary, building every loss term
    /// on `g`.
    pub fn forward(&self, g: &mut Graph, ex: &EncodedExample, pass: Pass) -> Result<ForwardTrace> {
        self.check_example(ex, true)?;
        let cfg = &self.config;
        let variant = cfg.variant;
        let p = self.bind(g);
        let ctx = self.context(g, &p, ex, pass)?;
        let targets = ex.targets();
        let steps = targets.len().min(cfg.max_decode_len);
        if steps < targets.len() {
            log::warn!("gold summary of {} tokens truncated to {steps} steps", targets.len());
        }
        let mut state = self.initial_state(g, &p, &ctx);
        let mut prev = crate::corpus::START;
        let mut trace = Vec::with_capacity(steps);
        for &target in &targets[..steps] {
            let (next, t) = self.step(g, &p, &ctx, &state, prev, pass)?;
            trace.push(t);
            state = next;
            prev = target;
        }

        let zero = g.vector(vec![0.0]);
        let nll = if pass == Pass::Full {
            let dists: Vec<Var> = trace.iter().filter_map(|t| t.dist).collect();
            decoder::nll_loss(g, &dists, &targets[..steps], cfg.nll_reduction)
        } else {
            zero
        };
        let denoise = match (&ex.comment_labels, ctx.salience) {
            (Some(labels), Some(s)) if pass == Pass::Full => denoising_loss(g, Some(s), labels),
            _ => zero,
        };
        let taus: Vec<Var> = trace.iter().filter_map(|t| t.tau_m).collect();
        let gen_adv = if variant.uses_discriminator() && pass == Pass::Full {
            generator_adv_loss(g, &taus, cfg.discount)
        } else {
            zero
        };
        let disc_objective = match ctx.tau_u {
            Some(tau_u) => discriminator_objective(g, tau_u, &taus, cfg.discount),
            None => zero,
        };
        Ok(ForwardTrace {
            steps: trace,
            salience: ctx.salience,
            reader_attention: ctx.reader.map(|r| r.0),
            losses: Losses {
                nll,
                denoise,
                gen_adv,
                disc_objective,
            },
        })
    }

    /// Predicted comment salience, `None` for variants without the
    /// classifier or examples without comments.
    pub fn salience(&self, ex: &EncodedExample) -> Result<Option<Vec<f64>>> {
        self.check_example(ex, false)?;
        if !self.variant().uses_denoising() || ex.comments.is_empty() {
            return Ok(None);
        }
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let doc = encode_document(&mut g, p.embedding, &ex.document, &p.doc_encoder)?;
        let comments = encode_comments(&mut g, p.embedding, &ex.comments, &p.comment_encoder)?;
        let scores = comment_salience(&mut g, &comments, doc.final_state, &p.salience);
        Ok(scores.scores.map(|s| g.value(s).to_vec()))
    }

    /// Beam-search decoding. `beam = 1` is greedy.
    pub fn generate(&self, ex: &EncodedExample, beam: usize, max_len: usize) -> Result<Generation> {
        self.check_example(ex, false)?;
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let ctx = self.context(&mut g, &p, ex, Pass::Full)?;
        let start = self.initial_state(&mut g, &p, &ctx);
        let mut runner = Runner {
            model: self,
            graph: g,
            bound: p,
            ctx,
            error: None,
        };
        let hyp = if beam == 1 {
            decoder::greedy(&mut runner, start, max_len)
        } else {
            decoder::beam_search(&mut runner, start, beam, max_len)
        };
        if let Some(e) = runner.error {
            return Err(e);
        }
        let g = &runner.graph;
        let tokens = ex.ext.decode(&self.vocab, &hyp.tokens);
        Ok(Generation {
            tokens,
            log_prob: hyp.log_prob,
            finished: hyp.finished,
            attention: hyp.state.history.iter().map(|&a| g.value(a).to_vec()).collect(),
            reader_attention: runner.ctx.reader.map(|r| g.value(r.0).to_vec()),
            salience: runner.ctx.salience.map(|s| g.value(s).to_vec()),
            final_focus: hyp.state.focus.map(|f| g.value(f).to_vec()),
            ids: hyp.tokens,
        })
    }
}

/// Adapts the model to [`StepModel`] on a private graph.
struct Runner<'a> {
    model: &'a Model,
    graph: Graph,
    bound: Bound,
    ctx: ExampleContext,
    error: Option<Error>,
}

impl StepModel for Runner<'_> {
    type State = StepState;

    fn step(&mut self, state: &StepState, token: usize) -> (StepState, Vec<f64>) {
        let result = self
            .model
            .step(&mut self.graph, &self.bound, &self.ctx, state, token, Pass::Full);
        match result {
            Ok((next, trace)) => {
                let dist = trace.dist.expect("full pass produces a distribution");
                let logp = self
                    .graph
                    .value(dist)
                    .iter()
                    .map(|&p| p.max(decoder::PROB_FLOOR).ln())
                    .collect();
                (next, logp)
            }
            Err(e) => {
                let n = self.ctx.ext_len;
                self.error.get_or_insert(e);
                // everything but STOP is impossible so decoding ends at once
                let mut logp = vec![f64::NEG_INFINITY; n];
                logp[crate::corpus::STOP] = 0.0;
                (state.clone(), logp)
            }
        }
    }
}
