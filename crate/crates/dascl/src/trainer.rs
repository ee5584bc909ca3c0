//! Mini-batch training over paired original/simplified documents: Adam
//! updates for all encoder parameters including the temperature, epoch-wise
//! model selection on a validation metric, few-shot subsampling, and
//! embedding export.

use std::io::Write;

use ndarray::{Array1, Array2};
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::encoder::{
    self, backward, encode, EncoderDims, EncoderParams, ForwardTrace, Gradients, Vocab,
};
use crate::error::TrainError;
use crate::lexicon::{simplify_docs, tokenize, LexiconSet, TokenizedDoc};
use crate::losses::{
    assemble_batch, ce_loss, dascl_loss, scl_loss, total_loss, ContrastiveBatch, ContrastiveKind,
    LossConfig, LossMode,
};
use crate::metrics::{eval_report, EvalReport, ScoredPrediction};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

// Independent deterministic RNG streams derived from the run seed.
const STREAM_FEW_SHOT: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

/// Mixes a base seed, a stream id, and an index into an independent seed
/// (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Which validation metric picks the final epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    Accuracy,
    F1Positive,
}

pub fn metric_value(report: &EvalReport, metric: SelectionMetric) -> f64 {
    match metric {
        SelectionMetric::Accuracy => report.accuracy,
        SelectionMetric::F1Positive => report.f1_positive,
    }
}

/// Encoder layer sizes as configured; the vocabulary size is filled in from
/// the training data.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    #[serde(default = "default_embedding")]
    pub embedding: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_projection")]
    pub projection: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
}

fn default_embedding() -> usize {
    encoder::DEFAULT_EMBEDDING
}
fn default_hidden() -> usize {
    encoder::DEFAULT_HIDDEN
}
fn default_projection() -> usize {
    encoder::DEFAULT_PROJECTION
}
fn default_classes() -> usize {
    encoder::DEFAULT_CLASSES
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            embedding: default_embedding(),
            hidden: default_hidden(),
            projection: default_projection(),
            classes: default_classes(),
        }
    }
}

impl ModelDims {
    pub fn with_vocab(&self, vocab: usize) -> EncoderDims {
        EncoderDims {
            vocab,
            embedding: self.embedding,
            hidden: self.hidden,
            projection: self.projection,
            classes: self.classes,
        }
    }
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: LossMode,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_tau_init")]
    pub tau_init: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub dims: ModelDims,
    #[serde(default = "default_selection_metric")]
    pub selection_metric: SelectionMetric,
    #[serde(default)]
    pub few_shot_n: Option<usize>,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

fn default_lambda() -> f64 {
    0.9
}
fn default_tau_init() -> f64 {
    0.3
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_batch_size() -> usize {
    16
}
fn default_epochs() -> usize {
    50
}
fn default_selection_metric() -> SelectionMetric {
    SelectionMetric::Accuracy
}

impl TrainConfig {
    pub fn new(mode: LossMode, seed: u64) -> Self {
        Self {
            mode,
            lambda: default_lambda(),
            tau_init: default_tau_init(),
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            seed,
            dims: ModelDims::default(),
            selection_metric: default_selection_metric(),
            few_shot_n: None,
            weight_decay: 0.0,
            grad_clip: None,
        }
    }

    /// Numeric and structural checks shared by every caller.
    pub fn validate_numerics(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::InvalidConfig(msg));
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return fail(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.lambda) || !self.lambda.is_finite() {
            return fail(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if self.tau_init <= 0.0 || !self.tau_init.is_finite() {
            return fail(format!("tau_init must be > 0, got {}", self.tau_init));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return fail(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if let Some(c) = self.grad_clip {
            if c <= 0.0 || !c.is_finite() {
                return fail(format!("grad_clip must be > 0, got {c}"));
            }
        }
        if let Some(n) = self.few_shot_n {
            if n == 0 {
                return fail("few_shot_n must be >= 1".into());
            }
        }
        for (name, v) in [
            ("dims.embedding", self.dims.embedding),
            ("dims.hidden", self.dims.hidden),
            ("dims.projection", self.dims.projection),
            ("dims.classes", self.dims.classes),
        ] {
            if v == 0 {
                return fail(format!("{name} must be >= 1"));
            }
        }
        if self.dims.classes != 2 {
            return fail(format!(
                "dims.classes must be 2 (evaluation metrics are binary), got {}",
                self.dims.classes
            ));
        }
        Ok(())
    }

    /// Full validation, including the rule that contrastive modes need a
    /// positive blend weight.
    pub fn validate(&self) -> Result<(), TrainError> {
        self.validate_numerics()?;
        if self.mode.contrastive().is_some() && self.lambda == 0.0 {
            return Err(TrainError::InvalidConfig(format!(
                "mode {} carries a contrastive term; lambda must be > 0",
                self.mode
            )));
        }
        Ok(())
    }
}

/// One epoch's training losses, temperature, and validation metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ce_loss: f64,
    pub contrastive_loss: Option<f64>,
    pub total_loss: f64,
    pub tau: f64,
    pub validation: EvalReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub selected_epoch: usize,
}

/// A finished run: the best-epoch parameters, the vocabulary they index,
/// and the per-epoch history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub vocab: Vocab,
    pub history: TrainHistory,
}

/// Uniform sample of `n` examples without replacement, with no label
/// stratification. Deterministic per seed; the output order is the sampling
/// order.
pub fn few_shot_sample(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus, TrainError> {
    let len = corpus.len();
    if n == 0 || n > len {
        return Err(TrainError::BadSampleSize { n, len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..len).collect();
    for i in 0..n {
        let j = rng.random_range(i..len);
        indices.swap(i, j);
    }
    let examples = indices[..n]
        .iter()
        .map(|&i| corpus.examples()[i].clone())
        .collect();
    Ok(Corpus::from_examples(examples).expect("ids were unique in the source"))
}

/// Shuffles document indices once and chunks them; the final short batch is
/// kept. Each index selects an (original, twin, label) triple.
pub fn make_batches(
    originals_len: usize,
    simplified_len: usize,
    batch_size: usize,
    epoch_seed: u64,
) -> Result<Vec<Vec<usize>>, TrainError> {
    if originals_len != simplified_len {
        return Err(TrainError::MisalignedCorpora(format!(
            "{originals_len} originals vs {simplified_len} simplified documents"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    let mut indices: Vec<usize> = (0..originals_len).collect();
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    Ok(indices.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Adam moment buffers plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    t: usize,
}

impl AdamState {
    pub fn new(dims: &EncoderDims) -> Self {
        Self {
            m: Gradients::zeros(dims),
            v: Gradients::zeros(dims),
            t: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.t
    }
}

/// One Adam update with bias correction; `rho` is updated like any other
/// parameter. Rejects non-finite gradients.
pub fn adam_step(
    params: &mut EncoderParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TrainError> {
    if !grads.is_finite() {
        return Err(TrainError::NonFinite {
            what: "gradients in Adam step".into(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);

    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    };

    {
        let p_tensors = params.tensors_mut();
        let g_tensors = grads.tensors();
        let m_tensors = state.m.tensors_mut();
        let v_tensors = state.v.tensors_mut();
        for (((p, g), m), v) in p_tensors
            .into_iter()
            .zip(g_tensors)
            .zip(m_tensors)
            .zip(v_tensors)
        {
            for i in 0..p.len() {
                update(&mut p[i], g[i], &mut m[i], &mut v[i]);
            }
        }
    }
    update(&mut params.rho, grads.rho, &mut state.m.rho, &mut state.v.rho);
    Ok(())
}

/// Losses produced by one batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss {
    pub ce: f64,
    pub contrastive: Option<f64>,
    pub total: f64,
}

/// Forward and backward over one paired batch: routes documents into the
/// losses per the mode, blends gradients by lambda, and returns exact
/// parameter gradients. This is the unit the gradient checker verifies.
pub fn batch_forward_backward(
    params: &EncoderParams,
    originals: &[&[usize]],
    simplified: &[&[usize]],
    labels: &[usize],
    loss_cfg: &LossConfig,
) -> Result<(BatchLoss, Gradients), TrainError> {
    loss_cfg.validate()?;
    let n = originals.len();
    let mode = loss_cfg.mode;
    let lambda = loss_cfg.lambda;

    // Route over indices 0..n (originals) and n..2n (twins).
    let orig_sel: Vec<usize> = (0..n).collect();
    let simp_sel: Vec<usize> = (n..2 * n).collect();
    let plan = assemble_batch(&orig_sel, &simp_sel, labels, mode)?;

    let mut traces: Vec<Option<ForwardTrace>> = Vec::with_capacity(2 * n);
    for doc in originals {
        traces.push(Some(encode(params, doc)?));
    }
    if mode.uses_simplified() {
        if simplified.len() != n {
            return Err(TrainError::MisalignedCorpora(format!(
                "{n} originals vs {} simplified documents",
                simplified.len()
            )));
        }
        for doc in simplified {
            traces.push(Some(encode(params, doc)?));
        }
    } else {
        traces.resize_with(2 * n, || None);
    }
    let trace_of = |sel: usize| traces[sel].as_ref().expect("trace encoded for this doc");

    // Cross-entropy over the routed rows.
    let classes = params.dims.classes;
    let mut probs = Array2::zeros((plan.ce_docs.len(), classes));
    for (row, &&sel) in plan.ce_docs.iter().enumerate() {
        probs.row_mut(row).assign(&trace_of(sel).probs);
    }
    let (ce, ce_grad) = ce_loss(&probs, &plan.ce_labels)?;

    // Contrastive term, if the mode has one.
    let mut contrastive_value = None;
    let mut psi_grads: Vec<Option<Array1<f64>>> = vec![None; 2 * n];
    let mut d_tau = 0.0;
    if let Some(assembly) = &plan.contrastive {
        let projection = params.dims.projection;
        let mut emb = Array2::zeros((assembly.docs.len(), projection));
        for (row, &&sel) in assembly.docs.iter().enumerate() {
            emb.row_mut(row).assign(&trace_of(sel).psi);
        }
        let out = match assembly.kind {
            ContrastiveKind::Dascl => {
                let batch = ContrastiveBatch::new(emb, assembly.labels.clone())?;
                dascl_loss(&batch, params.tau())?
            }
            ContrastiveKind::Scl => scl_loss(&emb, &assembly.labels, params.tau())?,
        };
        contrastive_value = Some(out.loss);
        // lambda == 0 contributes nothing; skip so the gradient path is
        // bitwise identical to the plain cross-entropy mode.
        if lambda > 0.0 {
            for (row, &&sel) in assembly.docs.iter().enumerate() {
                let g = out.d_embeddings.row(row).to_owned() * lambda;
                psi_grads[sel] = Some(g);
            }
            d_tau = lambda * out.d_tau;
        }
    }

    let ce_scale = if contrastive_value.is_some() {
        1.0 - lambda
    } else {
        1.0
    };
    let mut logit_grads: Vec<Option<Array1<f64>>> = vec![None; 2 * n];
    for (row, &&sel) in plan.ce_docs.iter().enumerate() {
        logit_grads[sel] = Some(ce_grad.row(row).to_owned() * ce_scale);
    }

    let total = total_loss(ce, contrastive_value, lambda)?;

    let contributions = (0..2 * n).filter_map(|sel| {
        let d_logits = logit_grads[sel].as_ref();
        let d_psi = psi_grads[sel].as_ref();
        if d_logits.is_none() && d_psi.is_none() {
            None
        } else {
            Some((trace_of(sel), d_logits, d_psi))
        }
    });
    let grads = backward(params, contributions, d_tau)?;

    Ok((
        BatchLoss {
            ce,
            contrastive: contrastive_value,
            total,
        },
        grads,
    ))
}

/// Tokenizes every example's text.
pub fn tokenize_corpus(corpus: &Corpus) -> Vec<TokenizedDoc> {
    corpus.examples().iter().map(|ex| tokenize(&ex.text)).collect()
}

/// Maps tokenized documents to id sequences; empty documents become `[<unk>]`.
pub fn docs_to_ids(docs: &[TokenizedDoc], vocab: &Vocab) -> Vec<Vec<usize>> {
    docs.iter().map(|d| vocab.encode_doc(d)).collect()
}

/// Scores documents with the classifier head: argmax prediction plus the
/// positive-class probability. Binary classifiers only.
pub fn evaluate(
    params: &EncoderParams,
    docs: &[Vec<usize>],
    labels: &[usize],
) -> Result<(EvalReport, Vec<ScoredPrediction>), TrainError> {
    if params.dims.classes != 2 {
        return Err(TrainError::InvalidConfig(format!(
            "evaluation metrics are binary; model has {} classes",
            params.dims.classes
        )));
    }
    if docs.len() != labels.len() {
        return Err(TrainError::MisalignedCorpora(format!(
            "{} documents vs {} labels",
            docs.len(),
            labels.len()
        )));
    }
    let mut preds = Vec::with_capacity(docs.len());
    for (doc, &truth) in docs.iter().zip(labels) {
        let trace = encode(params, doc)?;
        let predicted = if trace.probs[1] > trace.probs[0] { 1 } else { 0 };
        preds.push(ScoredPrediction {
            truth,
            predicted,
            score: trace.probs[1],
        });
    }
    let report = eval_report(&preds)?;
    Ok((report, preds))
}

/// Runs the full training protocol.
///
/// Both text views are prepared once up front: originals are tokenized,
/// twins come from keyword simplification, and the vocabulary covers both.
/// Every epoch shuffles, steps Adam over paired batches, and evaluates on
/// the validation originals only; the parameters from the epoch with the
/// best validation metric (earliest on ties) are returned.
pub fn train(
    config: &TrainConfig,
    train_corpus: &Corpus,
    val_corpus: &Corpus,
    lexicons: &LexiconSet,
) -> Result<TrainOutcome, TrainError> {
    config.validate_numerics()?;
    if train_corpus.is_empty() || val_corpus.is_empty() {
        return Err(TrainError::InvalidConfig(
            "training and validation corpora must be nonempty".into(),
        ));
    }
    let classes = config.dims.classes;
    train_corpus.validate_labels(classes)?;
    val_corpus.validate_labels(classes)?;

    let seed = config.seed;
    let sampled;
    let train_corpus = match config.few_shot_n {
        Some(n) => {
            sampled = few_shot_sample(train_corpus, n, derive_seed(seed, STREAM_FEW_SHOT, 0))?;
            &sampled
        }
        None => train_corpus,
    };

    let originals = tokenize_corpus(train_corpus);
    let twins = simplify_docs(&originals, lexicons);
    let vocab = Vocab::build(originals.iter().chain(twins.iter()));
    let orig_ids = docs_to_ids(&originals, &vocab);
    let simp_ids = docs_to_ids(&twins, &vocab);
    let labels = train_corpus.labels();

    let val_ids = docs_to_ids(&tokenize_corpus(val_corpus), &vocab);
    let val_labels = val_corpus.labels();

    let dims = config.dims.with_vocab(vocab.len());
    let mut params = encoder::init_params(dims, derive_seed(seed, STREAM_INIT, 0), config.tau_init)?;
    let mut adam = AdamState::new(&dims);
    let loss_cfg = LossConfig {
        mode: config.mode,
        lambda: config.lambda,
    };

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, EncoderParams)> = None;

    for epoch in 1..=config.epochs {
        let batches = make_batches(
            orig_ids.len(),
            simp_ids.len(),
            config.batch_size,
            derive_seed(seed, STREAM_SHUFFLE, epoch as u64),
        )?;

        let mut ce_sum = 0.0;
        let mut con_sum = 0.0;
        let mut total_sum = 0.0;
        let mut docs_seen = 0usize;
        let mut saw_contrastive = false;

        for (step, batch) in batches.iter().enumerate() {
            let b_orig: Vec<&[usize]> = batch.iter().map(|&i| orig_ids[i].as_slice()).collect();
            let b_simp: Vec<&[usize]> = batch.iter().map(|&i| simp_ids[i].as_slice()).collect();
            let b_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();

            let (loss, mut grads) =
                batch_forward_backward(&params, &b_orig, &b_simp, &b_labels, &loss_cfg)?;
            if !loss.total.is_finite() {
                return Err(TrainError::NonFinite {
                    what: format!("total loss at epoch {epoch}, step {}", step + 1),
                });
            }

            if config.weight_decay > 0.0 {
                grads.apply_weight_decay(&params, config.weight_decay);
            }
            if let Some(max_norm) = config.grad_clip {
                let norm = grads.global_norm();
                if norm > max_norm {
                    grads.scale(max_norm / norm);
                }
            }
            adam_step(&mut params, &grads, &mut adam, config.learning_rate)?;

            let weight = batch.len() as f64;
            ce_sum += loss.ce * weight;
            total_sum += loss.total * weight;
            if let Some(c) = loss.contrastive {
                con_sum += c * weight;
                saw_contrastive = true;
            }
            docs_seen += batch.len();
        }

        let denom = docs_seen as f64;
        let (report, _) = evaluate(&params, &val_ids, &val_labels)?;
        let metric = metric_value(&report, config.selection_metric);
        let improved = match &best {
            Some((best_metric, _, _)) => metric > *best_metric,
            None => true,
        };
        if improved {
            best = Some((metric, epoch, params.clone()));
        }
        history.push(EpochRecord {
            epoch,
            ce_loss: ce_sum / denom,
            contrastive_loss: saw_contrastive.then_some(con_sum / denom),
            total_loss: total_sum / denom,
            tau: params.tau(),
            validation: report,
        });
    }

    let (_, selected_epoch, best_params) = best.expect("epochs >= 1");
    Ok(TrainOutcome {
        params: best_params,
        vocab,
        history: TrainHistory {
            epochs: history,
            selected_epoch,
        },
    })
}

impl Gradients {
    /// Adds `wd * parameter` to every weight gradient (classic L2 decay);
    /// the temperature is left undecayed.
    pub fn apply_weight_decay(&mut self, params: &EncoderParams, wd: f64) {
        self.embedding.scaled_add(wd, &params.embedding);
        self.w_hidden.scaled_add(wd, &params.w_hidden);
        self.b_hidden.scaled_add(wd, &params.b_hidden);
        self.w_proj.scaled_add(wd, &params.w_proj);
        self.b_proj.scaled_add(wd, &params.b_proj);
        self.w_class.scaled_add(wd, &params.w_class);
        self.b_class.scaled_add(wd, &params.b_class);
    }
}

/// Writes one CSV row per document: id, label, the hidden activation, and
/// the normalized projection, at fixed precision. An empty corpus yields a
/// header-only file.
pub fn export_embeddings<W: Write>(
    params: &EncoderParams,
    vocab: &Vocab,
    corpus: &Corpus,
    mut out: W,
) -> Result<(), TrainError> {
    let dims = &params.dims;
    let mut header = String::from("id,label");
    for i in 0..dims.hidden {
        header.push_str(&format!(",h_{i}"));
    }
    for i in 0..dims.projection {
        header.push_str(&format!(",psi_{i}"));
    }
    writeln!(out, "{header}")?;

    for ex in corpus.examples() {
        let ids = vocab.encode_doc(&tokenize(&ex.text));
        let trace = encode(params, &ids)?;
        let mut row = format!("{},{}", csv_field(&ex.id), ex.label);
        for v in trace.hidden.iter().chain(trace.psi.iter()) {
            row.push_str(&format!(",{v:.9e}"));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
