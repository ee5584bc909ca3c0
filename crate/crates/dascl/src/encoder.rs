//! A small fully differentiable text encoder: embedding lookup, mean
//! pooling, one tanh hidden layer, then two heads. The classifier head
//! produces class probabilities; the linear projection head produces the
//! L2-normalized embedding the contrastive losses consume.
//!
//! The temperature is stored as `rho` with `tau = exp(rho)` so unconstrained
//! updates keep it positive.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::EncoderError;
use crate::lexicon::TokenizedDoc;

/// Reserved token for out-of-vocabulary words and empty documents.
pub const UNK_TOKEN: &str = "<unk>";
/// The id of [`UNK_TOKEN`]; always 0.
pub const UNK_ID: usize = 0;

/// Token-to-id map with dense ids `0..V-1`. Replacement tokens such as
/// `<positive>` are ordinary vocabulary items.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from documents in iteration order, assigning ids
    /// by first occurrence. `<unk>` is always present with id 0.
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a TokenizedDoc>) -> Self {
        let mut tokens = vec![UNK_TOKEN.to_string()];
        let mut index = HashMap::from([(UNK_TOKEN.to_string(), UNK_ID)]);
        for doc in docs {
            for tok in doc.tokens() {
                if !index.contains_key(tok) {
                    index.insert(tok.clone(), tokens.len());
                    tokens.push(tok.clone());
                }
            }
        }
        Self { tokens, index }
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    /// Maps a document to token ids; an empty document becomes `[<unk>]`.
    pub fn encode_doc(&self, doc: &TokenizedDoc) -> Vec<usize> {
        if doc.is_empty() {
            return vec![UNK_ID];
        }
        doc.tokens().iter().map(|t| self.id_or_unk(t)).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = String;

    fn try_from(tokens: Vec<String>) -> Result<Self, String> {
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(format!("vocabulary must start with {UNK_TOKEN}"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), i).is_some() {
                return Err(format!("duplicate vocabulary token {tok:?}"));
            }
        }
        Ok(Self { tokens, index })
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

/// Layer sizes. The defaults keep everything desk-sized; larger heads
/// (e.g. a 256-dimensional projection) are a config change away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub vocab: usize,
    pub embedding: usize,
    pub hidden: usize,
    pub projection: usize,
    pub classes: usize,
}

pub const DEFAULT_EMBEDDING: usize = 64;
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_PROJECTION: usize = 32;
pub const DEFAULT_CLASSES: usize = 2;

impl EncoderDims {
    pub fn defaults(vocab: usize) -> Self {
        Self {
            vocab,
            embedding: DEFAULT_EMBEDDING,
            hidden: DEFAULT_HIDDEN,
            projection: DEFAULT_PROJECTION,
            classes: DEFAULT_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        for (name, v) in [
            ("vocab", self.vocab),
            ("embedding", self.embedding),
            ("hidden", self.hidden),
            ("projection", self.projection),
            ("classes", self.classes),
        ] {
            if v == 0 {
                return Err(EncoderError::InvalidDims(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// All trainable weights. `tau = exp(rho)` is the contrastive temperature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderParams {
    pub dims: EncoderDims,
    pub embedding: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub b_hidden: Array1<f64>,
    pub w_proj: Array2<f64>,
    pub b_proj: Array1<f64>,
    pub w_class: Array2<f64>,
    pub b_class: Array1<f64>,
    pub rho: f64,
}

impl EncoderParams {
    pub fn tau(&self) -> f64 {
        self.rho.exp()
    }

    /// Flattens every parameter (rho last) in a fixed order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(flat_len(&self.dims));
        for t in self.tensors() {
            out.extend_from_slice(t);
        }
        out.push(self.rho);
        out
    }

    /// Overwrites every parameter from a flat vector produced by
    /// [`EncoderParams::to_flat`].
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<(), EncoderError> {
        if flat.len() != flat_len(&self.dims) {
            return Err(EncoderError::ShapeMismatch(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                flat_len(&self.dims)
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        self.rho = flat[offset];
        Ok(())
    }

    fn tensors(&self) -> [&[f64]; 7] {
        [
            as_slice(&self.embedding),
            as_slice(&self.w_hidden),
            self.b_hidden.as_slice().expect("contiguous"),
            as_slice(&self.w_proj),
            self.b_proj.as_slice().expect("contiguous"),
            as_slice(&self.w_class),
            self.b_class.as_slice().expect("contiguous"),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            as_slice_mut(&mut self.embedding),
            as_slice_mut(&mut self.w_hidden),
            self.b_hidden.as_slice_mut().expect("contiguous"),
            as_slice_mut(&mut self.w_proj),
            self.b_proj.as_slice_mut().expect("contiguous"),
            as_slice_mut(&mut self.w_class),
            self.b_class.as_slice_mut().expect("contiguous"),
        ]
    }
}

fn as_slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn as_slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

pub(crate) fn flat_len(dims: &EncoderDims) -> usize {
    dims.vocab * dims.embedding
        + dims.embedding * dims.hidden
        + dims.hidden
        + dims.hidden * dims.projection
        + dims.projection
        + dims.hidden * dims.classes
        + dims.classes
        + 1
}

/// Glorot-uniform weights, zero biases, `rho = ln(tau_init)`. Deterministic
/// for a given seed.
pub fn init_params(
    dims: EncoderDims,
    seed: u64,
    tau_init: f64,
) -> Result<EncoderParams, EncoderError> {
    dims.validate()?;
    if tau_init <= 0.0 || !tau_init.is_finite() {
        return Err(EncoderError::InvalidTauInit(tau_init));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glorot = |rows: usize, cols: usize| {
        let s = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-s..s)).collect();
        Array2::from_shape_vec((rows, cols), data).expect("shape matches data")
    };
    Ok(EncoderParams {
        embedding: glorot(dims.vocab, dims.embedding),
        w_hidden: glorot(dims.embedding, dims.hidden),
        b_hidden: Array1::zeros(dims.hidden),
        w_proj: glorot(dims.hidden, dims.projection),
        b_proj: Array1::zeros(dims.projection),
        w_class: glorot(dims.hidden, dims.classes),
        b_class: Array1::zeros(dims.classes),
        rho: tau_init.ln(),
        dims,
    })
}

/// Cached activations for one document, kept for backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub token_ids: Vec<usize>,
    pub pooled: Array1<f64>,
    pub hidden: Array1<f64>,
    pub proj: Array1<f64>,
    pub proj_norm: f64,
    pub psi: Array1<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

pub(crate) fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|x| (x - max).exp());
    let sum = exps.sum();
    exps / sum
}

/// Runs the forward pass and caches every intermediate activation.
pub fn encode(params: &EncoderParams, doc: &[usize]) -> Result<ForwardTrace, EncoderError> {
    if doc.is_empty() {
        return Err(EncoderError::EmptyDoc);
    }
    let dims = &params.dims;
    let mut pooled = Array1::zeros(dims.embedding);
    for &id in doc {
        if id >= dims.vocab {
            return Err(EncoderError::TokenIdOutOfRange {
                id,
                vocab: dims.vocab,
            });
        }
        pooled += &params.embedding.row(id);
    }
    pooled /= doc.len() as f64;

    let hidden = (pooled.dot(&params.w_hidden) + &params.b_hidden).mapv(f64::tanh);
    let proj = hidden.dot(&params.w_proj) + &params.b_proj;
    let proj_norm = proj.dot(&proj).sqrt();
    if proj_norm == 0.0 {
        return Err(EncoderError::ZeroNormProjection);
    }
    let psi = &proj / proj_norm;
    let logits = hidden.dot(&params.w_class) + &params.b_class;
    let probs = softmax(&logits);

    Ok(ForwardTrace {
        token_ids: doc.to_vec(),
        pooled,
        hidden,
        proj,
        proj_norm,
        psi,
        logits,
        probs,
    })
}

/// Parameter gradients; shapes mirror [`EncoderParams`]. Also reused as
/// Adam moment buffers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embedding: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub b_hidden: Array1<f64>,
    pub w_proj: Array2<f64>,
    pub b_proj: Array1<f64>,
    pub w_class: Array2<f64>,
    pub b_class: Array1<f64>,
    pub rho: f64,
}

impl Gradients {
    pub fn zeros(dims: &EncoderDims) -> Self {
        Self {
            embedding: Array2::zeros((dims.vocab, dims.embedding)),
            w_hidden: Array2::zeros((dims.embedding, dims.hidden)),
            b_hidden: Array1::zeros(dims.hidden),
            w_proj: Array2::zeros((dims.hidden, dims.projection)),
            b_proj: Array1::zeros(dims.projection),
            w_class: Array2::zeros((dims.hidden, dims.classes)),
            b_class: Array1::zeros(dims.classes),
            rho: 0.0,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in self.tensors() {
            out.extend_from_slice(t);
        }
        out.push(self.rho);
        out
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 7] {
        [
            as_slice(&self.embedding),
            as_slice(&self.w_hidden),
            self.b_hidden.as_slice().expect("contiguous"),
            as_slice(&self.w_proj),
            self.b_proj.as_slice().expect("contiguous"),
            as_slice(&self.w_class),
            self.b_class.as_slice().expect("contiguous"),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            as_slice_mut(&mut self.embedding),
            as_slice_mut(&mut self.w_hidden),
            self.b_hidden.as_slice_mut().expect("contiguous"),
            as_slice_mut(&mut self.w_proj),
            self.b_proj.as_slice_mut().expect("contiguous"),
            as_slice_mut(&mut self.w_class),
            self.b_class.as_slice_mut().expect("contiguous"),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())) && self.rho.is_finite()
    }

    pub fn global_norm(&self) -> f64 {
        let mut sq = self.rho * self.rho;
        for t in self.tensors() {
            sq += t.iter().map(|v| v * v).sum::<f64>();
        }
        sq.sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
        self.rho *= factor;
    }

    /// Adds one document's contribution given upstream gradients on its
    /// logits and/or its normalized projection.
    fn accumulate(
        &mut self,
        params: &EncoderParams,
        trace: &ForwardTrace,
        d_logits: Option<&Array1<f64>>,
        d_psi: Option<&Array1<f64>>,
    ) -> Result<(), EncoderError> {
        let dims = &params.dims;
        let mut d_hidden = Array1::<f64>::zeros(dims.hidden);

        if let Some(gl) = d_logits {
            if gl.len() != dims.classes {
                return Err(EncoderError::ShapeMismatch(format!(
                    "d_logits has {} entries, expected {}",
                    gl.len(),
                    dims.classes
                )));
            }
            for (i, &h) in trace.hidden.iter().enumerate() {
                for (c, &g) in gl.iter().enumerate() {
                    self.w_class[(i, c)] += h * g;
                }
            }
            self.b_class += gl;
            d_hidden += &params.w_class.dot(gl);
        }

        if let Some(gp) = d_psi {
            if gp.len() != dims.projection {
                return Err(EncoderError::ShapeMismatch(format!(
                    "d_psi has {} entries, expected {}",
                    gp.len(),
                    dims.projection
                )));
            }
            // Through the L2 normalization: d_proj = (I - psi psi^T) g / |proj|
            let along = gp.dot(&trace.psi);
            let d_proj = (gp - &(&trace.psi * along)) / trace.proj_norm;
            for (i, &h) in trace.hidden.iter().enumerate() {
                for (p, &g) in d_proj.iter().enumerate() {
                    self.w_proj[(i, p)] += h * g;
                }
            }
            self.b_proj += &d_proj;
            d_hidden += &params.w_proj.dot(&d_proj);
        }

        // tanh' = 1 - hidden^2
        let d_pre = &d_hidden * &trace.hidden.mapv(|h| 1.0 - h * h);
        for (i, &x) in trace.pooled.iter().enumerate() {
            for (j, &g) in d_pre.iter().enumerate() {
                self.w_hidden[(i, j)] += x * g;
            }
        }
        self.b_hidden += &d_pre;

        let d_pooled = params.w_hidden.dot(&d_pre) / trace.token_ids.len() as f64;
        for &id in &trace.token_ids {
            let mut row = self.embedding.row_mut(id);
            row += &d_pooled;
        }
        Ok(())
    }
}

/// Exact reverse-mode gradients for a batch of traces.
///
/// `d_tau` is the upstream gradient on the temperature; it lands on `rho`
/// through `d rho = d tau * tau`.
pub fn backward<'a>(
    params: &EncoderParams,
    contributions: impl IntoIterator<Item = (&'a ForwardTrace, Option<&'a Array1<f64>>, Option<&'a Array1<f64>>)>,
    d_tau: f64,
) -> Result<Gradients, EncoderError> {
    let mut grads = Gradients::zeros(&params.dims);
    for (trace, d_logits, d_psi) in contributions {
        grads.accumulate(params, trace, d_logits, d_psi)?;
    }
    grads.rho = d_tau * params.tau();
    Ok(grads)
}
