//! The loss family: multiclass cross-entropy, the supervised contrastive
//! objective over originals only, and its dictionary-assisted extension
//! over originals plus their keyword-simplified twins. Each loss comes with
//! exact gradients with respect to the embeddings and the temperature.
//!
//! The dictionary-assisted loss over a batch of N originals and N twins is
//!
//! ```text
//! -(1/2N) * sum_i [1/(2N_{y_i}-1)] *
//!     sum_{j != i, y_j = y_i} log[ exp(psi_i . psi_j / tau)
//!                                  / sum_{k != i} exp(psi_i . psi_k / tau) ]
//! ```
//!
//! where `N_y` counts originals with label y. The plain supervised
//! contrastive objective runs over the N originals only, uses coefficient
//! `1/(N_{y_i}-1)`, and carries no outer `1/N` factor; anchors whose class
//! is unique in the batch contribute zero.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::LossError;

const UNIT_NORM_TOL: f64 = 1e-9;

/// Which losses a training mode combines, and which texts feed each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    #[serde(rename = "CE")]
    Ce,
    #[serde(rename = "CE_DA")]
    CeDa,
    #[serde(rename = "CE_SCL")]
    CeScl,
    #[serde(rename = "CE_DASCL")]
    CeDascl,
    #[serde(rename = "CE_DASCL_DA")]
    CeDasclDa,
}

/// The contrastive term a mode carries, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastiveKind {
    Dascl,
    Scl,
}

impl LossMode {
    pub const ALL: [LossMode; 5] = [
        LossMode::Ce,
        LossMode::CeDa,
        LossMode::CeScl,
        LossMode::CeDascl,
        LossMode::CeDasclDa,
    ];

    pub fn contrastive(self) -> Option<ContrastiveKind> {
        match self {
            LossMode::Ce | LossMode::CeDa => None,
            LossMode::CeScl => Some(ContrastiveKind::Scl),
            LossMode::CeDascl | LossMode::CeDasclDa => Some(ContrastiveKind::Dascl),
        }
    }

    /// Whether the keyword-simplified texts also feed cross-entropy.
    pub fn augments_ce(self) -> bool {
        matches!(self, LossMode::CeDa | LossMode::CeDasclDa)
    }

    /// Whether the simplified twins are needed at all during training.
    pub fn uses_simplified(self) -> bool {
        self.augments_ce() || self.contrastive() == Some(ContrastiveKind::Dascl)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Ce => "CE",
            LossMode::CeDa => "CE_DA",
            LossMode::CeScl => "CE_SCL",
            LossMode::CeDascl => "CE_DASCL",
            LossMode::CeDasclDa => "CE_DASCL_DA",
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        LossMode::ALL
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| {
                format!(
                    "unknown loss mode {s:?}; expected one of CE, CE_DA, CE_SCL, CE_DASCL, CE_DASCL_DA"
                )
            })
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mode plus the blend weight between cross-entropy and the contrastive term.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossConfig {
    pub mode: LossMode,
    pub lambda: f64,
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(0.0..=1.0).contains(&self.lambda) || !self.lambda.is_finite() {
            return Err(LossError::InvalidLambda(self.lambda));
        }
        Ok(())
    }
}

/// Multiclass cross-entropy over predicted distributions, averaged over
/// rows, with the fused gradient with respect to the logits.
///
/// Rows of `probs` are softmax outputs; a true-class probability of zero is
/// clamped at 1e-12 before the log.
pub fn ce_loss(probs: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>), LossError> {
    let (n, classes) = probs.dim();
    if n == 0 {
        return Err(LossError::EmptyBatch);
    }
    if labels.len() != n {
        return Err(LossError::LengthMismatch(format!(
            "{n} probability rows vs {} labels",
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut d_logits = probs.clone();
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(LossError::LabelOutOfRange { label, classes });
        }
        loss -= probs[(i, label)].max(1e-12).ln();
        d_logits[(i, label)] -= 1.0;
    }
    d_logits /= n as f64;
    Ok((loss / n as f64, d_logits))
}

/// Blends cross-entropy with a contrastive term: `(1-lambda)*ce + lambda*c`.
/// Without a contrastive term the cross-entropy passes through unchanged.
pub fn total_loss(ce: f64, contrastive: Option<f64>, lambda: f64) -> Result<f64, LossError> {
    if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
        return Err(LossError::InvalidLambda(lambda));
    }
    Ok(match contrastive {
        None => ce,
        Some(c) => (1.0 - lambda) * ce + lambda * c,
    })
}

/// A batch of 2N unit embeddings: rows `0..N` are the originals, rows
/// `N..2N` their keyword-simplified twins, with `label(i+N) = label(i)`.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    embeddings: Array2<f64>,
    labels: Vec<usize>,
    n: usize,
}

impl ContrastiveBatch {
    pub fn new(embeddings: Array2<f64>, labels: Vec<usize>) -> Result<Self, LossError> {
        let rows = embeddings.nrows();
        if rows == 0 {
            return Err(LossError::EmptyBatch);
        }
        if !rows.is_multiple_of(2) || labels.len() != rows {
            return Err(LossError::LengthMismatch(format!(
                "{rows} embedding rows vs {} labels (rows must be 2N)",
                labels.len()
            )));
        }
        let n = rows / 2;
        for i in 0..n {
            if labels[i] != labels[i + n] {
                return Err(LossError::BrokenTwinPairing { i, twin: i + n });
            }
        }
        check_unit_rows(&embeddings)?;
        Ok(Self {
            embeddings,
            labels,
            n,
        })
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.embeddings
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn check_unit_rows(embeddings: &Array2<f64>) -> Result<(), LossError> {
    for (index, row) in embeddings.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(LossError::NonUnitEmbedding { index, norm });
        }
    }
    Ok(())
}

/// A contrastive loss value with its exact gradients.
#[derive(Debug, Clone)]
pub struct ContrastiveOutput {
    pub loss: f64,
    /// Gradient with respect to each embedding row.
    pub d_embeddings: Array2<f64>,
    /// Gradient with respect to the temperature.
    pub d_tau: f64,
}

/// The dictionary-assisted supervised contrastive loss over originals and
/// twins, with gradients for all 2N embeddings and the temperature.
pub fn dascl_loss(batch: &ContrastiveBatch, tau: f64) -> Result<ContrastiveOutput, LossError> {
    check_tau(tau)?;
    let scale = 1.0 / (2.0 * batch.n as f64);
    Ok(sup_con_from_embeddings(
        &batch.embeddings,
        &batch.labels,
        tau,
        scale,
    ))
}

/// The supervised contrastive loss over originals only. Anchors whose class
/// appears once in the batch contribute zero. No outer `1/N` factor.
pub fn scl_loss(
    embeddings: &Array2<f64>,
    labels: &[usize],
    tau: f64,
) -> Result<ContrastiveOutput, LossError> {
    check_tau(tau)?;
    if embeddings.nrows() == 0 {
        return Err(LossError::EmptyBatch);
    }
    if labels.len() != embeddings.nrows() {
        return Err(LossError::LengthMismatch(format!(
            "{} embedding rows vs {} labels",
            embeddings.nrows(),
            labels.len()
        )));
    }
    check_unit_rows(embeddings)?;
    Ok(sup_con_from_embeddings(embeddings, labels, tau, 1.0))
}

/// Loss value of the dictionary-assisted objective evaluated directly on a
/// matrix of pairwise similarities (diagonal ignored). Useful for checking
/// scale identities without materializing embeddings.
pub fn dascl_loss_from_similarities(
    sim: &Array2<f64>,
    labels: &[usize],
    tau: f64,
) -> Result<f64, LossError> {
    check_tau(tau)?;
    check_square(sim, labels)?;
    let scale = 1.0 / sim.nrows() as f64;
    Ok(sup_con_core(sim, labels, tau, scale).0)
}

/// Similarity-level form of [`scl_loss`].
pub fn scl_loss_from_similarities(
    sim: &Array2<f64>,
    labels: &[usize],
    tau: f64,
) -> Result<f64, LossError> {
    check_tau(tau)?;
    check_square(sim, labels)?;
    Ok(sup_con_core(sim, labels, tau, 1.0).0)
}

fn check_tau(tau: f64) -> Result<(), LossError> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(LossError::NonPositiveTau(tau));
    }
    Ok(())
}

fn check_square(sim: &Array2<f64>, labels: &[usize]) -> Result<(), LossError> {
    if sim.nrows() == 0 {
        return Err(LossError::EmptyBatch);
    }
    if sim.nrows() != sim.ncols() || labels.len() != sim.nrows() {
        return Err(LossError::LengthMismatch(format!(
            "similarity matrix {}x{} vs {} labels",
            sim.nrows(),
            sim.ncols(),
            labels.len()
        )));
    }
    Ok(())
}

/// Loss and gradients as a function of raw embedding rows. No unit-norm
/// validation: the gradient is taken with the rows as free variables, which
/// the finite-difference checks rely on.
pub(crate) fn sup_con_from_embeddings(
    embeddings: &Array2<f64>,
    labels: &[usize],
    tau: f64,
    outer_scale: f64,
) -> ContrastiveOutput {
    let sim = embeddings.dot(&embeddings.t());
    let (loss, grad_w, d_tau) = sup_con_core(&sim, labels, tau, outer_scale);
    let symmetric = &grad_w + &grad_w.t();
    let d_embeddings = symmetric.dot(embeddings) / tau;
    ContrastiveOutput {
        loss,
        d_embeddings,
        d_tau,
    }
}

/// Shared core over scaled similarities `w = sim/tau`.
///
/// Returns `(loss, dL/dw, dL/dtau)`. Per-anchor log-sum-exp uses max
/// subtraction; anchors without positives are skipped.
fn sup_con_core(
    sim: &Array2<f64>,
    labels: &[usize],
    tau: f64,
    outer_scale: f64,
) -> (f64, Array2<f64>, f64) {
    let m = sim.nrows();
    let w = sim / tau;
    let mut loss = 0.0;
    let mut grad_w = Array2::<f64>::zeros((m, m));

    for a in 0..m {
        let positives: Vec<usize> = (0..m)
            .filter(|&j| j != a && labels[j] == labels[a])
            .collect();
        if positives.is_empty() {
            continue;
        }
        let coeff = 1.0 / positives.len() as f64;

        let max = (0..m)
            .filter(|&k| k != a)
            .map(|k| w[(a, k)])
            .fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..m)
            .filter(|&k| k != a)
            .map(|k| (w[(a, k)] - max).exp())
            .sum();
        let log_z = max + z.ln();

        let mut anchor_sum = 0.0;
        for &j in &positives {
            anchor_sum += w[(a, j)] - log_z;
        }
        loss -= outer_scale * coeff * anchor_sum;

        for b in 0..m {
            if b == a {
                continue;
            }
            let softmax_ab = (w[(a, b)] - max).exp() / z;
            let positive_term = if labels[b] == labels[a] { coeff } else { 0.0 };
            grad_w[(a, b)] = -outer_scale * (positive_term - softmax_ab);
        }
    }

    let mut d_tau = 0.0;
    for a in 0..m {
        for b in 0..m {
            d_tau -= grad_w[(a, b)] * w[(a, b)];
        }
    }
    d_tau /= tau;

    (loss, grad_w, d_tau)
}

/// How one training batch feeds the losses for a given mode.
#[derive(Debug)]
pub struct AssembledBatch<'a, T> {
    /// Documents fed to cross-entropy, with their labels.
    pub ce_docs: Vec<&'a T>,
    pub ce_labels: Vec<usize>,
    /// Documents and labels for the contrastive term, if the mode has one.
    pub contrastive: Option<ContrastiveAssembly<'a, T>>,
}

#[derive(Debug)]
pub struct ContrastiveAssembly<'a, T> {
    pub kind: ContrastiveKind,
    pub docs: Vec<&'a T>,
    pub labels: Vec<usize>,
}

/// Routes originals and their simplified twins into loss inputs.
///
/// Plain and contrastive modes feed only originals to cross-entropy; the
/// data-augmentation modes feed originals plus twins. The dictionary-assisted
/// contrastive term sees all 2N documents; the plain contrastive term sees
/// the N originals.
pub fn assemble_batch<'a, T>(
    originals: &'a [T],
    simplified: &'a [T],
    labels: &'a [usize],
    mode: LossMode,
) -> Result<AssembledBatch<'a, T>, LossError> {
    if originals.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    if originals.len() != simplified.len() || originals.len() != labels.len() {
        return Err(LossError::LengthMismatch(format!(
            "{} originals, {} simplified, {} labels",
            originals.len(),
            simplified.len(),
            labels.len()
        )));
    }

    let mut ce_docs: Vec<&T> = originals.iter().collect();
    let mut ce_labels = labels.to_vec();
    if mode.augments_ce() {
        ce_docs.extend(simplified.iter());
        ce_labels.extend_from_slice(labels);
    }

    let contrastive = mode.contrastive().map(|kind| match kind {
        ContrastiveKind::Dascl => {
            let docs: Vec<&T> = originals.iter().chain(simplified.iter()).collect();
            let mut twin_labels = labels.to_vec();
            twin_labels.extend_from_slice(labels);
            ContrastiveAssembly {
                kind,
                docs,
                labels: twin_labels,
            }
        }
        ContrastiveKind::Scl => ContrastiveAssembly {
            kind,
            docs: originals.iter().collect(),
            labels: labels.to_vec(),
        },
    });

    Ok(AssembledBatch {
        ce_docs,
        ce_labels,
        contrastive,
    })
}
