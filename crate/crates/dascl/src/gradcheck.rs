//! Central finite-difference verification of the analytic gradients, run
//! over randomized small batches for every loss mode. The numeric side only
//! ever calls the forward path, so it stays independent of the backward
//! code it checks.

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{init_params, EncoderDims};
use crate::error::TrainError;
use crate::losses::{LossConfig, LossMode};
use crate::trainer::batch_forward_backward;

/// Settings for one mode's trial run.
#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub mode: LossMode,
    pub lambda: f64,
    pub trials: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub tolerance: f64,
}

impl GradCheckConfig {
    pub fn new(mode: LossMode, seed: u64) -> Self {
        Self {
            mode,
            lambda: 0.9,
            trials: 20,
            seed,
            epsilon: 1e-5,
            tolerance: 1e-4,
        }
    }
}

/// Outcome of a mode's trials.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub mode: LossMode,
    pub trials: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Runs `config.trials` randomized trials for one mode and reports the
/// worst relative error between analytic and central-difference gradients.
///
/// Per trial the error is `max_i |a_i - n_i|` normalized by the largest
/// gradient magnitude in the trial (per-component ratios are meaningless
/// where both gradients vanish).
pub fn run_mode(config: &GradCheckConfig) -> Result<GradCheckReport, TrainError> {
    let mut max_rel_error: f64 = 0.0;
    for trial in 0..config.trials {
        let rel = run_trial(config, trial as u64)?;
        max_rel_error = max_rel_error.max(rel);
    }
    Ok(GradCheckReport {
        mode: config.mode,
        trials: config.trials,
        max_rel_error,
        tolerance: config.tolerance,
        passed: max_rel_error <= config.tolerance,
    })
}

/// Runs every loss mode with `trials_per_mode` trials each.
pub fn run_suite(
    modes: &[LossMode],
    trials_per_mode: usize,
    seed: u64,
) -> Result<Vec<GradCheckReport>, TrainError> {
    modes
        .iter()
        .map(|&mode| {
            let config = GradCheckConfig {
                trials: trials_per_mode,
                ..GradCheckConfig::new(mode, seed)
            };
            run_mode(&config)
        })
        .collect()
}

fn run_trial(config: &GradCheckConfig, trial: u64) -> Result<f64, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(trial.wrapping_mul(0x9E37)));

    let dims = EncoderDims {
        vocab: rng.random_range(8..16),
        embedding: rng.random_range(3..6),
        hidden: rng.random_range(4..7),
        projection: rng.random_range(3..5),
        classes: rng.random_range(2..=3),
    };
    let tau_init = [0.07, 0.3, 1.0][rng.random_range(0..3)];
    let params = init_params(dims, rng.random_range(0..u64::MAX), tau_init)?;

    let n_docs = rng.random_range(2..=5);
    let rand_docs = |rng: &mut ChaCha8Rng| -> Vec<Vec<usize>> {
        (0..n_docs)
            .map(|_| {
                let len = rng.random_range(1..=5);
                (0..len).map(|_| rng.random_range(0..dims.vocab)).collect()
            })
            .collect()
    };
    let originals = rand_docs(&mut rng);
    let simplified = rand_docs(&mut rng);
    let labels: Vec<usize> = (0..n_docs)
        .map(|_| rng.random_range(0..dims.classes))
        .collect();
    let loss_cfg = LossConfig {
        mode: config.mode,
        lambda: config.lambda,
    };

    let orig_refs: Vec<&[usize]> = originals.iter().map(Vec::as_slice).collect();
    let simp_refs: Vec<&[usize]> = simplified.iter().map(Vec::as_slice).collect();

    let (_, grads) = batch_forward_backward(&params, &orig_refs, &simp_refs, &labels, &loss_cfg)?;
    let analytic = grads.to_flat();

    let loss_at = |p: &crate::encoder::EncoderParams| -> Result<f64, TrainError> {
        let (loss, _) = batch_forward_backward(p, &orig_refs, &simp_refs, &labels, &loss_cfg)?;
        Ok(loss.total)
    };

    let eps = config.epsilon;
    let flat = params.to_flat();
    let mut numeric = vec![0.0; flat.len()];
    let mut scratch = params.clone();
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += eps;
        scratch.set_from_flat(&plus)?;
        let up = loss_at(&scratch)?;
        let mut minus = flat.clone();
        minus[i] -= eps;
        scratch.set_from_flat(&minus)?;
        let down = loss_at(&scratch)?;
        numeric[i] = (up - down) / (2.0 * eps);
    }

    let scale = analytic
        .iter()
        .chain(&numeric)
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-12);
    let max_rel = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| (a - n).abs() / scale)
        .fold(0.0f64, f64::max);
    Ok(max_rel)
}
