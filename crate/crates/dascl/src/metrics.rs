//! Binary classification metrics: accuracy, precision/recall/F1, macro-F1,
//! and average precision over score thresholds.

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;

/// One scored prediction: true label, argmax label, and the positive-class
/// score used for ranking metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPrediction {
    pub truth: usize,
    pub predicted: usize,
    pub score: f64,
}

/// Binary confusion counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// The metric suite reported per evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1_positive: f64,
    pub macro_f1: f64,
    pub average_precision: f64,
}

fn check_binary(value: usize) -> Result<(), MetricsError> {
    if value > 1 {
        return Err(MetricsError::NonBinaryLabel { value });
    }
    Ok(())
}

fn check_score(value: f64) -> Result<(), MetricsError> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(MetricsError::InvalidScore { value });
    }
    Ok(())
}

/// Tallies binary confusion counts.
pub fn confusion(preds: &[ScoredPrediction]) -> Result<Confusion, MetricsError> {
    let mut c = Confusion::default();
    for p in preds {
        check_binary(p.truth)?;
        check_binary(p.predicted)?;
        match (p.truth, p.predicted) {
            (1, 1) => c.true_pos += 1,
            (0, 1) => c.false_pos += 1,
            (0, 0) => c.true_neg += 1,
            (1, 0) => c.false_neg += 1,
            _ => unreachable!(),
        }
    }
    Ok(c)
}

/// Precision, recall, and F1; any zero denominator yields 0.
pub fn prf(c: &Confusion) -> (f64, f64, f64) {
    let precision = ratio(c.true_pos, c.true_pos + c.false_pos);
    let recall = ratio(c.true_pos, c.true_pos + c.false_neg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn accuracy(c: &Confusion) -> f64 {
    ratio(c.true_pos + c.true_neg, c.total())
}

/// Unweighted mean of per-class F1, each class treated as positive in turn.
pub fn macro_f1(preds: &[ScoredPrediction]) -> Result<f64, MetricsError> {
    let c = confusion(preds)?;
    let flipped = Confusion {
        true_pos: c.true_neg,
        false_pos: c.false_neg,
        true_neg: c.true_pos,
        false_neg: c.false_pos,
    };
    let (_, _, f1_pos) = prf(&c);
    let (_, _, f1_neg) = prf(&flipped);
    Ok((f1_pos + f1_neg) / 2.0)
}

/// Average precision over score thresholds: AP = sum over thresholds of
/// (R_n - R_{n-1}) * P_n with R_0 = 0, thresholds taken at each distinct
/// score in descending order. Tied scores form a single threshold.
///
/// Errors when the input contains no positive example (the formula's recall
/// denominator is undefined).
pub fn average_precision(preds: &[ScoredPrediction]) -> Result<f64, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    for p in preds {
        check_binary(p.truth)?;
        check_score(p.score)?;
    }
    let total_pos = preds.iter().filter(|p| p.truth == 1).count();
    if total_pos == 0 {
        return Err(MetricsError::NoPositiveExamples);
    }

    let mut order: Vec<&ScoredPrediction> = preds.iter().collect();
    order.sort_by(|a, b| b.score.partial_cmp(&a.score).expect("scores are finite"));

    let mut ap = 0.0;
    let mut cum_tp = 0usize;
    let mut cum_fp = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && order[j].score == order[i].score {
            match order[j].truth {
                1 => cum_tp += 1,
                _ => cum_fp += 1,
            }
            j += 1;
        }
        let precision = cum_tp as f64 / (cum_tp + cum_fp) as f64;
        let recall = cum_tp as f64 / total_pos as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// Computes the full report. Requires binary labels and at least one
/// positive example.
pub fn eval_report(preds: &[ScoredPrediction]) -> Result<EvalReport, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let c = confusion(preds)?;
    let (precision, recall, f1_positive) = prf(&c);
    Ok(EvalReport {
        accuracy: accuracy(&c),
        precision,
        recall,
        f1_positive,
        macro_f1: macro_f1(preds)?,
        average_precision: average_precision(preds)?,
    })
}
