//! Classification and regression metrics.
//!
//! The ranking metrics handle tied scores exactly: the ROC area uses
//! the rank-statistic formulation with average ranks (a tie between a
//! positive and a negative counts half), and the PR area is average
//! precision with step interpolation over groups of equal scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::scene::Label;

fn check_scores(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if scores.is_empty() {
        return Err(Error::Data("no scores to evaluate".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::non_finite("scores"));
    }
    let npos = labels.iter().filter(|l| **l == Label::Autonomous).count();
    Ok((npos, labels.len() - npos))
}

/// Area under the ROC curve via the rank statistic; ties get half
/// credit. Needs both classes present.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (npos, nneg) = check_scores(scores, labels)?;
    if npos == 0 || nneg == 0 {
        return Err(Error::Data("ranking quality needs both classes present".into()));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average.
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == Label::Autonomous {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let npos_f = npos as f64;
    Ok((rank_sum_pos - npos_f * (npos_f + 1.0) / 2.0) / (npos_f * nneg as f64))
}

/// Average precision: the PR curve integrated as a step function,
/// scores grouped so ties move precision and recall together.
pub fn pr_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (npos, _) = check_scores(scores, labels)?;
    if npos == 0 {
        return Err(Error::Data("precision-recall needs at least one positive".into()));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] == Label::Autonomous {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / npos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

/// Confusion-matrix metrics at a fixed probability threshold
/// (prediction is positive when score >= threshold). Undefined ratios
/// (no predicted positives, no actual positives) evaluate to 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn threshold_metrics(scores: &[f64], labels: &[Label], threshold: f64) -> Result<ThresholdMetrics> {
    check_scores(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (s, l) in scores.iter().zip(labels) {
        let pred_pos = *s >= threshold;
        match (pred_pos, *l == Label::Autonomous) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ThresholdMetrics {
        accuracy: (tp + tn) as f64 / scores.len() as f64,
        precision,
        recall,
        f1,
    })
}

/// Root-mean-square error over paired slices.
pub fn rmse_slice(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions vs {} targets", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::Data("rmse of nothing is undefined".into()));
    }
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        if !(p.is_finite() && t.is_finite()) {
            return Err(Error::non_finite("rmse input"));
        }
        sum += (p - t) * (p - t);
    }
    Ok((sum / pred.len() as f64).sqrt())
}

/// Root-mean-square error over all elements of paired matrices.
pub fn rmse(pred: &Mat, truth: &Mat) -> Result<f64> {
    if pred.rows() != truth.rows() || pred.cols() != truth.cols() {
        return Err(Error::Shape(format!(
            "rmse shapes differ: {}x{} vs {}x{}",
            pred.rows(),
            pred.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    rmse_slice(pred.as_slice(), truth.as_slice())
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
