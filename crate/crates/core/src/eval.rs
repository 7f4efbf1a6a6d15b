//! Precision-recall curves, maximum F-measure and mean absolute error.
//!
//! Precision and recall are computed per image at each threshold and then
//! averaged over the images whose ground truth is non-empty. MAE averages
//! over every image.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::training::check_binary;

pub const DEFAULT_THRESHOLDS: usize = 256;
pub const BETA_SQUARED: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub pr_points: Vec<PrPoint>,
    pub f_beta_max: f64,
    pub mae: f64,
    pub beta_squared: f64,
}

impl EvalReport {
    /// `threshold,precision,recall` rows then `fbeta_max,` and `mae,` trailers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall\n");
        for p in &self.pr_points {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.precision, p.recall);
        }
        let _ = writeln!(out, "fbeta_max,{:?}", self.f_beta_max);
        let _ = writeln!(out, "mae,{:?}", self.mae);
        out
    }
}

/// `t_i = i / n` for `i in 0..n`.
pub fn thresholds(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}

fn check_pair(pred: &Tensor, gt: &Tensor) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            op: "saliency metric",
            left: pred.shape(),
            right: gt.shape(),
        });
    }
    if let Some(v) = pred.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidConfig(format!("prediction value {v} outside [0, 1]")));
    }
    check_binary(gt)
}

/// Index of the highest threshold `i / n` that does not exceed `p`.
fn top_threshold(p: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut k = ((p * nf).floor() as usize).min(n - 1);
    while k + 1 < n && (k + 1) as f64 / nf <= p {
        k += 1;
    }
    while k > 0 && k as f64 / nf > p {
        k -= 1;
    }
    k
}

/// Per-threshold (TP, FP) counts for one image via cumulative histograms.
fn counts(pred: &Tensor, gt: &Tensor, n: usize) -> (Vec<u64>, Vec<u64>) {
    let mut pos = vec![0u64; n];
    let mut neg = vec![0u64; n];
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let k = top_threshold(p, n);
        if g == 1.0 {
            pos[k] += 1;
        } else {
            neg[k] += 1;
        }
    }
    for i in (0..n - 1).rev() {
        pos[i] += pos[i + 1];
        neg[i] += neg[i + 1];
    }
    (pos, neg)
}

pub fn pr_curve(preds: &[Tensor], gts: &[Tensor], n_thresholds: usize) -> Result<Vec<PrPoint>> {
    if preds.is_empty() {
        return Err(Error::Empty("prediction list"));
    }
    if preds.len() != gts.len() {
        return Err(Error::InvalidConfig(format!(
            "{} predictions for {} ground truths",
            preds.len(),
            gts.len()
        )));
    }
    if n_thresholds == 0 {
        return Err(Error::InvalidConfig("need at least one threshold".into()));
    }
    let mut psum = vec![0.0; n_thresholds];
    let mut rsum = vec![0.0; n_thresholds];
    let mut images = 0usize;
    for (pred, gt) in preds.iter().zip(gts) {
        check_pair(pred, gt)?;
        let positives = gt.data().iter().filter(|&&v| v == 1.0).count() as u64;
        if positives == 0 {
            continue;
        }
        images += 1;
        let (tp, fp) = counts(pred, gt, n_thresholds);
        for i in 0..n_thresholds {
            let predicted = tp[i] + fp[i];
            psum[i] += if predicted == 0 { 1.0 } else { tp[i] as f64 / predicted as f64 };
            rsum[i] += tp[i] as f64 / positives as f64;
        }
    }
    if images == 0 {
        return Err(Error::Empty("images with non-empty ground truth"));
    }
    Ok(thresholds(n_thresholds)
        .into_iter()
        .enumerate()
        .map(|(i, threshold)| PrPoint {
            threshold,
            precision: psum[i] / images as f64,
            recall: rsum[i] / images as f64,
        })
        .collect())
}

/// `(1 + b2) p r / (b2 p + r)`, zero when the denominator is zero.
pub fn f_beta(precision: f64, recall: f64, beta_squared: f64) -> f64 {
    let den = beta_squared * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + beta_squared) * precision * recall / den
    }
}

pub fn f_beta_max(pr: &[PrPoint], beta_squared: f64) -> Result<f64> {
    if pr.is_empty() {
        return Err(Error::Empty("PR curve"));
    }
    if !(beta_squared > 0.0) {
        return Err(Error::InvalidConfig(format!("beta squared {beta_squared} must be positive")));
    }
    Ok(pr
        .iter()
        .map(|p| f_beta(p.precision, p.recall, beta_squared))
        .fold(0.0, f64::max))
}

pub fn mae(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            op: "mae",
            left: pred.shape(),
            right: gt.shape(),
        });
    }
    let total: f64 = pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / pred.numel() as f64)
}

pub fn mean_mae(preds: &[Tensor], gts: &[Tensor]) -> Result<f64> {
    if preds.is_empty() || preds.len() != gts.len() {
        return Err(Error::Empty("prediction list"));
    }
    let mut total = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        total += mae(p, g)?;
    }
    Ok(total / preds.len() as f64)
}

pub fn evaluate(preds: &[Tensor], gts: &[Tensor], n_thresholds: usize, beta_squared: f64) -> Result<EvalReport> {
    let pr_points = pr_curve(preds, gts, n_thresholds)?;
    Ok(EvalReport {
        f_beta_max: f_beta_max(&pr_points, beta_squared)?,
        mae: mean_mae(preds, gts)?,
        pr_points,
        beta_squared,
    })
}
