//! The three loss components and their analytic gradients: the
//! confidence-reweighted softmax loss, the margin contrastive loss over
//! clean/noisy pairs, and their weighted combination.

use crate::detection::Status;
use crate::{Error, Result};

/// Pair relationship derived from detection statuses and labels. Two
/// noisy samples have no defined relationship and are excluded from
/// pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityIndicator {
    Similar,
    Dissimilar,
    Undefined,
}

/// Similar iff both clean with the same label; dissimilar iff labels
/// differ with both clean, or one side is noisy; undefined iff both noisy.
pub fn similarity(
    status_i: Status,
    status_j: Status,
    label_i: usize,
    label_j: usize,
) -> SimilarityIndicator {
    match (status_i, status_j) {
        (Status::Noisy, Status::Noisy) => SimilarityIndicator::Undefined,
        (Status::Clean, Status::Clean) => {
            if label_i == label_j {
                SimilarityIndicator::Similar
            } else {
                SimilarityIndicator::Dissimilar
            }
        }
        _ => SimilarityIndicator::Dissimilar,
    }
}

/// Contrastive loss for one pair with Euclidean feature distance D:
/// similar pairs pay D^2 / 2, dissimilar pairs pay max{0, alpha - D} / 2
/// (the hinge is linear as configured; `squared_hinge` switches to the
/// classic squared form max{0, alpha - D}^2 / 2).
///
/// Subgradient convention: zero at D = 0 and at the hinge kink D = alpha.
pub fn contrastive(
    f_i: &[f64],
    f_j: &[f64],
    indicator: SimilarityIndicator,
    alpha: f64,
    squared_hinge: bool,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if f_i.len() != f_j.len() {
        return Err(Error::DimensionMismatch("pair feature dims".into()));
    }
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument("margin alpha must be > 0".into()));
    }
    let diff: Vec<f64> = f_i.iter().zip(f_j).map(|(a, b)| a - b).collect();
    let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    match indicator {
        SimilarityIndicator::Similar => {
            let loss = 0.5 * dist * dist;
            let grad_j: Vec<f64> = diff.iter().map(|d| -d).collect();
            Ok((loss, diff, grad_j))
        }
        SimilarityIndicator::Dissimilar => {
            if dist >= alpha || dist == 0.0 {
                let loss = if squared_hinge {
                    0.5 * (alpha - dist).max(0.0).powi(2)
                } else {
                    0.5 * (alpha - dist).max(0.0)
                };
                let zeros = vec![0.0; f_i.len()];
                return Ok((loss, zeros.clone(), zeros));
            }
            let (loss, dloss_ddist) = if squared_hinge {
                (0.5 * (alpha - dist).powi(2), -(alpha - dist))
            } else {
                (0.5 * (alpha - dist), -0.5)
            };
            let grad_i: Vec<f64> = diff.iter().map(|d| dloss_ddist * d / dist).collect();
            let grad_j: Vec<f64> = grad_i.iter().map(|g| -g).collect();
            Ok((loss, grad_i, grad_j))
        }
        SimilarityIndicator::Undefined => Err(Error::InvalidArgument(
            "contrastive loss is undefined for a noisy-noisy pair".into(),
        )),
    }
}

/// Reweighted softmax loss over a batch:
/// -(sum over rows of w_i * log P(y_i)) / batch_size, where clean rows
/// carry w = 1 and detected-noisy rows w = gamma. The gradient per row is
/// w_i * (softmax - onehot) / batch_size.
pub fn reweighted_softmax(
    logits: &[Vec<f64>],
    labels: &[usize],
    gammas: &[f64],
) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = logits.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if labels.len() != n || gammas.len() != n {
        return Err(Error::DimensionMismatch("labels/gammas batch size".into()));
    }
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(n);
    for ((row, &label), &w) in logits.iter().zip(labels).zip(gammas) {
        if label >= row.len() {
            return Err(Error::IndexOutOfRange {
                index: label,
                len: row.len(),
            });
        }
        if !row.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidArgument(format!("gamma {w} outside [0, 1]")));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        let log_p = row[label] - max - sum.ln();
        loss -= w * log_p;
        let grad: Vec<f64> = exp
            .iter()
            .enumerate()
            .map(|(c, &e)| {
                let p = e / sum;
                let onehot = if c == label { 1.0 } else { 0.0 };
                w * (p - onehot) / n as f64
            })
            .collect();
        grads.push(grad);
    }
    Ok((loss / n as f64, grads))
}

/// The combined objective: reweighted softmax plus eta times the
/// contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub rsl: f64,
    pub cl: f64,
    pub eta: f64,
    pub total: f64,
}

pub fn combined(rsl: f64, cl: f64, eta: f64) -> Result<LossBreakdown> {
    if eta <= 0.0 {
        return Err(Error::InvalidArgument("eta must be > 0".into()));
    }
    Ok(LossBreakdown {
        rsl,
        cl,
        eta,
        total: rsl + eta * cl,
    })
}
