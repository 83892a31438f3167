//! Threshold-free ranking metrics for outlier scores.

use std::cmp::Ordering;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_lengths<T>(scores: &[T], labels: &[Label]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Area under the ROC curve as the Mann–Whitney statistic: the fraction of
/// (outlier, inlier) pairs where the outlier scores higher, ties counting ½.
pub fn auroc<T: Scalar>(scores: &[T], labels: &[Label]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_out = labels.iter().filter(|l| l.is_outlier()).count();
    let n_in = labels.len() - n_out;
    if n_out == 0 || n_in == 0 {
        return Err(Error::InvalidArgument(
            "AUROC needs both outliers and inliers".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // twice the midrank sum of outliers keeps everything in integers
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share the midrank (i + j + 2) / 2
        let outliers = order[i..=j].iter().filter(|&&k| labels[k].is_outlier()).count();
        twice_rank_sum += outliers as u128 * (i + j + 2) as u128;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - (n_out as u128) * (n_out as u128 + 1);
    Ok(twice_u as f64 / (2.0 * n_out as f64 * n_in as f64))
}

/// Average precision: sweep thresholds from the highest score down, treating
/// equal scores as one threshold, and sum recall increments times precision.
pub fn auprc<T: Scalar>(scores: &[T], labels: &[Label]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_out = labels.iter().filter(|l| l.is_outlier()).count();
    if n_out == 0 {
        return Err(Error::InvalidArgument("AUPRC needs at least one outlier".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let mut ap = 0.0;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let hits = order[i..=j].iter().filter(|&&k| labels[k].is_outlier()).count();
        tp += hits;
        seen += j - i + 1;
        if hits > 0 {
            ap += (hits as f64 / n_out as f64) * (tp as f64 / seen as f64);
        }
        i = j + 1;
    }
    Ok(ap)
}
