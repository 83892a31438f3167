//! Reference implementations shared by the integration tests. They favor
//! obviousness over speed.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uniod::data::Label;
use uniod::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, d: usize, scale: f64) -> Matrix {
    Matrix::from_fn(n, d, |_, _| rng.random_range(-scale..scale))
}

/// Cyclic Jacobi eigendecomposition. Eigenvalues descending, eigenvectors as
/// columns.
pub fn jacobi_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in m.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (m[p][k], m[q][k]);
                    m[p][k] = c * x - s * y;
                    m[q][k] = s * x + c * y;
                }
                for row in v.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
            }
        }
    }
    let vals: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| vals[y].partial_cmp(&vals[x]).unwrap());
    let sorted = order.iter().map(|&i| vals[i]).collect();
    let vecs = Matrix::from_fn(n, n, |r, c| v[r][order[c]]);
    (sorted, vecs)
}

/// AUROC by counting every outlier/inlier pair; ties count half.
pub fn pairwise_auroc(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut twice_wins, mut pos, mut neg) = (0u128, 0u128, 0u128);
    for (i, li) in labels.iter().enumerate() {
        if !li.is_outlier() {
            neg += 1;
            continue;
        }
        pos += 1;
        for (j, lj) in labels.iter().enumerate() {
            if lj.is_outlier() {
                continue;
            }
            if scores[i] > scores[j] {
                twice_wins += 2;
            } else if scores[i] == scores[j] {
                twice_wins += 1;
            }
        }
    }
    twice_wins as f64 / (2.0 * pos as f64 * neg as f64)
}

/// Average precision over distinct thresholds, highest first.
pub fn tie_grouped_ap(scores: &[f64], labels: &[Label]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let positives = labels.iter().filter(|l| l.is_outlier()).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let flagged: Vec<bool> = scores.iter().map(|&s| s >= t).collect();
        let tp = flagged
            .iter()
            .zip(labels)
            .filter(|(f, l)| **f && l.is_outlier())
            .count() as f64;
        let predicted = flagged.iter().filter(|f| **f).count() as f64;
        let recall = tp / positives;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

/// Distance to the k-th nearest other row.
pub fn knn_scores(x: &Matrix, k: usize) -> Vec<f64> {
    let n = x.rows();
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    x.row(i)
                        .iter()
                        .zip(x.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d[k.min(d.len()) - 1]
        })
        .collect()
}

/// Kernel entry straight from the definition.
pub fn kernel_entry(x: &Matrix, i: usize, j: usize, sigma: f64) -> f64 {
    let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}
