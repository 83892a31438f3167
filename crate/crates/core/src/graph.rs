//! Dataset → multi-bandwidth Gaussian-kernel graphs with fixed-width spectral
//! node features.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{sym_eig_topk, Mat};
use crate::scalar::Scalar;

/// K kernel graphs of one dataset plus the `n × (K·d*)` node features,
/// stored as K contiguous blocks of width `d*` in bandwidth order.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBundle<T> {
    pub adjacencies: Vec<Mat<T>>,
    pub features: Mat<T>,
    pub bandwidths: Vec<T>,
    pub sigma_bar: T,
    pub d_star: usize,
}

impl<T: Scalar> GraphBundle<T> {
    pub fn k(&self) -> usize {
        self.adjacencies.len()
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    /// Feature block of bandwidth `k`.
    pub fn block(&self, k: usize) -> Mat<T> {
        self.features.slice_cols(k * self.d_star, (k + 1) * self.d_star)
    }
}

/// Pairwise squared distances, rows compared directly
/// (no Gram-matrix shortcut) so translations cancel exactly in each difference.
fn squared_distances<T: Scalar>(x: &Mat<T>) -> Mat<T> {
    let n = x.rows();
    let mut d2 = Mat::zeros(n, n);
    for a in 0..n {
        let ra = x.row(a);
        for b in a + 1..n {
            let s: T = ra
                .iter()
                .zip(x.row(b))
                .map(|(&u, &v)| (u - v) * (u - v))
                .sum();
            d2.set(a, b, s);
            d2.set(b, a, s);
        }
    }
    d2
}

/// Mean Euclidean distance over all `n²` ordered pairs, self-pairs included.
pub fn mean_pairwise_distance<T: Scalar>(features: &Mat<T>) -> Result<T> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "mean pairwise distance needs at least 2 rows".into(),
        ));
    }
    mean_distance_from_squared(&squared_distances(features))
}

fn mean_distance_from_squared<T: Scalar>(d2: &Mat<T>) -> Result<T> {
    let n = d2.rows();
    let mut total = T::zero();
    for a in 0..n {
        for b in a + 1..n {
            total += d2.at(a, b).sqrt();
        }
    }
    let mean = (total + total) / T::usize(n * n);
    if !(mean > T::zero()) || !mean.is_finite() {
        return Err(Error::InvalidArgument(
            "mean pairwise distance is zero: all rows identical".into(),
        ));
    }
    Ok(mean)
}

/// Gaussian-kernel adjacency `exp(-‖x_a - x_b‖² / (2σ²))`.
///
/// Underflow is clamped to the smallest positive normal value so every
/// entry stays in `(0, 1]`.
pub fn kernel_adjacency<T: Scalar>(features: &Mat<T>, sigma: T) -> Result<Mat<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "kernel bandwidth must be positive, got {sigma}"
        )));
    }
    Ok(kernel_from_squared(&squared_distances(features), sigma))
}

fn kernel_from_squared<T: Scalar>(d2: &Mat<T>, sigma: T) -> Mat<T> {
    let n = d2.rows();
    let denom = T::of(2.0) * sigma * sigma;
    let floor = T::min_positive_value();
    let mut a = Mat::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            let v = (-d2.at(i, j) / denom).exp().max(floor);
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    a
}

/// Spectral node features `[u_1 … u_d*]·diag(√λ)` of a kernel adjacency.
/// Columns past `n` are zero.
pub fn embed_nodes<T: Scalar>(adjacency: &Mat<T>, d_star: usize) -> Result<Mat<T>> {
    if d_star == 0 {
        return Err(Error::InvalidArgument("d_star must be at least 1".into()));
    }
    let n = adjacency.rows();
    let k = d_star.min(n);
    let eig = sym_eig_topk(adjacency, k)?;
    let mut x = Mat::zeros(n, d_star);
    for (j, &lambda) in eig.values.iter().enumerate() {
        let s = lambda.sqrt();
        for i in 0..n {
            x.set(i, j, eig.vectors.at(i, j) * s);
        }
    }
    Ok(x)
}

/// Builds one graph per bandwidth `σ_k = √(β_k²)·σ̄`, in the given order.
pub fn build_bundle<T: Scalar>(
    ds: &Dataset<T>,
    betas_squared: &[f64],
    d_star: usize,
) -> Result<GraphBundle<T>> {
    build_bundle_from_features(ds.features(), betas_squared, d_star)
}

pub fn build_bundle_from_features<T: Scalar>(
    features: &Mat<T>,
    betas_squared: &[f64],
    d_star: usize,
) -> Result<GraphBundle<T>> {
    if betas_squared.is_empty() {
        return Err(Error::InvalidArgument("at least one bandwidth is required".into()));
    }
    if let Some(b) = betas_squared.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth multipliers must be positive, got {b}"
        )));
    }
    if features.rows() < 2 {
        return Err(Error::InvalidArgument("graph needs at least 2 nodes".into()));
    }
    let d2 = squared_distances(features);
    let sigma_bar = mean_distance_from_squared(&d2)?;

    let mut adjacencies = Vec::with_capacity(betas_squared.len());
    let mut blocks = Vec::with_capacity(betas_squared.len());
    let mut bandwidths = Vec::with_capacity(betas_squared.len());
    for &b2 in betas_squared {
        let sigma = T::of(b2.sqrt()) * sigma_bar;
        let a = kernel_from_squared(&d2, sigma);
        blocks.push(embed_nodes(&a, d_star)?);
        adjacencies.push(a);
        bandwidths.push(sigma);
    }
    let refs: Vec<&Mat<T>> = blocks.iter().collect();
    let features = Mat::hconcat(&refs)?;
    Ok(GraphBundle {
        adjacencies,
        features,
        bandwidths,
        sigma_bar,
        d_star,
    })
}
