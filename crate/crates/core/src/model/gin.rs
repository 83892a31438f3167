//! Graph isomorphism network stacks, one per kernel bandwidth.

use super::layers::Affine;
use crate::autodiff::Ops;
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// One GIN layer: learnable self weight `eps` (`1 × 1`) and a two-layer MLP
/// whose hidden width equals its output width.
#[derive(Clone, Debug, PartialEq)]
pub struct GinLayer<P> {
    pub eps: P,
    pub mlp_in: Affine<P>,
    pub mlp_out: Affine<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GinStack<P> {
    pub layers: Vec<GinLayer<P>>,
    pub aggregation: Aggregation,
}

/// How neighbor features are pooled before the `(1 + eps)·h` self term is
/// added.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// `Σ_u A_ju·h_u`
    Sum,
    /// `Σ_u A_ju·h_u / Σ_u A_ju`, keeping activations on the scale of `h`
    /// however dense the kernel graph is.
    #[default]
    Mean,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Sum => "sum",
            Aggregation::Mean => "mean",
        }
    }
}

/// Neighbor matrix for aggregation: `adjacency` with a zero diagonal, rows
/// divided by their sums under [`Aggregation::Mean`].
pub fn neighbor_matrix<T: Scalar>(adjacency: &Mat<T>, aggregation: Aggregation) -> Mat<T> {
    let mut nb = adjacency.clone();
    for i in 0..nb.rows() {
        nb.set(i, i, T::zero());
        if aggregation == Aggregation::Mean {
            let row = nb.row_mut(i);
            let degree: T = row.iter().copied().sum();
            if degree > T::zero() {
                for v in row.iter_mut() {
                    *v /= degree;
                }
            }
        }
    }
    nb
}

/// `(1 + eps)·h + N·h`, where `neighbors` is the adjacency with its diagonal
/// zeroed.
pub fn gin_aggregate<T: Scalar, B: Ops<T>>(
    ops: &mut B,
    h: &B::Tensor,
    neighbors: &B::Tensor,
    eps: &B::Tensor,
) -> B::Tensor {
    let summed = ops.matmul(neighbors, h);
    let weighted_self = ops.scale_by(h, eps);
    let m = ops.add(h, &weighted_self);
    ops.add(&m, &summed)
}

/// `ReLU(W₂·ReLU(W₁·m + b₁) + b₂)` applied to the aggregated messages.
pub fn gin_layer<T: Scalar, B: Ops<T>>(
    ops: &mut B,
    h: &B::Tensor,
    neighbors: &B::Tensor,
    layer: &GinLayer<B::Tensor>,
) -> B::Tensor {
    let m = gin_aggregate(ops, h, neighbors, &layer.eps);
    let z = layer.mlp_in.apply(ops, &m);
    let z = ops.relu(&z);
    let z = layer.mlp_out.apply(ops, &z);
    ops.relu(&z)
}

impl<P> GinStack<P> {
    pub fn forward<T: Scalar, B: Ops<T, Tensor = P>>(&self, ops: &mut B, x: &P, neighbors: &P) -> P
    where
        P: Clone,
    {
        let mut h = x.clone();
        for layer in &self.layers {
            h = gin_layer(ops, &h, neighbors, layer);
        }
        h
    }

    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> GinStack<Q> {
        GinStack {
            layers: self
                .layers
                .iter()
                .map(|l| GinLayer {
                    eps: f(&l.eps),
                    mlp_in: l.mlp_in.map(f),
                    mlp_out: l.mlp_out.map(f),
                })
                .collect(),
            aggregation: self.aggregation,
        }
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.layer{i}.eps"), &l.eps));
            l.mlp_in.collect(&format!("{prefix}.layer{i}.mlp_in"), out);
            l.mlp_out.collect(&format!("{prefix}.layer{i}.mlp_out"), out);
        }
    }

    pub(crate) fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut P>) {
        for l in &mut self.layers {
            out.push(&mut l.eps);
            l.mlp_in.collect_mut(out);
            l.mlp_out.collect_mut(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Eval;

    fn scalar(v: f64) -> Mat<f64> {
        Mat::filled(1, 1, v)
    }

    fn identity_layer(eps: f64) -> GinLayer<Mat<f64>> {
        let id = Affine {
            weight: scalar(1.0),
            bias: scalar(0.0),
        };
        GinLayer {
            eps: scalar(eps),
            mlp_in: id.clone(),
            mlp_out: id,
        }
    }

    #[test]
    fn isolated_nodes_pass_through() {
        let h = Mat::from_rows(&[[1.0], [2.0], [0.5]]).unwrap();
        let out = gin_layer(&mut Eval, &h, &Mat::zeros(3, 3), &identity_layer(0.0));
        assert_eq!(out, h);
    }

    #[test]
    fn two_node_sums() {
        let h = Mat::from_rows(&[[1.0], [2.0]]).unwrap();
        let nb = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let out = gin_layer(&mut Eval, &h, &nb, &identity_layer(0.0));
        assert_eq!(out.as_slice(), &[3.0, 3.0]);
        let out = gin_layer(&mut Eval, &h, &nb, &identity_layer(1.0));
        assert_eq!(out.as_slice(), &[4.0, 5.0]);
    }

    #[test]
    fn neighbor_matrix_drops_self_and_normalizes() {
        let a = Mat::<f64>::from_rows(&[[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]]).unwrap();
        let sum = neighbor_matrix(&a, Aggregation::Sum);
        assert_eq!(sum.row(0), &[0.0, 0.5, 0.25]);
        let mean = neighbor_matrix(&a, Aggregation::Mean);
        assert!((mean.at(0, 1) - 2.0 / 3.0).abs() < 1e-15);
        for i in 0..3 {
            assert!((mean.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        // two nodes joined by a unit edge: both rules coincide
        let pair = Mat::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(neighbor_matrix(&pair, Aggregation::Sum), neighbor_matrix(&pair, Aggregation::Mean));
    }
}
