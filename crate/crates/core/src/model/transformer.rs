//! Post-norm transformer encoder over node features: full self-attention
//! across all nodes, no positional encoding, no mask.

use super::layers::{Affine, LayerNorm};
use crate::autodiff::Ops;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct GtLayer<P> {
    pub query: Affine<P>,
    pub key: Affine<P>,
    pub value: Affine<P>,
    pub output: Affine<P>,
    pub norm1: LayerNorm<P>,
    pub ffn_in: Affine<P>,
    pub ffn_out: Affine<P>,
    pub norm2: LayerNorm<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GtStack<P> {
    pub layers: Vec<GtLayer<P>>,
    pub heads: usize,
}

/// Multi-head scaled dot-product self-attention followed by the output
/// projection.
pub fn self_attention<T: Scalar, B: Ops<T>>(
    ops: &mut B,
    h: &B::Tensor,
    layer: &GtLayer<B::Tensor>,
    heads: usize,
) -> B::Tensor {
    let q = layer.query.apply(ops, h);
    let k = layer.key.apply(ops, h);
    let v = layer.value.apply(ops, h);
    let width = ops.value(&q).cols();
    let head_width = width / heads;
    let scale = T::one() / T::usize(head_width).sqrt();

    let mut outs = Vec::with_capacity(heads);
    for head in 0..heads {
        let (lo, hi) = (head * head_width, (head + 1) * head_width);
        let qh = ops.slice_cols(&q, lo, hi);
        let kh = ops.slice_cols(&k, lo, hi);
        let vh = ops.slice_cols(&v, lo, hi);
        let scores = ops.matmul_nt(&qh, &kh);
        let scores = ops.scale(&scores, scale);
        let weights = ops.softmax_rows(&scores);
        outs.push(ops.matmul(&weights, &vh));
    }
    let joined = if heads == 1 {
        outs.pop().expect("one head")
    } else {
        ops.concat_cols(&outs)
    };
    layer.output.apply(ops, &joined)
}

/// `h ← LN(h + MHA(h)); h ← LN(h + FFN(h))`
pub fn gt_layer<T: Scalar, B: Ops<T>>(
    ops: &mut B,
    h: &B::Tensor,
    layer: &GtLayer<B::Tensor>,
    heads: usize,
) -> B::Tensor {
    let att = self_attention(ops, h, layer, heads);
    let res = ops.add(h, &att);
    let h = layer.norm1.apply(ops, &res);
    let f = layer.ffn_in.apply(ops, &h);
    let f = ops.relu(&f);
    let f = layer.ffn_out.apply(ops, &f);
    let res = ops.add(&h, &f);
    layer.norm2.apply(ops, &res)
}

impl<P> GtStack<P> {
    pub fn forward<T: Scalar, B: Ops<T, Tensor = P>>(&self, ops: &mut B, x: &P) -> P
    where
        P: Clone,
    {
        let mut h = x.clone();
        for layer in &self.layers {
            h = gt_layer(ops, &h, layer, self.heads);
        }
        h
    }

    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> GtStack<Q> {
        GtStack {
            layers: self
                .layers
                .iter()
                .map(|l| GtLayer {
                    query: l.query.map(f),
                    key: l.key.map(f),
                    value: l.value.map(f),
                    output: l.output.map(f),
                    norm1: l.norm1.map(f),
                    ffn_in: l.ffn_in.map(f),
                    ffn_out: l.ffn_out.map(f),
                    norm2: l.norm2.map(f),
                })
                .collect(),
            heads: self.heads,
        }
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a P)>) {
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("{prefix}.layer{i}");
            l.query.collect(&format!("{p}.query"), out);
            l.key.collect(&format!("{p}.key"), out);
            l.value.collect(&format!("{p}.value"), out);
            l.output.collect(&format!("{p}.output"), out);
            l.norm1.collect(&format!("{p}.norm1"), out);
            l.ffn_in.collect(&format!("{p}.ffn_in"), out);
            l.ffn_out.collect(&format!("{p}.ffn_out"), out);
            l.norm2.collect(&format!("{p}.norm2"), out);
        }
    }

    pub(crate) fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut P>) {
        for l in &mut self.layers {
            l.query.collect_mut(out);
            l.key.collect_mut(out);
            l.value.collect_mut(out);
            l.output.collect_mut(out);
            l.norm1.collect_mut(out);
            l.ffn_in.collect_mut(out);
            l.ffn_out.collect_mut(out);
            l.norm2.collect_mut(out);
        }
    }
}
