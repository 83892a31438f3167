//! The universal classifier: K GIN stacks and K graph-transformer stacks, one
//! of each per bandwidth, concatenated and fed to an MLP with a softmax head.

mod gin;
mod layers;
mod transformer;

pub use gin::{gin_aggregate, gin_layer, neighbor_matrix, Aggregation, GinLayer, GinStack};
pub use layers::{Affine, LayerNorm};
pub use transformer::{gt_layer, self_attention, GtLayer, GtStack};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Eval, Ops};
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::GraphBundle;
use crate::linalg::Mat;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct HeadMlp<P> {
    pub layers: Vec<Affine<P>>,
}

impl<P> HeadMlp<P> {
    /// Logits; ReLU between layers, none after the last.
    pub fn forward<T: Scalar, B: Ops<T, Tensor = P>>(&self, ops: &mut B, z: &P) -> P {
        let mut h = self.layers[0].apply(ops, z);
        for layer in &self.layers[1..] {
            h = ops.relu(&h);
            h = layer.apply(ops, &h);
        }
        h
    }
}

/// Every learnable tensor of the model, generic over how tensors are held
/// (`Mat<T>` for stored parameters, tape handles during training).
#[derive(Clone, Debug, PartialEq)]
pub struct Network<P> {
    pub gins: Vec<GinStack<P>>,
    pub gts: Vec<GtStack<P>>,
    pub head: HeadMlp<P>,
}

impl<P> Network<P> {
    pub fn k(&self) -> usize {
        self.gins.len()
    }

    pub fn aggregation(&self) -> Aggregation {
        self.gins.first().map_or(Aggregation::default(), |g| g.aggregation)
    }

    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> Network<Q> {
        Network {
            gins: self.gins.iter().map(|g| g.map(f)).collect(),
            gts: self.gts.iter().map(|g| g.map(f)).collect(),
            head: HeadMlp {
                layers: self.head.layers.iter().map(|l| l.map(f)).collect(),
            },
        }
    }

    /// Tensors with stable dotted names, in a fixed traversal order.
    pub fn named_tensors(&self) -> Vec<(String, &P)> {
        let mut out = Vec::new();
        for (k, g) in self.gins.iter().enumerate() {
            g.collect(&format!("gin{k}"), &mut out);
        }
        for (k, g) in self.gts.iter().enumerate() {
            g.collect(&format!("gt{k}"), &mut out);
        }
        for (i, l) in self.head.layers.iter().enumerate() {
            l.collect(&format!("head.layer{i}"), &mut out);
        }
        out
    }

    /// Same order as [`Network::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut P> {
        let mut out = Vec::new();
        for g in &mut self.gins {
            g.collect_mut(&mut out);
        }
        for g in &mut self.gts {
            g.collect_mut(&mut out);
        }
        for l in &mut self.head.layers {
            l.collect_mut(&mut out);
        }
        out
    }
}

impl<T: Scalar> Network<Mat<T>> {
    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, m)| m.len()).sum()
    }

    /// Input width of every stack (the unified feature dimension).
    pub fn d_star(&self) -> usize {
        self.gins[0].layers[0].mlp_in.weight.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, m)| m.is_finite())
    }
}

/// Trained or freshly initialized parameters together with the fingerprint
/// of the configuration that shaped them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub network: Network<Mat<T>>,
    pub config_fingerprint: u64,
}

/// Glorot-uniform weights, zero biases, `eps = 0`, unit layer-norm gains.
pub fn init_params<T: Scalar>(config: &TrainConfig, seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut affine = |fan_in: usize, fan_out: usize| {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Mat::from_fn(fan_in, fan_out, |_, _| T::of(rng.random_range(-a..a)));
        Affine {
            weight,
            bias: Mat::zeros(1, fan_out),
        }
    };
    let norm = |w: usize| LayerNorm {
        gain: Mat::filled(1, w, T::one()),
        bias: Mat::zeros(1, w),
    };

    let d = config.d_star;
    let mut gins = Vec::with_capacity(config.k());
    for _ in 0..config.k() {
        let mut prev = d;
        let mut layers = Vec::with_capacity(config.gin_widths.len());
        for &w in &config.gin_widths {
            layers.push(GinLayer {
                eps: Mat::zeros(1, 1),
                mlp_in: affine(prev, w),
                mlp_out: affine(w, w),
            });
            prev = w;
        }
        gins.push(GinStack {
            layers,
            aggregation: config.gin_aggregation,
        });
    }
    let mut gts = Vec::with_capacity(config.k());
    for _ in 0..config.k() {
        let layers = (0..config.gt_layers)
            .map(|_| GtLayer {
                query: affine(d, d),
                key: affine(d, d),
                value: affine(d, d),
                output: affine(d, d),
                norm1: norm(d),
                ffn_in: affine(d, config.gt_ffn_width),
                ffn_out: affine(config.gt_ffn_width, d),
                norm2: norm(d),
            })
            .collect();
        gts.push(GtStack {
            layers,
            heads: config.gt_heads,
        });
    }
    let mut prev = config.embedding_width();
    let mut head = Vec::with_capacity(config.head_widths.len());
    for &w in &config.head_widths {
        head.push(affine(prev, w));
        prev = w;
    }
    Ok(ModelParams {
        network: Network {
            gins,
            gts,
            head: HeadMlp { layers: head },
        },
        config_fingerprint: config.architecture_fingerprint(),
    })
}

/// Per-bandwidth model inputs: feature blocks and neighbor matrices (see
/// [`neighbor_matrix`]; self enters the GIN update via `1 + eps`).
pub struct GraphInputs<P> {
    pub blocks: Vec<P>,
    pub neighbors: Vec<P>,
}

impl<P> GraphInputs<P> {
    pub fn new<T: Scalar, B: Ops<T, Tensor = P>>(
        ops: &mut B,
        bundle: &GraphBundle<T>,
        aggregation: Aggregation,
    ) -> Self {
        let mut blocks = Vec::with_capacity(bundle.k());
        let mut neighbors = Vec::with_capacity(bundle.k());
        for (k, a) in bundle.adjacencies.iter().enumerate() {
            blocks.push(ops.constant(bundle.block(k)));
            neighbors.push(ops.constant(neighbor_matrix(a, aggregation)));
        }
        GraphInputs { blocks, neighbors }
    }
}

/// `[Z_GIN_1 … Z_GIN_K]`: stack k reads feature block k over adjacency k.
pub fn kgin_forward<T: Scalar, B: Ops<T>>(
    ops: &mut B,
    inputs: &GraphInputs<B::Tensor>,
    gins: &[GinStack<B::Tensor>],
) -> B::Tensor
where
    B::Tensor: Clone,
{
    let outs: Vec<B::Tensor> = gins
        .iter()
        .enumerate()
        .map(|(k, g)| g.forward(ops, &inputs.blocks[k], &inputs.neighbors[k]))
        .collect();
    ops.concat_cols(&outs)
}

/// `[Z_GT_1 … Z_GT_K]`: stack k attends over feature block k only.
pub fn kgt_forward<T: Scalar, B: Ops<T>>(
    ops: &mut B,
    inputs: &GraphInputs<B::Tensor>,
    gts: &[GtStack<B::Tensor>],
) -> B::Tensor
where
    B::Tensor: Clone,
{
    let outs: Vec<B::Tensor> = gts
        .iter()
        .enumerate()
        .map(|(k, g)| g.forward(ops, &inputs.blocks[k]))
        .collect();
    ops.concat_cols(&outs)
}

/// Row-stochastic `n × 2` predictions; column 1 is the outlier probability.
pub fn forward_with<T: Scalar, B: Ops<T>>(
    ops: &mut B,
    inputs: &GraphInputs<B::Tensor>,
    net: &Network<B::Tensor>,
) -> B::Tensor
where
    B::Tensor: Clone,
{
    let z_gin = kgin_forward(ops, inputs, &net.gins);
    let z_gt = kgt_forward(ops, inputs, &net.gts);
    let z = ops.concat_cols(&[z_gin, z_gt]);
    let logits = net.head.forward(ops, &z);
    ops.softmax_rows(&logits)
}

pub(crate) fn check_compatible<T: Scalar>(bundle: &GraphBundle<T>, net: &Network<Mat<T>>) -> Result<()> {
    let d = net.d_star();
    if bundle.k() != net.gins.len() || bundle.k() != net.gts.len() {
        return Err(Error::InvalidArgument(format!(
            "bundle has {} bandwidths, model expects {}",
            bundle.k(),
            net.gins.len()
        )));
    }
    if bundle.d_star != d || bundle.features.cols() != bundle.k() * d {
        return Err(Error::ShapeMismatch {
            op: "forward",
            left: bundle.features.shape(),
            right: (bundle.n(), bundle.k() * d),
        });
    }
    Ok(())
}

/// Eager forward pass.
pub fn forward<T: Scalar>(bundle: &GraphBundle<T>, params: &ModelParams<T>) -> Result<Mat<T>> {
    check_compatible(bundle, &params.network)?;
    let mut ops = Eval;
    let inputs = GraphInputs::new(&mut ops, bundle, params.network.aggregation());
    let out = forward_with(&mut ops, &inputs, &params.network);
    out.ensure_finite("forward")?;
    Ok(out)
}
