//! Training: cross-entropy over node labels, AdamW, one optimizer step per
//! training graph, Q epochs over a seeded shuffle.

mod adamw;

pub use adamw::{adamw_update, AdamState, AdamW};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{cross_entropy_value, Ops, Reduction, Tape};
use crate::config::TrainConfig;
use crate::data::{build_training_corpus, cap_samples, derived_seed, Corpus, Dataset, Label};
use crate::error::{Error, Result};
use crate::graph::{build_bundle, GraphBundle};
use crate::linalg::Mat;
use crate::model::{check_compatible, forward_with, init_params, GraphInputs, ModelParams, Network};
use crate::scalar::Scalar;

/// Per-node `-log ŷ[true class]`, with probabilities clamped at 1e-12,
/// reduced by mean or sum.
pub fn cross_entropy<T: Scalar>(predictions: &Mat<T>, labels: &[Label], reduction: Reduction) -> Result<T> {
    if predictions.rows() != labels.len() || predictions.cols() != 2 {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            left: predictions.shape(),
            right: (labels.len(), 2),
        });
    }
    let classes: Vec<usize> = labels.iter().map(|l| l.class_index()).collect();
    Ok(cross_entropy_value(predictions, &classes, reduction))
}

/// One labeled training graph.
#[derive(Clone, Debug)]
pub struct TrainingGraph<T> {
    pub id: String,
    pub bundle: GraphBundle<T>,
    pub labels: Vec<Label>,
}

/// Applies the optional standardization and the sample cap, then builds the
/// bundle. Used for every graph the model sees, training or scoring.
pub fn prepare_dataset<T: Scalar>(ds: &Dataset<T>, config: &TrainConfig, seed: u64) -> Result<Dataset<T>> {
    let ds = if config.standardize {
        ds.standardized()?
    } else {
        ds.clone()
    };
    cap_samples(&ds, config.max_samples, derived_seed(seed, ds.id(), 0))
}

pub fn training_graph<T: Scalar>(ds: &Dataset<T>, config: &TrainConfig) -> Result<TrainingGraph<T>> {
    let ds = prepare_dataset(ds, config, config.seed)?;
    let labels = ds
        .labels()
        .ok_or_else(|| Error::dataset(ds.id(), "training data must be labeled"))?
        .to_vec();
    let bundle = build_bundle(&ds, &config.betas_squared, config.d_star)?;
    Ok(TrainingGraph {
        id: ds.id().to_string(),
        bundle,
        labels,
    })
}

/// Loss on one graph and its gradient for every parameter, in
/// [`Network::named_tensors`] order.
pub fn loss_and_gradients<T: Scalar>(
    network: &Network<Mat<T>>,
    bundle: &GraphBundle<T>,
    labels: &[Label],
    reduction: Reduction,
) -> Result<(T, Vec<Mat<T>>)> {
    check_compatible(bundle, network)?;
    if labels.len() != bundle.n() {
        return Err(Error::ShapeMismatch {
            op: "loss_and_gradients",
            left: (bundle.n(), 2),
            right: (labels.len(), 2),
        });
    }
    let mut tape = Tape::new();
    let vars = network.map(&mut |m| tape.param(m.clone()));
    let inputs = GraphInputs::new(&mut tape, bundle, network.aggregation());
    let probs = forward_with(&mut tape, &inputs, &vars);
    let classes: Vec<usize> = labels.iter().map(|l| l.class_index()).collect();
    let loss = tape.cross_entropy(&probs, &classes, reduction);
    let value = tape.value(&loss).at(0, 0);
    let order: Vec<_> = vars.named_tensors().into_iter().map(|(_, v)| *v).collect();
    let grads = tape.backward(&loss, &order)?;
    Ok((value, grads))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over the graphs of each epoch.
    pub epoch_losses: Vec<f64>,
    pub final_loss: Option<f64>,
    pub graphs: usize,
    pub steps: usize,
    /// Wall-clock seconds spent building kernel graphs and spectral features.
    pub graph_seconds: f64,
    /// Wall-clock seconds spent in forward/backward/update.
    pub optimize_seconds: f64,
}

/// Trains on pre-built graphs. `progress` receives `(epoch, mean_loss)`.
pub fn fit_graphs<T: Scalar>(
    graphs: &[TrainingGraph<T>],
    config: &TrainConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<(ModelParams<T>, TrainReport)> {
    config.validate()?;
    let mut params = init_params::<T>(config, config.seed)?;
    let mut report = TrainReport {
        graphs: graphs.len(),
        ..TrainReport::default()
    };
    if config.epochs == 0 || graphs.is_empty() {
        return Ok((params, report));
    }

    let opt = AdamW::new(config.learning_rate, config.weight_decay);
    let mut state = AdamState::zeros_like(
        params.network.named_tensors().into_iter().map(|(_, m)| m),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x05ee_d0f0_e0c4);
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let started = Instant::now();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &g in &order {
            let graph = &graphs[g];
            let (loss, grads) =
                loss_and_gradients(&params.network, &graph.bundle, &graph.labels, config.loss_reduction)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    graph: graph.id.clone(),
                });
            }
            opt.step(params.network.tensors_mut(), &grads, &mut state);
            total += loss;
            report.steps += 1;
        }
        if !params.network.is_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let mean = total / graphs.len() as f64;
        report.epoch_losses.push(mean);
        progress(epoch, mean);
    }
    report.final_loss = report.epoch_losses.last().copied();
    report.optimize_seconds = started.elapsed().as_secs_f64();
    Ok((params, report))
}

/// Full training stage: subsampled corpus, graphs built once, then
/// [`fit_graphs`].
pub fn fit<T: Scalar>(corpus: &Corpus<T>, config: &TrainConfig) -> Result<(ModelParams<T>, TrainReport)> {
    fit_with_progress(corpus, config, &mut |_, _| {})
}

pub fn fit_with_progress<T: Scalar>(
    corpus: &Corpus<T>,
    config: &TrainConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<(ModelParams<T>, TrainReport)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    let started = Instant::now();
    let expanded = build_training_corpus(
        corpus,
        config.subsample_copies,
        config.subsample_ratio,
        config.include_original,
    )?;
    let graphs = expanded
        .datasets()
        .iter()
        .map(|ds| training_graph(ds, config))
        .collect::<Result<Vec<_>>>()?;
    let graph_seconds = started.elapsed().as_secs_f64();
    let (params, mut report) = fit_graphs(&graphs, config, progress)?;
    report.graph_seconds = graph_seconds;
    Ok((params, report))
}
