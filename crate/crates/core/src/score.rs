//! Scoring unseen datasets with a trained model.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::data::{derived_seed, Dataset, Label};
use crate::error::{Error, Result};
use crate::graph::build_bundle;
use crate::metrics::{auprc, auroc};
use crate::model::{forward, ModelParams};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub dataset_id: String,
    /// Outlier probability of each sample, in input row order.
    pub scores: Vec<f64>,
    pub labels: Option<Vec<Label>>,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
}

/// Outlier probabilities for every row of `ds`.
///
/// Datasets above `config.max_samples` rows are split into near-equal random
/// chunks (seeded by `config.seed`) that are scored as separate graphs.
pub fn score<T: Scalar>(ds: &Dataset<T>, params: &ModelParams<T>, config: &TrainConfig) -> Result<ScoreReport> {
    let prepared = if config.standardize {
        ds.standardized()?
    } else {
        ds.clone()
    };
    let n = prepared.n();
    let mut scores = vec![0.0; n];
    if n <= config.max_samples {
        score_rows(&prepared, params, config, &mut scores)?;
    } else {
        let chunks = n.div_ceil(config.max_samples);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derived_seed(config.seed, ds.id(), 0)));
        let base = n / chunks;
        let extra = n % chunks;
        let mut start = 0;
        for c in 0..chunks {
            let len = base + (c < extra) as usize;
            let mut rows = order[start..start + len].to_vec();
            rows.sort_unstable();
            start += len;
            let part = prepared.select(&rows, format!("{}#chunk{c}", ds.id()))?;
            let mut part_scores = vec![0.0; len];
            score_rows(&part, params, config, &mut part_scores)?;
            for (&r, s) in rows.iter().zip(part_scores) {
                scores[r] = s;
            }
        }
    }

    let labels = ds.labels().map(|l| l.to_vec());
    let (mut roc, mut pr) = (None, None);
    if let Some(l) = &labels {
        let outliers = l.iter().filter(|x| x.is_outlier()).count();
        if outliers > 0 && outliers < l.len() {
            roc = Some(auroc(&scores, l)?);
            pr = Some(auprc(&scores, l)?);
        }
    }
    Ok(ScoreReport {
        dataset_id: ds.id().to_string(),
        scores,
        labels,
        auroc: roc,
        auprc: pr,
    })
}

fn score_rows<T: Scalar>(
    ds: &Dataset<T>,
    params: &ModelParams<T>,
    config: &TrainConfig,
    out: &mut [f64],
) -> Result<()> {
    let bundle = build_bundle(ds, &config.betas_squared, config.d_star)?;
    let probs = forward(&bundle, params)?;
    for (i, s) in out.iter_mut().enumerate() {
        *s = probs.at(i, 1).as_f64();
    }
    Ok(())
}

/// Writes `index,score[,label]`, one line per sample.
pub fn write_scores_csv(report: &ScoreReport, path: &Path) -> Result<()> {
    let mut text = String::with_capacity(report.scores.len() * 24);
    text.push_str(if report.labels.is_some() {
        "index,score,label\n"
    } else {
        "index,score\n"
    });
    for (i, s) in report.scores.iter().enumerate() {
        match &report.labels {
            Some(l) => text.push_str(&format!("{i},{s},{}\n", l[i].as_str())),
            None => text.push_str(&format!("{i},{s}\n")),
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
