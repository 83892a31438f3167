//! Ablation sweeps: retrain with one factor varied and score held-out data.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::checkpoint::write_atomic;
use crate::config::TrainConfig;
use crate::data::{derived_seed, Corpus, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::score::score;
use crate::train::fit;

/// Corpus sizes tried by the `m` sweep, capped by the corpus size.
pub const M_VALUES: [usize; 5] = [1, 3, 5, 10, 15];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    /// Number of historical datasets.
    M,
    /// Number of bandwidths, as prefixes of the configured list.
    K,
    /// Subsampled copies versus the original datasets only.
    Subsampling,
}

impl Sweep {
    pub fn as_str(self) -> &'static str {
        match self {
            Sweep::M => "m",
            Sweep::K => "k",
            Sweep::Subsampling => "subsampling",
        }
    }
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(Sweep::M),
            "k" => Ok(Sweep::K),
            "subsampling" => Ok(Sweep::Subsampling),
            _ => Err(Error::InvalidArgument(format!(
                "unknown sweep {s:?} (expected m, k or subsampling)"
            ))),
        }
    }
}

/// One setting of the swept factor.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    /// Numeric position for plotting.
    pub x: f64,
    pub datasets: usize,
    pub config: TrainConfig,
}

pub fn sweep_points(sweep: Sweep, base: &TrainConfig, corpus_len: usize) -> Result<Vec<SweepPoint>> {
    base.validate()?;
    if corpus_len == 0 {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    let point = |label: String, x: f64, datasets: usize, config: TrainConfig| SweepPoint {
        label,
        x,
        datasets,
        config,
    };
    Ok(match sweep {
        Sweep::M => M_VALUES
            .iter()
            .filter(|&&m| m <= corpus_len)
            .map(|&m| point(m.to_string(), m as f64, m, base.clone()))
            .collect(),
        Sweep::K => (1..=base.k())
            .map(|k| {
                let mut c = base.clone();
                c.truncate_bandwidths(k)?;
                Ok(point(k.to_string(), k as f64, corpus_len, c))
            })
            .collect::<Result<_>>()?,
        Sweep::Subsampling => {
            // A single copy at ratio 1 is the original dataset.
            let mut off = base.clone();
            off.subsample_copies = 1;
            off.subsample_ratio = 1.0;
            off.include_original = false;
            vec![
                point("off".into(), 0.0, corpus_len, off),
                point("on".into(), 1.0, corpus_len, base.clone()),
            ]
        }
    })
}

/// Mean held-out metrics of one point for one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub auroc: f64,
    pub auprc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointSummary {
    pub sweep: Sweep,
    pub label: String,
    pub x: f64,
    pub runs: Vec<SeedResult>,
    pub mean_auroc: f64,
    pub mean_auprc: f64,
}

/// Trains on the first `point.datasets` historical datasets with `seed` and
/// averages AUROC/AUPRC over `tests`.
pub fn run_point<T: Scalar>(
    corpus: &Corpus<T>,
    tests: &[Dataset<T>],
    point: &SweepPoint,
    seed: u64,
) -> Result<SeedResult> {
    if tests.is_empty() {
        return Err(Error::InvalidArgument("no held-out datasets".into()));
    }
    let mut config = point.config.clone();
    config.seed = seed;
    let subset = Corpus::new(corpus.prefix(point.datasets).datasets().to_vec(), seed)?;
    let (params, _) = fit(&subset, &config)?;
    let (mut roc, mut pr) = (0.0, 0.0);
    for ds in tests {
        let report = score(ds, &params, &config)?;
        match (report.auroc, report.auprc) {
            (Some(a), Some(p)) => {
                roc += a;
                pr += p;
            }
            _ => {
                return Err(Error::dataset(
                    ds.id(),
                    "held-out dataset needs labels with both classes",
                ))
            }
        }
    }
    let t = tests.len() as f64;
    Ok(SeedResult {
        seed,
        auroc: roc / t,
        auprc: pr / t,
    })
}

/// Runs every point of a sweep for every seed.
///
/// Sequential runs reuse `seeds` at every point. With `parallel`, points run
/// on separate threads and each point derives its own seeds from `seeds` and
/// its label.
pub fn run_sweep<T: Scalar>(
    corpus: &Corpus<T>,
    tests: &[Dataset<T>],
    base: &TrainConfig,
    sweep: Sweep,
    seeds: &[u64],
    parallel: bool,
    progress: &(dyn Fn(&str, &SeedResult) + Sync),
) -> Result<Vec<PointSummary>> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let points = sweep_points(sweep, base, corpus.len())?;
    let run = |p: &SweepPoint| -> Result<PointSummary> {
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let seed = if parallel {
                derived_seed(seed, &format!("{}={}", sweep.as_str(), p.label), 0)
            } else {
                seed
            };
            let r = run_point(corpus, tests, p, seed)?;
            progress(&p.label, &r);
            runs.push(r);
        }
        let s = runs.len() as f64;
        Ok(PointSummary {
            sweep,
            label: p.label.clone(),
            x: p.x,
            mean_auroc: runs.iter().map(|r| r.auroc).sum::<f64>() / s,
            mean_auprc: runs.iter().map(|r| r.auprc).sum::<f64>() / s,
            runs,
        })
    };
    if !parallel {
        return points.iter().map(run).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = points.iter().map(|p| scope.spawn(move || run(p))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

/// One row per point and seed, then one `mean` row per point.
pub fn write_bench_csv(summaries: &[PointSummary], path: &Path) -> Result<()> {
    let mut text = String::from("sweep,value,seed,auroc,auprc\n");
    for s in summaries {
        for r in &s.runs {
            let _ = writeln!(text, "{},{},{},{},{}", s.sweep.as_str(), s.label, r.seed, r.auroc, r.auprc);
        }
    }
    for s in summaries {
        let _ = writeln!(text, "{},{},mean,{},{}", s.sweep.as_str(), s.label, s.mean_auroc, s.mean_auprc);
    }
    write_atomic(path, text.as_bytes())
}

/// Whitespace-separated `x mean_auroc mean_auprc` for gnuplot.
pub fn write_gnuplot_dat(summaries: &[PointSummary], path: &Path) -> Result<()> {
    let mut text = String::new();
    if let Some(first) = summaries.first() {
        let _ = writeln!(text, "# sweep {}", first.sweep.as_str());
    }
    text.push_str("# x mean_auroc mean_auprc label\n");
    for s in summaries {
        let _ = writeln!(text, "{} {} {} {}", s.x, s.mean_auroc, s.mean_auprc, s.label);
    }
    write_atomic(path, text.as_bytes())
}
