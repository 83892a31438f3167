//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run a subset by passing criterion numbers:
//! `cargo test --test acceptance -- 5 9`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use uniod::bench::{run_point, sweep_points, Sweep};
use uniod::checkpoint::{encode, load_checkpoint, save_checkpoint};
use uniod::config::TrainConfig;
use uniod::data::{load_corpus, load_dataset, Label};
use uniod::graph::{build_bundle_from_features, embed_nodes, kernel_adjacency, mean_pairwise_distance};
use uniod::metrics::{auprc, auroc};
use uniod::model::{forward, init_params};
use uniod::score::{score, write_scores_csv};
use uniod::synth::{benchmark_suite, generate, SyntheticSpec};
use uniod::train::{cross_entropy, fit, fit_graphs, loss_and_gradients, training_graph};
use uniod::{Corpus, Dataset, Matrix};

use common::*;

type Outcome = Result<String, String>;

const SUITE_SEED: u64 = 2024;
const GENERALIZATION_EPOCHS: usize = 20;
const MIN_MEAN_AUROC: f64 = 0.90;
const MIN_MEAN_AUPRC: f64 = 0.60;
const ABLATION_EPOCHS: usize = 10;
const ABLATION_SEEDS: [u64; 3] = [0, 1, 2];

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn graph_unification() -> Outcome {
    let betas = TrainConfig::default().betas_squared;
    let mut rng = rng(1);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let n = rng.random_range(5..=200);
        let d = rng.random_range(1..=30);
        let spread = rng.random_range(0.1..10.0);
        let x = random_matrix(&mut rng, n, d, spread);
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
        let factor = rng.random_range(0.1..10.0);
        let moved = Matrix::from_fn(n, d, |i, j| x.at(i, j) + shift[j]);
        let scaled = x.scale(factor);

        let sigma = mean_pairwise_distance(&x).map_err(|e| e.to_string())?;
        let sigma_moved = mean_pairwise_distance(&moved).map_err(|e| e.to_string())?;
        let sigma_scaled = mean_pairwise_distance(&scaled).map_err(|e| e.to_string())?;
        for &b in &betas {
            let a = kernel_adjacency(&x, b.sqrt() * sigma).map_err(|e| e.to_string())?;
            for i in 0..n {
                if a.at(i, i) != 1.0 {
                    return Err(format!("case {case}: diagonal {} != 1", a.at(i, i)));
                }
                for j in 0..n {
                    let v = a.at(i, j);
                    if v != a.at(j, i) || !(v > 0.0 && v <= 1.0) {
                        return Err(format!("case {case}: entry ({i},{j}) = {v}"));
                    }
                }
            }
            let t = kernel_adjacency(&moved, b.sqrt() * sigma_moved).map_err(|e| e.to_string())?;
            let s = kernel_adjacency(&scaled, b.sqrt() * sigma_scaled).map_err(|e| e.to_string())?;
            worst = worst.max(a.max_abs_diff(&t)).max(a.max_abs_diff(&s));
        }
    }
    check(worst <= 1e-12, format!("max invariance deviation {worst:.2e}"))
}

fn spectral_optimality() -> Outcome {
    let mut rng = rng(2);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let n = rng.random_range(3..=50);
        let d = rng.random_range(1..=10);
        let x = random_matrix(&mut rng, n, d, 1.0);
        let beta: f64 = rng.random_range(0.3..5.0);
        let sigma = beta.sqrt() * mean_pairwise_distance(&x).map_err(|e| e.to_string())?;
        let a = kernel_adjacency(&x, sigma).map_err(|e| e.to_string())?;
        let d_star = rng.random_range(1..=n);
        let emb = embed_nodes(&a, d_star).map_err(|e| e.to_string())?;
        let gram = emb.matmul(&emb.transpose()).map_err(|e| e.to_string())?;
        let ours = a.sub(&gram).map_err(|e| e.to_string())?.frobenius_norm();

        let (vals, vecs) = jacobi_eigen(&a);
        let best = Matrix::from_fn(n, n, |i, j| {
            (0..d_star).map(|c| vals[c] * vecs.at(i, c) * vecs.at(j, c)).sum()
        });
        let oracle = a.sub(&best).map_err(|e| e.to_string())?.frobenius_norm();
        let gap = (ours - oracle).abs();
        if gap > 1e-8 {
            return Err(format!("case {case} (n={n}, d*={d_star}): {ours:e} vs oracle {oracle:e}"));
        }
        worst = worst.max(gap);
    }
    check(true, format!("max gap {worst:.2e}"))
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        betas_squared: vec![0.5, 1.0, 3.0],
        d_star: 4,
        gin_widths: vec![6, 6, 4],
        gt_layers: 1,
        gt_ffn_width: 8,
        gt_heads: 2,
        head_widths: vec![6, 2],
        ..TrainConfig::default()
    }
}

fn gradient_check() -> Outcome {
    let config = tiny_config();
    let mut rng = rng(3);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for g in 0..10 {
        let x = random_matrix(&mut rng, 5, 3, 2.0);
        let mut labels: Vec<Label> = (0..5)
            .map(|_| if rng.random_bool(0.4) { Label::Outlier } else { Label::Inlier })
            .collect();
        labels[0] = Label::Outlier;
        labels[1] = Label::Inlier;
        let bundle = build_bundle_from_features(&x, &config.betas_squared, config.d_star).map_err(|e| e.to_string())?;
        let mut params = init_params::<f64>(&config, 100 + g).map_err(|e| e.to_string())?;
        let (_, grads) = loss_and_gradients(&params.network, &bundle, &labels, config.loss_reduction)
            .map_err(|e| e.to_string())?;
        let sizes: Vec<usize> = grads.iter().map(|m| m.len()).collect();
        let total: usize = sizes.iter().sum();

        let loss_at = |params: &uniod::ModelParams| -> f64 {
            let p = forward(&bundle, params).expect("forward");
            cross_entropy(&p, &labels, config.loss_reduction).expect("loss")
        };
        for _ in 0..20 {
            let mut flat = rng.random_range(0..total);
            let mut t = 0;
            while flat >= sizes[t] {
                flat -= sizes[t];
                t += 1;
            }
            let cols = grads[t].cols();
            let (r, c) = (flat / cols, flat % cols);
            let original = params.network.tensors_mut()[t].at(r, c);
            params.network.tensors_mut()[t].set(r, c, original + h);
            let up = loss_at(&params);
            params.network.tensors_mut()[t].set(r, c, original - h);
            let down = loss_at(&params);
            params.network.tensors_mut()[t].set(r, c, original);

            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[t].at(r, c);
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            if rel >= 1e-4 {
                return Err(format!(
                    "graph {g}, tensor {t} ({r},{c}): analytic {analytic:e} numeric {numeric:e}"
                ));
            }
            worst = worst.max(rel);
        }
    }
    check(true, format!("max relative error {worst:.2e}"))
}

fn overfit_capacity() -> Outcome {
    let spec = SyntheticSpec {
        n: 60,
        d: 2,
        outlier_ratio: 0.1,
        clusters: 2,
    };
    let ds: Dataset = generate(&spec, "overfit", 4).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        epochs: 500,
        ..TrainConfig::compact()
    };
    let graph = training_graph(&ds, &config).map_err(|e| e.to_string())?;
    let mut reached = None;
    let (_, report) = fit_graphs(&[graph], &config, &mut |step, loss| {
        if loss < 0.05 && reached.is_none() {
            reached = Some(step);
        }
    })
    .map_err(|e| e.to_string())?;
    let last = report.final_loss.unwrap_or(f64::NAN);
    match reached {
        Some(step) => Ok(format!("loss < 0.05 after {step} steps, final {last:.2e}")),
        None => Err(format!("loss stayed >= 0.05 for 500 steps, final {last:.4}")),
    }
}

fn suite() -> Result<(Vec<Dataset>, Vec<Dataset>), String> {
    benchmark_suite::<f64>(10, 5, SUITE_SEED).map_err(|e| e.to_string())
}

fn generalization() -> Outcome {
    let (train, test) = suite()?;
    let corpus = Corpus::new(train, SUITE_SEED).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        epochs: GENERALIZATION_EPOCHS,
        ..TrainConfig::compact()
    };
    let (params, report) = fit(&corpus, &config).map_err(|e| e.to_string())?;
    let (mut roc, mut pr, mut knn) = (0.0, 0.0, 0.0);
    for ds in &test {
        let r = score(ds, &params, &config).map_err(|e| e.to_string())?;
        roc += r.auroc.ok_or("missing auroc")?;
        pr += r.auprc.ok_or("missing auprc")?;
        knn += auroc(&knn_scores(ds.features(), 5), ds.labels().unwrap()).map_err(|e| e.to_string())?;
    }
    let t = test.len() as f64;
    let (roc, pr, knn) = (roc / t, pr / t, knn / t);
    let losses = &report.epoch_losses;
    let decreasing = losses.last() < losses.first();
    check(
        roc >= MIN_MEAN_AUROC && pr >= MIN_MEAN_AUPRC && knn > 0.9 && decreasing,
        format!(
            "mean AUROC {roc:.4} (>= {MIN_MEAN_AUROC}), mean AUPRC {pr:.4} (>= {MIN_MEAN_AUPRC}), \
             kNN AUROC {knn:.4}, loss {:.4} -> {:.4}",
            losses[0],
            losses[losses.len() - 1]
        ),
    )
}

fn ablation() -> Outcome {
    let (train, test) = suite()?;
    let corpus = Corpus::new(train, SUITE_SEED).map_err(|e| e.to_string())?;
    let base = TrainConfig {
        epochs: ABLATION_EPOCHS,
        ..TrainConfig::compact()
    };
    let m_points = sweep_points(Sweep::M, &base, corpus.len()).map_err(|e| e.to_string())?;
    let k_points = sweep_points(Sweep::K, &base, corpus.len()).map_err(|e| e.to_string())?;
    let m1 = m_points.iter().find(|p| p.datasets == 1).ok_or("no M=1 point")?;
    let m10 = m_points.iter().find(|p| p.datasets == 10).ok_or("no M=10 point")?;
    let k1 = &k_points[0];
    // M=10 with all five bandwidths is also the K=5 point
    debug_assert_eq!(k_points[4].config, m10.config);

    let mean = |point: &uniod::bench::SweepPoint| -> Result<f64, String> {
        let mut total = 0.0;
        for &seed in &ABLATION_SEEDS {
            total += run_point(&corpus, &test, point, seed).map_err(|e| e.to_string())?.auroc;
        }
        Ok(total / ABLATION_SEEDS.len() as f64)
    };
    let full = mean(m10)?;
    let one_corpus = mean(m1)?;
    let one_bandwidth = mean(k1)?;
    check(
        full >= one_corpus && full >= one_bandwidth,
        format!("AUROC M=10/K=5 {full:.4}, M=1 {one_corpus:.4}, K=1 {one_bandwidth:.4}"),
    )
}

fn metric_oracles() -> Outcome {
    let mut rng = rng(7);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(2..=50);
        let tied = case % 2 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if tied {
                    rng.random_range(0..5) as f64 / 4.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let mut labels: Vec<Label> = (0..n)
            .map(|_| if rng.random_bool(0.3) { Label::Outlier } else { Label::Inlier })
            .collect();
        labels[0] = Label::Outlier;
        labels[n - 1] = Label::Inlier;
        let roc = auroc(&scores, &labels).map_err(|e| e.to_string())?;
        if roc != pairwise_auroc(&scores, &labels) {
            return Err(format!("case {case}: AUROC {roc} != {}", pairwise_auroc(&scores, &labels)));
        }
        let gap = (auprc(&scores, &labels).map_err(|e| e.to_string())? - tie_grouped_ap(&scores, &labels)).abs();
        worst = worst.max(gap);
    }
    check(worst <= 1e-12, format!("AUROC exact on 100 cases, max AUPRC gap {worst:.2e}"))
}

fn adbench_replication() -> Option<Outcome> {
    let root = PathBuf::from(std::env::var_os("UNIOD_ADBENCH_DIR")?);
    Some((|| {
        let config = TrainConfig::default();
        let corpus = load_corpus::<f64>(&root.join("historical"), config.seed).map_err(|e| e.to_string())?;
        let target: Dataset = load_dataset(&root.join("breastw.csv"), Some("label")).map_err(|e| e.to_string())?;
        let (params, _) = fit(&corpus, &config).map_err(|e| e.to_string())?;
        let roc = score(&target, &params, &config).map_err(|e| e.to_string())?.auroc.ok_or("breastw has no labels")?;
        check(roc >= 0.85, format!("breastw AUROC {roc:.4} (>= 0.85)"))
    })())
}

fn determinism() -> Outcome {
    let config = TrainConfig {
        epochs: 3,
        subsample_copies: 2,
        ..tiny_config()
    };
    let datasets = (0..3)
        .map(|i| {
            let spec = SyntheticSpec {
                n: 30 + 5 * i,
                d: 2 + i,
                outlier_ratio: 0.15,
                clusters: 1 + i % 2,
            };
            generate(&spec, &format!("det{i}"), 90 + i as u64)
        })
        .collect::<uniod::Result<Vec<Dataset>>>()
        .map_err(|e| e.to_string())?;
    let corpus = Corpus::new(datasets.clone(), 5).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let files = [("det.csv".to_string(), 1u64)];

    let mut checkpoints = Vec::new();
    let mut score_files = Vec::new();
    for run in 0..2 {
        let (params, _) = fit(&corpus, &config).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("run{run}.ckpt"));
        save_checkpoint(&params, &config, &files, 9, &path).map_err(|e| e.to_string())?;
        checkpoints.push(std::fs::read(&path).map_err(|e| e.to_string())?);

        let loaded = load_checkpoint::<f64>(&path).map_err(|e| e.to_string())?;
        if loaded.params != params {
            return Err("checkpoint round trip changed parameters".into());
        }
        let again = encode(&loaded.params, &loaded.config, &loaded.corpus_files, loaded.corpus_fingerprint)
            .map_err(|e| e.to_string())?;
        if again != checkpoints[run] {
            return Err("re-encoding a loaded checkpoint changed its bytes".into());
        }
        let scores_path = dir.path().join(format!("run{run}.csv"));
        let report = score(&datasets[0], &loaded.params, &loaded.config).map_err(|e| e.to_string())?;
        write_scores_csv(&report, &scores_path).map_err(|e| e.to_string())?;
        score_files.push(std::fs::read(&scores_path).map_err(|e| e.to_string())?);
    }
    check(
        checkpoints[0] == checkpoints[1] && score_files[0] == score_files[1],
        format!("{} checkpoint bytes and {} score bytes identical across runs", checkpoints[0].len(), score_files[0].len()),
    )
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Option<Outcome>,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "graph unification invariants", limit: Duration::from_secs(10), run: || Some(graph_unification()) },
        Criterion { id: 2, name: "spectral embedding optimality", limit: Duration::from_secs(10), run: || Some(spectral_optimality()) },
        Criterion { id: 3, name: "full-model gradient check", limit: Duration::from_secs(60), run: || Some(gradient_check()) },
        Criterion { id: 4, name: "overfit capacity", limit: Duration::from_secs(300), run: || Some(overfit_capacity()) },
        Criterion { id: 5, name: "cross-dataset generalization", limit: Duration::from_secs(900), run: || Some(generalization()) },
        Criterion { id: 6, name: "ablation trends", limit: Duration::from_secs(2700), run: || Some(ablation()) },
        Criterion { id: 7, name: "metric oracles", limit: Duration::from_secs(5), run: || Some(metric_oracles()) },
        Criterion { id: 8, name: "breastw replication (optional)", limit: Duration::from_secs(3600), run: adbench_replication },
        Criterion { id: 9, name: "determinism and persistence", limit: Duration::from_secs(60), run: || Some(determinism()) },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();

    let mut failures = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| Some(Err("panicked".into())));
        let elapsed = started.elapsed();
        let line = match outcome {
            None => format!("SKIP criterion {} {}: set UNIOD_ADBENCH_DIR to run", c.id, c.name),
            Some(Ok(detail)) if elapsed <= c.limit => {
                format!("PASS criterion {} {} ({:.1}s): {detail}", c.id, c.name, elapsed.as_secs_f64())
            }
            Some(Ok(detail)) => {
                failures += 1;
                format!(
                    "FAIL criterion {} {} ({:.1}s, limit {}s): {detail}",
                    c.id,
                    c.name,
                    elapsed.as_secs_f64(),
                    c.limit.as_secs()
                )
            }
            Some(Err(detail)) => {
                failures += 1;
                format!("FAIL criterion {} {} ({:.1}s): {detail}", c.id, c.name, elapsed.as_secs_f64())
            }
        };
        println!("{line}");
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
