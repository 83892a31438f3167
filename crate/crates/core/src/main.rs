use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uniod::autodiff::Reduction;
use uniod::bench::{run_sweep, write_bench_csv, write_gnuplot_dat, Sweep};
use uniod::checkpoint::{load_checkpoint, save_checkpoint};
use uniod::config::TrainConfig;
use uniod::data::{corpus_entries, corpus_file_sizes, corpus_fingerprint, load_corpus, load_dataset, write_dataset_csv};
use uniod::score::{score, write_scores_csv};
use uniod::synth::benchmark_suite;
use uniod::train::fit_with_progress;
use uniod::{Checkpoint, Dataset, Error, Result};

#[derive(Parser)]
#[command(name = "uniod", version, about = "Graph-based outlier detection trained on labeled historical datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a detector on a directory of labeled CSVs.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Checkpoint path; a `<out>.report.json` is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score every row of a CSV with a trained detector.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Column holding 0/1 labels; enables AUROC/AUPRC output.
        #[arg(long)]
        label_column: Option<String>,
        /// `key = value` overrides; architecture keys must match the model.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training corpus to compare against the one recorded in the model.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Retrain across a swept factor and report held-out metrics.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory of labeled held-out CSVs.
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_parser = ["m", "k", "subsampling"])]
        sweep: String,
        /// Result CSV; a gnuplot `.dat` is written beside it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Run sweep points on separate threads.
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Write a synthetic historical/held-out suite as CSVs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        historical: usize,
        #[arg(long, default_value_t = 5)]
        held_out: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Start from the small preset instead of the full-size defaults.
    #[arg(long)]
    compact: bool,
    /// `key = value` file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Keep the first K bandwidths.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d_star: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    wd: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    subsample_copies: Option<usize>,
    #[arg(long)]
    subsample_ratio: Option<f64>,
    #[arg(long)]
    include_original: bool,
    #[arg(long, value_parser = ["mean", "sum"])]
    loss_reduction: Option<String>,
    #[arg(long)]
    max_samples: Option<usize>,
    #[arg(long, value_parser = ["mean", "sum"])]
    gin_aggregation: Option<String>,
    #[arg(long)]
    standardize: bool,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl TrainArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = if self.compact {
            TrainConfig::compact()
        } else {
            TrainConfig::default()
        };
        if let Some(path) = &self.config {
            c.apply_kv_text(&read_text(path)?)?;
        }
        if let Some(k) = self.k {
            c.truncate_bandwidths(k)?;
        }
        set(&mut c.epochs, self.epochs);
        set(&mut c.d_star, self.d_star);
        set(&mut c.learning_rate, self.lr);
        set(&mut c.weight_decay, self.wd);
        set(&mut c.seed, self.seed);
        set(&mut c.subsample_copies, self.subsample_copies);
        set(&mut c.subsample_ratio, self.subsample_ratio);
        set(&mut c.max_samples, self.max_samples);
        c.include_original |= self.include_original;
        c.standardize |= self.standardize;
        if let Some(r) = &self.loss_reduction {
            c.loss_reduction = if r == "sum" { Reduction::Sum } else { Reduction::Mean };
        }
        if let Some(a) = &self.gin_aggregation {
            c.set("gin_aggregation", a)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn set<V>(slot: &mut V, value: Option<V>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn train(corpus_dir: &Path, out: &Path, args: &TrainArgs) -> Result<()> {
    let config = args.resolve()?;
    let entries = corpus_entries(corpus_dir)?;
    let sizes = corpus_file_sizes(corpus_dir, &entries)?;
    let corpus = load_corpus::<f64>(corpus_dir, config.seed)?;
    eprintln!(
        "training on {} datasets, {} parameters",
        corpus.len(),
        uniod::model::init_params::<f64>(&config, config.seed)?.network.parameter_count()
    );
    let (params, report) = fit_with_progress(&corpus, &config, &mut |epoch, loss| {
        println!("epoch {epoch} mean_loss {loss:.6}");
    })?;
    save_checkpoint(&params, &config, &sizes, corpus_fingerprint(&sizes), out)?;
    let report_path = with_suffix(out, ".report.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::InvalidArgument(format!("report: {e}")))?;
    fs::write(&report_path, json).map_err(|e| Error::io(&report_path, e))?;
    eprintln!(
        "wrote {} (graphs {:.1}s, optimization {:.1}s)",
        out.display(),
        report.graph_seconds,
        report.optimize_seconds
    );
    Ok(())
}

fn score_command(
    model: &Path,
    data: &Path,
    out: &Path,
    label_column: Option<&str>,
    config_path: Option<&Path>,
    corpus: Option<&Path>,
) -> Result<()> {
    let Checkpoint { params, mut config, corpus_fingerprint: recorded, .. } = load_checkpoint(model)?;
    if let Some(path) = config_path {
        config.apply_kv_text(&read_text(path)?)?;
        config.validate()?;
        if config.architecture_fingerprint() != params.config_fingerprint {
            return Err(Error::Checkpoint {
                path: model.display().to_string(),
                reason: format!("configuration {} does not match the model architecture", path.display()),
            });
        }
    }
    if let Some(dir) = corpus {
        let sizes = corpus_file_sizes(dir, &corpus_entries(dir)?)?;
        if corpus_fingerprint(&sizes) != recorded {
            eprintln!("warning: corpus {} differs from the one the model was trained on", dir.display());
        }
    }
    let ds: Dataset = load_dataset(data, label_column)?;
    let report = score(&ds, &params, &config)?;
    write_scores_csv(&report, out)?;
    if let (Some(roc), Some(pr)) = (report.auroc, report.auprc) {
        println!("auroc {roc:.6} auprc {pr:.6}");
    }
    Ok(())
}

fn bench(corpus_dir: &Path, test_dir: &Path, sweep: &str, out: &Path, seeds: u64, parallel: bool, args: &TrainArgs) -> Result<()> {
    let config = args.resolve()?;
    let sweep: Sweep = sweep.parse()?;
    let corpus = load_corpus::<f64>(corpus_dir, config.seed)?;
    let tests = corpus_entries(test_dir)?
        .iter()
        .map(|e| load_dataset(&test_dir.join(&e.file), Some(&e.label_column)))
        .collect::<Result<Vec<Dataset>>>()?;
    let seed_list: Vec<u64> = (0..seeds).map(|s| config.seed + s).collect();
    let summaries = run_sweep(&corpus, &tests, &config, sweep, &seed_list, parallel, &|label, r| {
        eprintln!("{} {label} seed {} auroc {:.4} auprc {:.4}", sweep.as_str(), r.seed, r.auroc, r.auprc);
    })?;
    for s in &summaries {
        println!("{} {} auroc {:.6} auprc {:.6}", sweep.as_str(), s.label, s.mean_auroc, s.mean_auprc);
    }
    write_bench_csv(&summaries, out)?;
    write_gnuplot_dat(&summaries, &out.with_extension("dat"))
}

fn synth(out: &Path, historical: usize, held_out: usize, seed: u64) -> Result<()> {
    let (train, test) = benchmark_suite::<f64>(historical, held_out, seed)?;
    for (sub, sets) in [("historical", &train), ("test", &test)] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for ds in sets {
            write_dataset_csv(ds, &dir.join(format!("{}.csv", ds.id())))?;
        }
    }
    println!("wrote {} historical and {} held-out datasets to {}", train.len(), test.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { corpus, out, train: args } => train(&corpus, &out, &args),
        Command::Score { model, data, out, label_column, config, corpus } => score_command(
            &model,
            &data,
            &out,
            label_column.as_deref(),
            config.as_deref(),
            corpus.as_deref(),
        ),
        Command::Bench { corpus, test, sweep, out, seeds, parallel, train: args } => {
            bench(&corpus, &test, &sweep, &out, seeds, parallel, &args)
        }
        Command::Synth { out, historical, held_out, seed } => synth(&out, historical, held_out, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
