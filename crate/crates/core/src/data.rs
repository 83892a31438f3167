//! Tabular datasets: CSV loading, validation, class-stratified subsampling
//! and construction of the training corpus.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hashing::stable_hash;
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Ground-truth class of a sample. Outliers are the second class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Inlier,
    Outlier,
}

impl Label {
    /// Column index of this class in the two-way prediction.
    pub fn class_index(self) -> usize {
        match self {
            Label::Inlier => 0,
            Label::Outlier => 1,
        }
    }

    pub fn is_outlier(self) -> bool {
        self == Label::Outlier
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Inlier => "0",
            Label::Outlier => "1",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    id: String,
    features: Mat<T>,
    labels: Option<Vec<Label>>,
    origin: String,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        id: impl Into<String>,
        features: Mat<T>,
        labels: Option<Vec<Label>>,
        origin: impl Into<String>,
    ) -> Result<Self> {
        let id = id.into();
        let (n, d) = features.shape();
        if n < 2 {
            return Err(Error::dataset(&id, format!("needs at least 2 rows, got {n}")));
        }
        if d < 1 {
            return Err(Error::dataset(&id, "needs at least one feature column"));
        }
        if !features.is_finite() {
            return Err(Error::dataset(&id, "non-finite feature value"));
        }
        let first = features.row(0);
        if (1..n).all(|i| features.row(i) == first) {
            return Err(Error::dataset(&id, "all rows are identical"));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::dataset(
                    &id,
                    format!("{} labels for {n} rows", l.len()),
                ));
            }
        }
        Ok(Dataset {
            id,
            features,
            labels,
            origin: origin.into(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn features(&self) -> &Mat<T> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    pub fn outlier_count(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|x| x.is_outlier()).count())
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Rows at `indices` (in that order) as a new dataset.
    pub fn select(&self, indices: &[usize], id: impl Into<String>) -> Result<Self> {
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Dataset::new(id, self.features.select_rows(indices), labels, self.origin.clone())
    }

    /// Per-feature z-score; constant columns become zero.
    pub fn standardized(&self) -> Result<Self> {
        let (n, d) = self.features.shape();
        let nf = T::usize(n);
        let mut out = self.features.clone();
        for j in 0..d {
            let col = self.features.column(j);
            let mean = col.iter().copied().sum::<T>() / nf;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let sd = var.sqrt();
            for (i, &v) in col.iter().enumerate() {
                let z = if sd > T::zero() { (v - mean) / sd } else { T::zero() };
                out.set(i, j, z);
            }
        }
        Dataset::new(self.id.clone(), out, self.labels.clone(), self.origin.clone())
    }

    fn require_labels(&self) -> Result<&[Label]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::dataset(&self.id, "labels required"))
    }
}

/// Labeled historical datasets plus the seed that drives corpus construction.
#[derive(Clone, Debug)]
pub struct Corpus<T> {
    datasets: Vec<Dataset<T>>,
    seed: u64,
}

impl<T: Scalar> Corpus<T> {
    pub fn new(datasets: Vec<Dataset<T>>, seed: u64) -> Result<Self> {
        for ds in &datasets {
            let labels = ds.require_labels()?;
            let outliers = labels.iter().filter(|l| l.is_outlier()).count();
            if outliers == 0 || outliers == labels.len() {
                return Err(Error::dataset(
                    ds.id(),
                    "needs at least one inlier and one outlier",
                ));
            }
        }
        Ok(Corpus { datasets, seed })
    }

    pub fn datasets(&self) -> &[Dataset<T>] {
        &self.datasets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    /// The first `m` datasets.
    pub fn prefix(&self, m: usize) -> Self {
        Corpus {
            datasets: self.datasets[..m.min(self.datasets.len())].to_vec(),
            seed: self.seed,
        }
    }
}

fn round_half_away(x: f64) -> usize {
    // f64::round rounds half away from zero
    x.round() as usize
}

/// Sample counts `(outliers, inliers)` kept by [`subsample`].
pub fn subsample_counts(n: usize, n_out: usize, ratio: f64) -> (usize, usize) {
    let m = round_half_away(ratio * n as f64);
    let m_out = round_half_away(ratio * n_out as f64).max(1);
    (m_out, m.saturating_sub(m_out))
}

/// Class-ratio-preserving random subsample without replacement. Selected rows
/// keep their original relative order.
pub fn subsample<T: Scalar>(ds: &Dataset<T>, ratio: f64, seed: u64) -> Result<Dataset<T>> {
    let idx = subsample_indices(ds, ratio, seed)?;
    ds.select(&idx, ds.id())
}

/// Row indices chosen by [`subsample`], ascending.
pub fn subsample_indices<T: Scalar>(ds: &Dataset<T>, ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "subsample ratio {ratio} outside (0, 1]"
        )));
    }
    let labels = ds.require_labels()?;
    let (outliers, inliers): (Vec<usize>, Vec<usize>) =
        (0..labels.len()).partition(|&i| labels[i].is_outlier());
    if outliers.is_empty() || inliers.is_empty() {
        return Err(Error::dataset(ds.id(), "subsampling needs both classes"));
    }
    let m = round_half_away(ratio * ds.n() as f64);
    let (m_out, _) = subsample_counts(ds.n(), outliers.len(), ratio);
    if m_out > m || m_out > outliers.len() || m - m_out > inliers.len() {
        return Err(Error::dataset(
            ds.id(),
            format!(
                "ratio {ratio} exhausts a class ({m_out} of {} outliers, {} of {} inliers)",
                outliers.len(),
                m.saturating_sub(m_out),
                inliers.len()
            ),
        ));
    }
    let m_in = m - m_out;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = index::sample(&mut rng, outliers.len(), m_out)
        .into_iter()
        .map(|k| outliers[k])
        .collect();
    chosen.extend(
        index::sample(&mut rng, inliers.len(), m_in)
            .into_iter()
            .map(|k| inliers[k]),
    );
    chosen.sort_unstable();
    Ok(chosen)
}

/// Limits a dataset to `max_samples` rows. Labeled data is subsampled with
/// class stratification; unlabeled data uniformly.
pub fn cap_samples<T: Scalar>(ds: &Dataset<T>, max_samples: usize, seed: u64) -> Result<Dataset<T>> {
    if ds.n() <= max_samples {
        return Ok(ds.clone());
    }
    if max_samples < 2 {
        return Err(Error::InvalidArgument("max_samples must be at least 2".into()));
    }
    let ratio = max_samples as f64 / ds.n() as f64;
    if ds.labels().is_some() && ds.outlier_count() > 0 && ds.outlier_count() < ds.n() {
        return subsample(ds, ratio, seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, ds.n(), max_samples).into_vec();
    chosen.sort_unstable();
    ds.select(&chosen, ds.id())
}

/// Seed for the `copy`-th subsample of dataset `id`.
pub fn derived_seed(base: u64, id: &str, copy: usize) -> u64 {
    base ^ stable_hash([id.as_bytes(), &(copy as u64).to_le_bytes()])
}

/// Expands every historical dataset into `copies` subsampled variants with ids
/// `{id}#sub{k}` (`k` from 1), optionally preceded by the original.
pub fn build_training_corpus<T: Scalar>(
    corpus: &Corpus<T>,
    copies: usize,
    ratio: f64,
    include_original: bool,
) -> Result<Corpus<T>> {
    if copies == 0 {
        return Err(Error::InvalidArgument("subsample copies must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(corpus.len() * (copies + include_original as usize));
    for ds in corpus.datasets() {
        if include_original {
            out.push(ds.clone());
        }
        for k in 1..=copies {
            let seed = derived_seed(corpus.seed(), ds.id(), k);
            out.push(subsample(ds, ratio, seed)?.with_id(format!("{}#sub{k}", ds.id())));
        }
    }
    Corpus::new(out, corpus.seed())
}

/// Reads a CSV with a header row. When `label_column` is given that column is
/// removed from the features and parsed as `0` (inlier) / `1` (outlier).
pub fn load_dataset<T: Scalar>(path: &Path, label_column: Option<&str>) -> Result<Dataset<T>> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = match label_column {
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::dataset(&shown, format!("label column {name:?} not found"))
        })?),
        None => None,
    };

    let d = headers.len() - label_idx.is_some() as usize;
    let mut values: Vec<T> = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = r + 1;
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if Some(c) == label_idx {
                labels.push(match cell {
                    "0" => Label::Inlier,
                    "1" => Label::Outlier,
                    other => {
                        return Err(Error::Parse {
                            path: shown,
                            row,
                            column: headers[c].clone(),
                            message: format!("label must be 0 or 1, got {other:?}"),
                        })
                    }
                });
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: shown.clone(),
                row,
                column: headers[c].clone(),
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: shown,
                    row,
                    column: headers[c].clone(),
                    message: format!("non-finite value {cell:?}"),
                });
            }
            values.push(T::of(v));
        }
        n += 1;
    }

    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| shown.clone());
    if n < 2 {
        return Err(Error::dataset(id, format!("needs at least 2 rows, got {n}")));
    }
    let features = Mat::new(n, d, values)?;
    Dataset::new(id, features, label_idx.map(|_| labels), shown)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => return Error::io(path, io),
            _ => unreachable!(),
        }
    }
    let row = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.display().to_string(),
        row,
        column: String::new(),
        message: e.to_string(),
    }
}

/// Name of the optional manifest inside a corpus directory. Each line is
/// `<file.csv> = <label column>`; `#` starts a comment.
pub const MANIFEST_FILE: &str = "manifest.cfg";
/// Label column assumed when a corpus has no manifest.
pub const DEFAULT_LABEL_COLUMN: &str = "label";

/// One CSV of a corpus directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusEntry {
    pub file: String,
    pub label_column: String,
}

/// Lists the datasets of a corpus directory: the manifest if present,
/// otherwise every `*.csv` sorted by name with the default label column.
pub fn corpus_entries(dir: &Path) -> Result<Vec<CorpusEntry>> {
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.exists() {
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let mut entries = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (file, label) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected `<file> = <label column>`",
                    manifest.display(),
                    line_no + 1
                ))
            })?;
            entries.push(CorpusEntry {
                file: file.trim().to_string(),
                label_column: label.trim().to_string(),
            });
        }
        return Ok(entries);
    }
    let mut files: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|f| f.ends_with(".csv"))
        .collect();
    files.sort();
    Ok(files
        .into_iter()
        .map(|file| CorpusEntry {
            file,
            label_column: DEFAULT_LABEL_COLUMN.to_string(),
        })
        .collect())
}

/// `(file name, byte length)` of each corpus file, sorted by name.
pub fn corpus_file_sizes(dir: &Path, entries: &[CorpusEntry]) -> Result<Vec<(String, u64)>> {
    let mut sizes = entries
        .iter()
        .map(|e| {
            let p = dir.join(&e.file);
            let len = fs::metadata(&p).map_err(|err| Error::io(&p, err))?.len();
            Ok((e.file.clone(), len))
        })
        .collect::<Result<Vec<_>>>()?;
    sizes.sort();
    Ok(sizes)
}

/// Hash of sorted `(file name, byte length)` pairs.
pub fn corpus_fingerprint(sizes: &[(String, u64)]) -> u64 {
    stable_hash(
        sizes
            .iter()
            .flat_map(|(f, l)| [f.as_bytes().to_vec(), l.to_le_bytes().to_vec()]),
    )
}

/// Loads every dataset of a corpus directory. All must be labeled.
pub fn load_corpus<T: Scalar>(dir: &Path, seed: u64) -> Result<Corpus<T>> {
    let entries = corpus_entries(dir)?;
    if entries.is_empty() {
        return Err(Error::dataset(dir.display().to_string(), "corpus has no datasets"));
    }
    let datasets = entries
        .iter()
        .map(|e| load_dataset(&dir.join(&e.file), Some(&e.label_column)))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(datasets, seed)
}

/// Writes `x0..x{d-1}` feature columns plus a `label` column when labeled.
pub fn write_dataset_csv<T: Scalar>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = (0..ds.d()).map(|j| format!("x{j}")).collect();
    if ds.labels().is_some() {
        header.push(DEFAULT_LABEL_COLUMN.to_string());
    }
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..ds.n() {
        let mut record: Vec<String> = ds.features().row(i).iter().map(|v| v.as_f64().to_string()).collect();
        if let Some(l) = ds.labels() {
            record.push((l[i].class_index()).to_string());
        }
        w.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// All `*.csv` files in a directory, sorted.
pub fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(corpus_entries(dir)?.into_iter().map(|e| dir.join(e.file)).collect())
}
