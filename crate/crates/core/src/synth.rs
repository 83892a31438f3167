//! Synthetic labeled tabular data: Gaussian-mixture inliers plus outliers
//! drawn uniformly from the bounding box of the inliers.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub outlier_ratio: f64,
    pub clusters: usize,
}

pub fn generate<T: Scalar>(spec: &SyntheticSpec, id: &str, seed: u64) -> Result<Dataset<T>> {
    if spec.n < 4 || spec.d == 0 || spec.clusters == 0 {
        return Err(Error::InvalidArgument(format!("degenerate synthetic spec {spec:?}")));
    }
    if !(spec.outlier_ratio > 0.0 && spec.outlier_ratio < 1.0) {
        return Err(Error::InvalidArgument("outlier ratio must be in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_out = ((spec.n as f64 * spec.outlier_ratio).round() as usize).clamp(1, spec.n - 2);
    let n_in = spec.n - n_out;

    let centers: Vec<Vec<f64>> = (0..spec.clusters)
        .map(|_| (0..spec.d).map(|_| rng.random_range(-4.0..4.0)).collect())
        .collect();
    let spreads: Vec<f64> = (0..spec.clusters).map(|_| rng.random_range(1.0..2.5)).collect();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut rows: Vec<(Vec<f64>, Label)> = Vec::with_capacity(spec.n);
    for i in 0..n_in {
        let c = i % spec.clusters;
        let x = (0..spec.d)
            .map(|j| centers[c][j] + spreads[c] * unit.sample(&mut rng))
            .collect();
        rows.push((x, Label::Inlier));
    }
    let mut lo = vec![f64::INFINITY; spec.d];
    let mut hi = vec![f64::NEG_INFINITY; spec.d];
    for (x, _) in &rows {
        for j in 0..spec.d {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    for _ in 0..n_out {
        let x = (0..spec.d)
            .map(|j| rng.random_range(lo[j]..hi[j]))
            .collect();
        rows.push((x, Label::Outlier));
    }
    rows.shuffle(&mut rng);

    let features = Mat::from_fn(spec.n, spec.d, |i, j| T::of(rows[i].0[j]));
    let labels = rows.iter().map(|r| r.1).collect();
    Dataset::new(id, features, Some(labels), format!("synthetic:{seed}"))
}

/// Draws a random spec within the given ranges.
pub fn random_spec(
    rng: &mut impl Rng,
    dims: &[usize],
    samples: (usize, usize),
    ratio: (f64, f64),
) -> SyntheticSpec {
    SyntheticSpec {
        n: rng.random_range(samples.0..=samples.1),
        d: *dims.choose(rng).expect("non-empty dimension list"),
        outlier_ratio: rng.random_range(ratio.0..ratio.1),
        clusters: rng.random_range(1..=3),
    }
}

/// Historical and held-out synthetic suites. Held-out datasets use
/// dimensions that no historical dataset has.
pub fn benchmark_suite<T: Scalar>(
    historical: usize,
    held_out: usize,
    seed: u64,
) -> Result<(Vec<Dataset<T>>, Vec<Dataset<T>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all_dims: Vec<usize> = (2..=20).collect();
    let mut train = Vec::with_capacity(historical);
    let mut used = Vec::new();
    for i in 0..historical {
        let spec = random_spec(&mut rng, &all_dims, (200, 500), (0.05, 0.20));
        used.push(spec.d);
        train.push(generate(&spec, &format!("hist{i:02}"), rng.random())?);
    }
    let mut fresh: Vec<usize> = all_dims.iter().copied().filter(|d| !used.contains(d)).collect();
    if fresh.is_empty() {
        fresh = (21..=30).collect();
    }
    let mut test = Vec::with_capacity(held_out);
    for i in 0..held_out {
        let spec = random_spec(&mut rng, &fresh, (200, 500), (0.03, 0.25));
        test.push(generate(&spec, &format!("test{i:02}"), rng.random())?);
    }
    Ok((train, test))
}
