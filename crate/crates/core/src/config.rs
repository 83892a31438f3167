//! Hyperparameters and the flat `key = value` text format they are stored in.

use serde::{Deserialize, Serialize};

use crate::autodiff::Reduction;
use crate::error::{Error, Result};
use crate::hashing::stable_hash;
use crate::model::Aggregation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Squared bandwidth multipliers; K is the length.
    pub betas_squared: Vec<f64>,
    /// Unified spectral feature width, also the transformer model width.
    pub d_star: usize,
    pub gin_widths: Vec<usize>,
    pub gin_aggregation: Aggregation,
    pub gt_layers: usize,
    pub gt_ffn_width: usize,
    pub gt_heads: usize,
    /// Widths of the classifier's affine layers; must end in 2.
    pub head_widths: Vec<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub subsample_copies: usize,
    pub subsample_ratio: f64,
    pub include_original: bool,
    pub loss_reduction: Reduction,
    pub max_samples: usize,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            betas_squared: vec![0.3, 0.5, 1.0, 3.0, 5.0],
            d_star: 256,
            gin_widths: vec![1024, 1024, 1024, 64],
            gin_aggregation: Aggregation::Mean,
            gt_layers: 6,
            gt_ffn_width: 1024,
            gt_heads: 4,
            head_widths: vec![128, 64, 2],
            learning_rate: 5e-5,
            weight_decay: 1e-6,
            epochs: 50,
            subsample_copies: 5,
            subsample_ratio: 0.6,
            include_original: false,
            loss_reduction: Reduction::Mean,
            max_samples: 3000,
            standardize: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Same pipeline with narrow layers, for CPU-scale experiments.
    pub fn compact() -> Self {
        TrainConfig {
            d_star: 32,
            gin_widths: vec![64, 64, 32],
            gt_layers: 2,
            gt_ffn_width: 64,
            gt_heads: 4,
            head_widths: vec![64, 32, 2],
            learning_rate: 1e-3,
            epochs: 20,
            max_samples: 1000,
            ..TrainConfig::default()
        }
    }

    pub fn k(&self) -> usize {
        self.betas_squared.len()
    }

    pub fn gin_out_width(&self) -> usize {
        *self.gin_widths.last().unwrap_or(&0)
    }

    /// Width of the concatenated embedding fed to the classifier.
    pub fn embedding_width(&self) -> usize {
        self.k() * (self.gin_out_width() + self.d_star)
    }

    /// Keeps only the first `k` bandwidths.
    pub fn truncate_bandwidths(&mut self, k: usize) -> Result<()> {
        if k == 0 || k > self.betas_squared.len() {
            return Err(Error::Config(format!(
                "k = {k} outside 1..={}",
                self.betas_squared.len()
            )));
        }
        self.betas_squared.truncate(k);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.betas_squared.is_empty() {
            return fail("betas_squared must not be empty".into());
        }
        if self.betas_squared.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return fail("betas_squared entries must be positive".into());
        }
        if self.d_star < 2 {
            return fail("d_star must be at least 2".into());
        }
        if self.gin_widths.is_empty() || self.gin_widths.contains(&0) {
            return fail("gin_widths must be non-empty and positive".into());
        }
        if self.gt_heads == 0 || !self.d_star.is_multiple_of(self.gt_heads) {
            return fail(format!(
                "gt_heads = {} must divide d_star = {}",
                self.gt_heads, self.d_star
            ));
        }
        if self.gt_ffn_width == 0 {
            return fail("gt_ffn_width must be positive".into());
        }
        if self.head_widths.last() != Some(&2) || self.head_widths.contains(&0) {
            return fail("head_widths must be positive and end in 2".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail("learning_rate must be positive".into());
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return fail("weight_decay must be non-negative".into());
        }
        if !(self.subsample_ratio > 0.0 && self.subsample_ratio <= 1.0) {
            return fail("subsample_ratio must lie in (0, 1]".into());
        }
        if self.subsample_copies == 0 {
            return fail("subsample_copies must be at least 1".into());
        }
        if self.max_samples < 2 {
            return fail("max_samples must be at least 2".into());
        }
        Ok(())
    }

    /// Digest of everything that determines parameter shapes and the graph
    /// pipeline that produces the model's inputs.
    pub fn architecture_fingerprint(&self) -> u64 {
        let text = format!(
            "betas={:?};d_star={};gin={:?};agg={};gt_layers={};ffn={};heads={};head={:?};std={}",
            self.betas_squared,
            self.d_star,
            self.gin_widths,
            self.gin_aggregation.as_str(),
            self.gt_layers,
            self.gt_ffn_width,
            self.gt_heads,
            self.head_widths,
            self.standardize
        );
        stable_hash([text])
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        c.apply_kv_text(text)?;
        Ok(c)
    }

    /// Sets one field by its key name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: std::str::FromStr>(key: &str, v: &str) -> Result<V> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        fn list<V: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<V>> {
            v.split(',').map(|p| num(key, p.trim())).collect()
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
            }
        }
        match key {
            "betas_squared" => self.betas_squared = list(key, value)?,
            "k" => self.truncate_bandwidths(num(key, value)?)?,
            "d_star" => self.d_star = num(key, value)?,
            "gin_widths" => self.gin_widths = list(key, value)?,
            "gin_aggregation" => {
                self.gin_aggregation = match value {
                    "sum" => Aggregation::Sum,
                    "mean" => Aggregation::Mean,
                    _ => return Err(Error::Config(format!("gin_aggregation: {value:?}"))),
                }
            }
            "gt_layers" => self.gt_layers = num(key, value)?,
            "gt_ffn_width" => self.gt_ffn_width = num(key, value)?,
            "gt_heads" => self.gt_heads = num(key, value)?,
            "head_widths" => self.head_widths = list(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = num(key, value)?,
            "weight_decay" | "wd" => self.weight_decay = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "subsample_copies" => self.subsample_copies = num(key, value)?,
            "subsample_ratio" => self.subsample_ratio = num(key, value)?,
            "include_original" => self.include_original = flag(key, value)?,
            "loss_reduction" => {
                self.loss_reduction = match value {
                    "mean" => Reduction::Mean,
                    "sum" => Reduction::Sum,
                    _ => return Err(Error::Config(format!("loss_reduction: {value:?}"))),
                }
            }
            "max_samples" => self.max_samples = num(key, value)?,
            "standardize" => self.standardize = flag(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn to_kv_text(&self) -> String {
        fn join<V: ToString>(v: &[V]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        let reduction = match self.loss_reduction {
            Reduction::Mean => "mean",
            Reduction::Sum => "sum",
        };
        [
            format!("betas_squared = {}", join(&self.betas_squared)),
            format!("d_star = {}", self.d_star),
            format!("gin_widths = {}", join(&self.gin_widths)),
            format!("gin_aggregation = {}", self.gin_aggregation.as_str()),
            format!("gt_layers = {}", self.gt_layers),
            format!("gt_ffn_width = {}", self.gt_ffn_width),
            format!("gt_heads = {}", self.gt_heads),
            format!("head_widths = {}", join(&self.head_widths)),
            format!("learning_rate = {}", self.learning_rate),
            format!("weight_decay = {}", self.weight_decay),
            format!("epochs = {}", self.epochs),
            format!("subsample_copies = {}", self.subsample_copies),
            format!("subsample_ratio = {}", self.subsample_ratio),
            format!("include_original = {}", self.include_original),
            format!("loss_reduction = {reduction}"),
            format!("max_samples = {}", self.max_samples),
            format!("standardize = {}", self.standardize),
            format!("seed = {}", self.seed),
        ]
        .join("\n")
            + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_published_setup() {
        let c = TrainConfig::default();
        assert_eq!(c.k(), 5);
        assert_eq!(c.betas_squared, vec![0.3, 0.5, 1.0, 3.0, 5.0]);
        assert_eq!(c.d_star, 256);
        assert_eq!(c.gin_widths, vec![1024, 1024, 1024, 64]);
        assert_eq!((c.gt_layers, c.gt_ffn_width), (6, 1024));
        assert_eq!(c.head_widths, vec![128, 64, 2]);
        assert_eq!((c.learning_rate, c.weight_decay, c.epochs), (5e-5, 1e-6, 50));
        assert_eq!((c.subsample_copies, c.subsample_ratio), (5, 0.6));
        assert_eq!(c.embedding_width(), 1600);
        c.validate().unwrap();
        TrainConfig::compact().validate().unwrap();
    }

    #[test]
    fn kv_overrides_and_errors() {
        let c = TrainConfig::from_kv_text("# comment\nepochs = 3\nk = 2\nlr=0.01\nloss_reduction = sum\n")
            .unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.betas_squared, vec![0.3, 0.5]);
        assert_eq!(c.learning_rate, 0.01);
        assert_eq!(c.loss_reduction, Reduction::Sum);
        assert!(TrainConfig::from_kv_text("nonsense = 1").is_err());
        assert!(TrainConfig::from_kv_text("epochs = many").is_err());
        assert!(TrainConfig::from_kv_text("no equals sign").is_err());
    }

    #[test]
    fn validation_catches_bad_heads() {
        let c = TrainConfig {
            gt_heads: 3,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn kv_text_round_trips(epochs in 0usize..500, lr in 1e-6f64..1.0, seed in any::<u64>(),
                               include in any::<bool>(), d_star in 2usize..64) {
            let c = TrainConfig { epochs, learning_rate: lr, seed, include_original: include,
                                  d_star, ..TrainConfig::compact() };
            let back = TrainConfig::from_kv_text(&c.to_kv_text()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
