//! Flat `key = value` run configuration with `--key value` overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baseline::{CrfTrainConfig, FeatureTemplateSet};
use crate::corpus::HEADER_MARKER;
use crate::experiment::{Variant, ALL_VARIANTS};
use crate::pipeline::TrainConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("config file line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Templates {
    Full,
    Lexical,
}

impl Templates {
    pub fn set(self) -> FeatureTemplateSet {
        match self {
            Templates::Full => FeatureTemplateSet::full(),
            Templates::Lexical => FeatureTemplateSet::lexical(),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Templates::Full => "full",
            Templates::Lexical => "lexical",
        }
    }
}

/// Every tunable of one invocation. Empty paths mean "not given".
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train_file: String,
    pub dev_file: String,
    pub test_file: String,
    pub input: String,
    pub gold: String,
    pub pred: String,
    pub embeddings: String,
    pub clusters: String,
    pub model: String,
    pub train_nbest: String,
    pub dev_nbest: String,
    pub reranker_dir: String,
    pub output: String,
    pub out_dir: String,
    pub templates: Templates,
    pub folds: usize,
    pub crf_epochs: usize,
    pub crf_batch_size: usize,
    pub crf_learning_rate: f64,
    pub crf_l2: f64,
    pub train: TrainConfig,
    pub alpha: Option<f64>,
    pub variants: Vec<Variant>,
    pub bucket_width: usize,
    pub toy_sentences: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train_file: String::new(),
            dev_file: String::new(),
            test_file: String::new(),
            input: String::new(),
            gold: String::new(),
            pred: String::new(),
            embeddings: String::new(),
            clusters: String::new(),
            model: String::new(),
            train_nbest: String::new(),
            dev_nbest: String::new(),
            reranker_dir: String::new(),
            output: String::new(),
            out_dir: "out".into(),
            templates: Templates::Full,
            folds: 5,
            crf_epochs: CrfTrainConfig::default().epochs,
            crf_batch_size: CrfTrainConfig::default().batch_size,
            crf_learning_rate: CrfTrainConfig::default().learning_rate,
            crf_l2: CrfTrainConfig::default().l2,
            train: TrainConfig::default(),
            alpha: None,
            variants: ALL_VARIANTS.to_vec(),
            bucket_width: 10,
            toy_sentences: 2000,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into() })
}

fn parse_variants(key: &str, value: &str) -> Result<Vec<Variant>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| ALL_VARIANTS.iter().find(|v| v.name == name).copied().ok_or_else(|| ConfigError::BadValue { key: key.into(), value: name.into() }))
        .collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let r = &mut self.train.reranker;
        match key {
            "train" => self.train_file = v.into(),
            "dev" => self.dev_file = v.into(),
            "test" => self.test_file = v.into(),
            "input" => self.input = v.into(),
            "gold" => self.gold = v.into(),
            "pred" => self.pred = v.into(),
            "embeddings" => self.embeddings = v.into(),
            "clusters" => self.clusters = v.into(),
            "model" => self.model = v.into(),
            "train_nbest" => self.train_nbest = v.into(),
            "dev_nbest" => self.dev_nbest = v.into(),
            "reranker_dir" => self.reranker_dir = v.into(),
            "output" => self.output = v.into(),
            "out_dir" => self.out_dir = v.into(),
            "templates" => {
                self.templates = match v {
                    "full" => Templates::Full,
                    "lexical" => Templates::Lexical,
                    _ => return Err(ConfigError::BadValue { key: key.into(), value: v.into() }),
                }
            }
            "folds" => self.folds = parse(key, v)?,
            "crf_epochs" => self.crf_epochs = parse(key, v)?,
            "crf_batch_size" => self.crf_batch_size = parse(key, v)?,
            "crf_learning_rate" => self.crf_learning_rate = parse(key, v)?,
            "crf_l2" => self.crf_l2 = parse(key, v)?,
            "n_best" => self.train.n_best = parse(key, v)?,
            "word_dim" => r.word_dim = parse(key, v)?,
            "char_dim" => r.char_dim = parse(key, v)?,
            "lstm_hidden" => r.lstm_hidden = parse(key, v)?,
            "dropout" => r.dropout = parse(key, v)?,
            "char_cnn_filters" => r.char_cnn_filters = parse(key, v)?,
            "word_cnn_filters" => r.word_cnn_filters = parse(key, v)?,
            "char_cnn_window" => r.char_cnn_window = parse(key, v)?,
            "word_cnn_window" => r.word_cnn_window = parse(key, v)?,
            "peepholes" => r.peepholes = parse(key, v)?,
            "use_lstm" => r.use_lstm = parse(key, v)?,
            "use_word_cnn" => r.use_word_cnn = parse(key, v)?,
            "use_char_cnn" => r.use_char_cnn = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "lambda" => self.train.lambda = parse(key, v)?,
            "adam_beta1" => self.train.adam_beta1 = parse(key, v)?,
            "adam_beta2" => self.train.adam_beta2 = parse(key, v)?,
            "adam_eps" => self.train.adam_eps = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "seed" => self.train.seed = parse(key, v)?,
            "freeze_embeddings" => self.train.freeze_embeddings = parse(key, v)?,
            "min_word_count" => self.train.min_word_count = parse(key, v)?,
            "max_char_len" => self.train.max_char_len = parse(key, v)?,
            "alpha" => {
                self.alpha = if v.is_empty() {
                    None
                } else {
                    let a: f64 = parse(key, v)?;
                    if !(0.0..=1.0).contains(&a) {
                        return Err(ConfigError::Invalid { key: key.into(), message: format!("{a} is outside [0, 1]") });
                    }
                    Some(a)
                }
            }
            "variants" => self.variants = parse_variants(key, v)?,
            "bucket_width" => self.bucket_width = parse(key, v)?,
            "toy_sentences" => self.toy_sentences = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// All keys with their resolved values, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let r = &self.train.reranker;
        let t = &self.train;
        vec![
            ("train", self.train_file.clone()),
            ("dev", self.dev_file.clone()),
            ("test", self.test_file.clone()),
            ("input", self.input.clone()),
            ("gold", self.gold.clone()),
            ("pred", self.pred.clone()),
            ("embeddings", self.embeddings.clone()),
            ("clusters", self.clusters.clone()),
            ("model", self.model.clone()),
            ("train_nbest", self.train_nbest.clone()),
            ("dev_nbest", self.dev_nbest.clone()),
            ("reranker_dir", self.reranker_dir.clone()),
            ("output", self.output.clone()),
            ("out_dir", self.out_dir.clone()),
            ("templates", self.templates.as_str().into()),
            ("folds", self.folds.to_string()),
            ("crf_epochs", self.crf_epochs.to_string()),
            ("crf_batch_size", self.crf_batch_size.to_string()),
            ("crf_learning_rate", self.crf_learning_rate.to_string()),
            ("crf_l2", self.crf_l2.to_string()),
            ("n_best", t.n_best.to_string()),
            ("word_dim", r.word_dim.to_string()),
            ("char_dim", r.char_dim.to_string()),
            ("lstm_hidden", r.lstm_hidden.to_string()),
            ("dropout", r.dropout.to_string()),
            ("char_cnn_filters", r.char_cnn_filters.to_string()),
            ("word_cnn_filters", r.word_cnn_filters.to_string()),
            ("char_cnn_window", r.char_cnn_window.to_string()),
            ("word_cnn_window", r.word_cnn_window.to_string()),
            ("peepholes", r.peepholes.to_string()),
            ("use_lstm", r.use_lstm.to_string()),
            ("use_word_cnn", r.use_word_cnn.to_string()),
            ("use_char_cnn", r.use_char_cnn.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("lambda", t.lambda.to_string()),
            ("adam_beta1", t.adam_beta1.to_string()),
            ("adam_beta2", t.adam_beta2.to_string()),
            ("adam_eps", t.adam_eps.to_string()),
            ("epochs", t.epochs.to_string()),
            ("seed", t.seed.to_string()),
            ("freeze_embeddings", t.freeze_embeddings.to_string()),
            ("min_word_count", t.min_word_count.to_string()),
            ("max_char_len", t.max_char_len.to_string()),
            ("alpha", self.alpha.map(|a| a.to_string()).unwrap_or_default()),
            ("variants", self.variants.iter().map(|v| v.name).collect::<Vec<_>>().join(",")),
            ("bucket_width", self.bucket_width.to_string()),
            ("toy_sentences", self.toy_sentences.to_string()),
        ]
    }

    /// Applies a `key = value` file; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (index, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: index + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, message: &str| Err(ConfigError::Invalid { key: key.into(), message: message.into() });
        if self.folds < 2 {
            return invalid("folds", "must be at least 2");
        }
        if self.train.n_best == 0 {
            return invalid("n_best", "must be positive");
        }
        if self.train.batch_size == 0 {
            return invalid("batch_size", "must be positive");
        }
        if self.crf_batch_size == 0 {
            return invalid("crf_batch_size", "must be positive");
        }
        if self.bucket_width == 0 {
            return invalid("bucket_width", "must be positive");
        }
        for (key, value) in [("learning_rate", self.train.learning_rate), ("adam_eps", self.train.adam_eps), ("crf_learning_rate", self.crf_learning_rate)] {
            if !(value > 0.0 && value.is_finite()) {
                return invalid(key, "must be positive");
            }
        }
        for (key, value) in [("lambda", self.train.lambda), ("crf_l2", self.crf_l2)] {
            if !(value >= 0.0 && value.is_finite()) {
                return invalid(key, "must be non-negative");
            }
        }
        for (key, value) in [("adam_beta1", self.train.adam_beta1), ("adam_beta2", self.train.adam_beta2)] {
            if !(0.0..1.0).contains(&value) {
                return invalid(key, "must lie in [0, 1)");
            }
        }
        self.train.reranker.validate().map_err(|e| ConfigError::Invalid { key: "reranker".into(), message: e.to_string() })
    }

    pub fn crf(&self) -> CrfTrainConfig {
        CrfTrainConfig {
            epochs: self.crf_epochs,
            batch_size: self.crf_batch_size,
            learning_rate: self.crf_learning_rate,
            l2: self.crf_l2,
            seed: self.train.seed,
        }
    }

    /// First 16 hex digits of the SHA-256 of the resolved config text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// `#nerrank <version> config=<hash>`
    pub fn header(&self) -> String {
        format!("{HEADER_MARKER} {} config={}", env!("CARGO_PKG_VERSION"), self.hash())
    }

    pub fn out_path(&self, default_name: &str) -> PathBuf {
        if self.output.is_empty() {
            Path::new(&self.out_dir).join(default_name)
        } else {
            PathBuf::from(&self.output)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reranker_hyperparameters() {
        let c = RunConfig::default();
        let t = &c.train;
        assert_eq!((t.n_best, t.reranker.word_dim, t.reranker.char_dim, t.reranker.lstm_hidden), (10, 50, 50, 100));
        assert_eq!((t.reranker.char_cnn_filters, t.reranker.word_cnn_filters), (50, 100));
        assert_eq!((t.reranker.char_cnn_window, t.reranker.word_cnn_window), (3, 3));
        assert_eq!((t.learning_rate, t.batch_size, t.lambda), (0.001, 128, 0.001));
        assert_eq!((t.adam_beta1, t.adam_beta2, t.adam_eps), (0.1, 0.999, 1e-8));
        assert_eq!(t.reranker.dropout, 0.2);
        assert!(!t.reranker.peepholes);
        assert_eq!(c.folds, 5);
        c.validate().unwrap();
    }

    #[test]
    fn every_entry_roundtrips() {
        let c = RunConfig { alpha: Some(0.25), train_file: "a.conll".into(), ..Default::default() };
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
        assert_eq!(c.hash(), d.hash());
    }

    #[test]
    fn unknown_and_bad_keys() {
        let mut c = RunConfig::default();
        assert_eq!(c.set("nope", "1"), Err(ConfigError::UnknownKey("nope".into())));
        assert!(matches!(c.set("epochs", "x"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(c.set("alpha", "1.5"), Err(ConfigError::Invalid { .. })));
        assert!(matches!(c.set("variants", "LSTM,huge"), Err(ConfigError::BadValue { .. })));
        assert_eq!(c.apply_text("# c\nepochs 3\n"), Err(ConfigError::Syntax { line: 2 }));
    }

    #[test]
    fn hash_tracks_values() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.set("lambda", "0.01").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        assert!(a.header().starts_with("#nerrank 0.1.0 config="));
    }

    #[test]
    fn ablation_flags_and_variants() {
        let mut c = RunConfig::default();
        c.apply_text("use_word_cnn = false\nuse_char_cnn = false\nvariants = LSTM, full\n").unwrap();
        assert!(c.train.reranker.use_lstm && !c.train.reranker.use_word_cnn && !c.train.reranker.use_char_cnn);
        assert_eq!(c.variants.iter().map(|v| v.name).collect::<Vec<_>>(), ["LSTM", "full"]);
    }
}
