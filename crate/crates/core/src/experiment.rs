//! End-to-end baseline-versus-reranker comparison with ablation rows.

use std::time::Instant;

use log::info;

use crate::baseline::{build_nbest_corpora, Clusters, CrfTrainConfig, FeatureTemplateSet, NBestCorpus};
use crate::corpus::{Dataset, LabelSequence};
use crate::eval::{chunk_prf, oracle, ssa, OracleReport};
use crate::pipeline::{make_examples, rerank, train, PipelineError, TrainConfig};
use crate::reranker::Embeddings;

/// Which encoders a reranker row enables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub name: &'static str,
    pub use_lstm: bool,
    pub use_word_cnn: bool,
    pub use_char_cnn: bool,
}

pub const LSTM_ONLY: Variant = Variant { name: "LSTM", use_lstm: true, use_word_cnn: false, use_char_cnn: false };
pub const LSTM_CNN: Variant = Variant { name: "+CNN", use_lstm: true, use_word_cnn: true, use_char_cnn: false };
pub const LSTM_CHAR: Variant = Variant { name: "+char", use_lstm: true, use_word_cnn: false, use_char_cnn: true };
pub const FULL: Variant = Variant { name: "full", use_lstm: true, use_word_cnn: true, use_char_cnn: true };
pub const ALL_VARIANTS: [Variant; 4] = [LSTM_ONLY, LSTM_CNN, LSTM_CHAR, FULL];

impl Variant {
    pub fn apply(&self, config: &TrainConfig) -> TrainConfig {
        let mut c = config.clone();
        c.reranker.use_lstm = self.use_lstm;
        c.reranker.use_word_cnn = self.use_word_cnn;
        c.reranker.use_char_cnn = self.use_char_cnn;
        c
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub templates: FeatureTemplateSet,
    pub crf: CrfTrainConfig,
    pub folds: usize,
    pub train: TrainConfig,
    pub variants: Vec<Variant>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowResult {
    pub name: String,
    pub f1: f64,
    pub ssa: f64,
    pub alpha: f64,
    pub best_epoch: usize,
    pub dev_f1: f64,
    pub predictions: Vec<LabelSequence>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub baseline: RowResult,
    pub rows: Vec<RowResult>,
    pub test_oracle: OracleReport,
    pub test_nbest: NBestCorpus,
}

impl ExperimentReport {
    pub fn row(&self, name: &str) -> Option<&RowResult> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// `name f1 ssa alpha` lines, baseline first.
    pub fn table(&self) -> String {
        let mut out = format!("{:<10} {:>7} {:>7} {:>6}\n", "model", "F1", "SSA", "alpha");
        for r in std::iter::once(&self.baseline).chain(&self.rows) {
            out.push_str(&format!("{:<10} {:>7.2} {:>7.2} {:>6.3}\n", r.name, 100.0 * r.f1, 100.0 * r.ssa, r.alpha));
        }
        out
    }
}

/// Builds jackknifed n-best lists, then trains and evaluates one reranker
/// per variant on the same lists.
pub fn run_experiment(
    train_set: &Dataset,
    dev_set: &Dataset,
    test_set: &Dataset,
    config: &ExperimentConfig,
    clusters: Option<&Clusters>,
    pretrained: Option<&Embeddings>,
) -> Result<ExperimentReport, PipelineError> {
    let start = Instant::now();
    let corpora = build_nbest_corpora(train_set, &[dev_set, test_set], config.folds, config.train.n_best, &config.templates, clusters, &config.crf)?;
    let (dev, test) = (&corpora.heldout[0], &corpora.heldout[1]);
    let gold = test.gold()?;
    let one_best = test.one_best();
    let baseline = RowResult {
        name: "baseline".into(),
        f1: chunk_prf(&gold, &one_best, None)?.f1(),
        ssa: ssa(&one_best, &gold)?,
        alpha: 0.0,
        best_epoch: 0,
        dev_f1: chunk_prf(&dev.gold()?, &dev.one_best(), None)?.f1(),
        predictions: one_best,
        seconds: start.elapsed().as_secs_f64(),
    };
    info!("baseline test F1 {:.4} ({:.1}s)", baseline.f1, baseline.seconds);
    let examples = make_examples(&corpora.train)?;
    let mut rows = Vec::new();
    for variant in &config.variants {
        let t = Instant::now();
        let outcome = train(&examples, dev, &variant.apply(&config.train), pretrained)?;
        let predictions = rerank(&outcome.bundle, test)?;
        let row = RowResult {
            name: variant.name.to_string(),
            f1: chunk_prf(&gold, &predictions, None)?.f1(),
            ssa: ssa(&predictions, &gold)?,
            alpha: outcome.bundle.alpha,
            best_epoch: outcome.best_epoch,
            dev_f1: outcome.history[outcome.best_epoch].dev_f1,
            predictions,
            seconds: t.elapsed().as_secs_f64(),
        };
        info!("{} test F1 {:.4} alpha {} ({:.1}s)", row.name, row.f1, row.alpha, row.seconds);
        rows.push(row);
    }
    Ok(ExperimentReport { baseline, rows, test_oracle: oracle(test, config.train.n_best)?, test_nbest: test.clone() })
}
