//! Discrete linear-chain CRF baseline: feature extraction, training, exact
//! k-best decoding and jackknifed n-best generation.

mod features;
mod lattice;
mod model;
mod nbest;

use log::info;
use thiserror::Error;

pub use features::{connect_class, feature_strings, featurize, is_capitalized, shape, Clusters, FeatureTemplateSet, FeatureVocab};
pub use lattice::{log_sum_exp, path_order, Marginals, Potentials, ScoredPath};
pub use model::{crf_train, CrfModel, CrfTrainConfig, TrainLog, N_TAGS};
pub use nbest::{read_nbest, write_nbest, Candidate, CandidateSet, NBestCorpus};

use crate::corpus::Dataset;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("need at least {folds} sentences for {folds}-fold jackknifing, got {len}")]
    TooFewSentences { folds: usize, len: usize },
    #[error("jackknifing needs at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("non-finite training loss {value} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, value: f64 },
    #[error("sentence has {tokens} tokens but {labels} labels")]
    LengthMismatch { tokens: usize, labels: usize },
    #[error("sentence {sentence}: {reason}")]
    InvalidCandidates { sentence: usize, reason: String },
    #[error("sentence {0} has no gold labels")]
    MissingGold(usize),
    #[error("n-best format, line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Splits `train` into `folds` contiguous blocks in load order (sizes
/// differ by at most one, larger blocks first) and returns, per fold,
/// `(rest, block)`.
pub fn jackknife(train: &Dataset, folds: usize) -> Result<Vec<(Dataset, Dataset)>, BaselineError> {
    if folds < 2 {
        return Err(BaselineError::TooFewFolds(folds));
    }
    if train.len() < folds {
        return Err(BaselineError::TooFewSentences { folds, len: train.len() });
    }
    let (base, extra) = (train.len() / folds, train.len() % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for fold in 0..folds {
        let size = base + usize::from(fold < extra);
        let end = start + size;
        let heldout = train.select(start..end);
        let rest = train.select((0..start).chain(end..train.len()));
        out.push((rest, heldout));
        start = end;
    }
    Ok(out)
}

/// Decodes every sentence of `data` into a `k`-best list, attaching gold.
pub fn decode_corpus(model: &CrfModel, data: &Dataset, k: usize) -> NBestCorpus {
    let mut corpus = NBestCorpus::default();
    for (sentence, gold) in data.iter() {
        let mut set = model.kbest_decode(sentence, k);
        set.gold = Some(gold.clone());
        corpus.push(sentence.clone(), set);
    }
    corpus
}

/// Which model decoded each jackknifed sentence, for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeOutput {
    pub corpus: NBestCorpus,
    /// Per fold, the ids of the sentences it decoded.
    pub folds: Vec<Vec<usize>>,
}

/// N-best lists for the training split, each block decoded by a model
/// trained on the other blocks.
pub fn jackknife_nbest(
    train: &Dataset,
    folds: usize,
    k: usize,
    templates: &FeatureTemplateSet,
    clusters: Option<&Clusters>,
    config: &CrfTrainConfig,
) -> Result<JackknifeOutput, BaselineError> {
    let mut out = JackknifeOutput { corpus: NBestCorpus::default(), folds: Vec::new() };
    for (fold, (rest, heldout)) in jackknife(train, folds)?.into_iter().enumerate() {
        info!("jackknife fold {}/{folds}: training on {} sentences", fold + 1, rest.len());
        let (model, _) = crf_train(&rest, templates, clusters.cloned(), config)?;
        let decoded = decode_corpus(&model, &heldout, k);
        out.folds.push(decoded.sets.iter().map(|s| s.sentence_id).collect());
        out.corpus.sentences.extend(decoded.sentences);
        out.corpus.sets.extend(decoded.sets);
    }
    Ok(out)
}

/// Reranker training material: jackknifed n-best lists for `train` and
/// lists for each held-out split decoded by a model trained on all of
/// `train`.
#[derive(Debug, Clone)]
pub struct NBestCorpora {
    pub train: NBestCorpus,
    pub heldout: Vec<NBestCorpus>,
    pub full_model: CrfModel,
}

pub fn build_nbest_corpora(
    train: &Dataset,
    heldout: &[&Dataset],
    folds: usize,
    k: usize,
    templates: &FeatureTemplateSet,
    clusters: Option<&Clusters>,
    config: &CrfTrainConfig,
) -> Result<NBestCorpora, BaselineError> {
    let jack = jackknife_nbest(train, folds, k, templates, clusters, config)?;
    let (full_model, _) = crf_train(train, templates, clusters.cloned(), config)?;
    let heldout = heldout.iter().map(|d| decode_corpus(&full_model, d, k)).collect();
    Ok(NBestCorpora { train: jack.corpus, heldout, full_model })
}
