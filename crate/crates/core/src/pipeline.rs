//! Reranker training data, the MSE + L2 objective, the training loop with
//! per-epoch model selection, mixture decoding and the α grid search.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baseline::{BaselineError, NBestCorpus};
use crate::collapse::{collapse_lenient, CollapsedSequence};
use crate::corpus::{tag_accuracy, CorpusError, LabelSequence};
use crate::eval::{chunk_prf, EvalError};
use crate::numerics::{AdamConfig, AdamState, Mode, Tensor, Var};
use crate::reranker::{Embeddings, Forward, Reranker, RerankerConfig, RerankerError, Vocab};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sentence {0} has no gold labels")]
    MissingGold(usize),
    #[error("sentence {0} has no candidates")]
    EmptyCandidates(usize),
    #[error("{0} is empty")]
    EmptyData(&'static str),
    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, value: f64 },
    #[error("bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Reranker(#[from] RerankerError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One candidate of one sentence, collapsed, with its regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankExample {
    pub collapsed: CollapsedSequence,
    /// Tag accuracy of the candidate against gold.
    pub target: f64,
    /// Baseline probability of the candidate.
    pub prob: f64,
    /// Position of the sentence in its n-best corpus.
    pub sentence_index: usize,
    pub candidate: usize,
}

/// One example per candidate, in corpus order.
pub fn make_examples(nbest: &NBestCorpus) -> Result<Vec<RerankExample>, PipelineError> {
    let mut out = Vec::new();
    for (sentence_index, (sentence, set)) in nbest.iter().enumerate() {
        let gold = set.gold.as_ref().ok_or(PipelineError::MissingGold(set.sentence_id))?;
        for (candidate, cand) in set.candidates.iter().enumerate() {
            out.push(RerankExample {
                collapsed: collapse_lenient(sentence, &cand.labels, candidate)?,
                target: tag_accuracy(gold, &cand.labels)?,
                prob: cand.prob,
                sentence_index,
                candidate,
            });
        }
    }
    Ok(out)
}

/// Reranker training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_best: usize,
    pub reranker: RerankerConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub seed: u64,
    pub freeze_embeddings: bool,
    /// Training words rarer than this map to `<unk>`.
    pub min_word_count: usize,
    /// Upper bound on the char-CNN pad length.
    pub max_char_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_best: 10,
            reranker: RerankerConfig::default(),
            learning_rate: 0.001,
            batch_size: 128,
            lambda: 0.001,
            adam_beta1: 0.1,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 10,
            seed: 1,
            freeze_embeddings: false,
            min_word_count: 1,
            max_char_len: 32,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }
}

/// `(1/B) Σ (y - s)² + (λ/2) ‖Θ‖²` over a batch, recorded on `fwd`. The
/// regularizer covers every trainable parameter.
pub fn loss(fwd: &mut Forward, batch: &[&RerankExample], lambda: f64) -> Result<Var, PipelineError> {
    if batch.is_empty() {
        return Err(PipelineError::EmptyData("batch"));
    }
    let mut sq = Vec::with_capacity(batch.len());
    for ex in batch {
        let s = fwd.score(&ex.collapsed)?;
        let y = fwd.graph.input(Tensor::vector(vec![ex.target]));
        let d = fwd.graph.sub(y, s).map_err(RerankerError::from)?;
        sq.push(fwd.graph.sum_sq(d));
    }
    let g = &mut fwd.graph;
    let mut total = sq[0];
    for &v in &sq[1..] {
        total = g.add(total, v).map_err(RerankerError::from)?;
    }
    let mse = g.scale(total, 1.0 / batch.len() as f64);
    let norm = fwd.trainable_norm_sq();
    let reg = fwd.graph.scale(norm, lambda / 2.0);
    Ok(fwd.graph.add(mse, reg).map_err(RerankerError::from)?)
}

/// Evaluation-mode value of [`loss`].
pub fn loss_value(model: &Reranker, batch: &[&RerankExample], lambda: f64) -> Result<f64, PipelineError> {
    let mut fwd = Forward::new(model, Mode::Eval, 0);
    let l = loss(&mut fwd, batch, lambda)?;
    Ok(fwd.graph.value(l).data()[0])
}

/// Reranker score and baseline probability of one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub score: f64,
    pub prob: f64,
}

/// Index maximizing `α·s + (1-α)·p`; ties go to the lower index.
pub fn mixture_select(candidates: &[ScoredCandidate], alpha: f64) -> usize {
    let mix = |c: &ScoredCandidate| alpha * c.score + (1.0 - alpha) * c.prob;
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        if mix(c) > mix(&candidates[best]) {
            best = i;
        }
    }
    best
}

/// An n-best corpus with every candidate scored once.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredNBest {
    pub scored: Vec<Vec<ScoredCandidate>>,
    pub labels: Vec<Vec<LabelSequence>>,
    pub gold: Option<Vec<LabelSequence>>,
}

impl ScoredNBest {
    /// Mixture selections for one α.
    pub fn select(&self, alpha: f64) -> Vec<LabelSequence> {
        self.scored.iter().zip(&self.labels).map(|(s, l)| l[mixture_select(s, alpha)].clone()).collect()
    }
}

pub fn score_corpus(model: &Reranker, nbest: &NBestCorpus) -> Result<ScoredNBest, PipelineError> {
    let mut out = ScoredNBest { scored: Vec::new(), labels: Vec::new(), gold: nbest.gold().ok() };
    for (sentence, set) in nbest.iter() {
        if set.is_empty() {
            return Err(PipelineError::EmptyCandidates(set.sentence_id));
        }
        let collapsed = set.candidates.iter().enumerate().map(|(i, c)| collapse_lenient(sentence, &c.labels, i)).collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&CollapsedSequence> = collapsed.iter().collect();
        let scores = model.score_all(&refs)?;
        out.scored.push(scores.iter().zip(&set.candidates).map(|(&score, c)| ScoredCandidate { score, prob: c.prob }).collect());
        out.labels.push(set.candidates.iter().map(|c| c.labels.clone()).collect());
    }
    Ok(out)
}

pub const ALPHA_GRID_POINTS: usize = 201;

pub fn alpha_grid() -> impl Iterator<Item = f64> {
    (0..ALPHA_GRID_POINTS).map(|i| i as f64 / (ALPHA_GRID_POINTS - 1) as f64)
}

/// Whether `alpha` is exactly one of the grid values.
pub fn on_alpha_grid(alpha: f64) -> bool {
    alpha_grid().any(|a| a == alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSearch {
    pub alpha: f64,
    pub f1: f64,
    /// `(α, F1)` for every grid point, in grid order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Chunk F1 of the mixture selections at α = 0, 0.005, ..., 1; the best α
/// wins, ties going to the smallest.
pub fn alpha_search(dev: &ScoredNBest) -> Result<AlphaSearch, PipelineError> {
    let gold = dev.gold.as_ref().ok_or(PipelineError::MissingGold(0))?;
    let mut evaluations = Vec::with_capacity(ALPHA_GRID_POINTS);
    for alpha in alpha_grid() {
        evaluations.push((alpha, chunk_prf(gold, &dev.select(alpha), None)?.f1()));
    }
    let mut best = 0;
    for (i, e) in evaluations.iter().enumerate() {
        if e.1 > evaluations[best].1 {
            best = i;
        }
    }
    Ok(AlphaSearch { alpha: evaluations[best].0, f1: evaluations[best].1, evaluations })
}

/// Trained parameters with their selected α and configuration.
#[derive(Debug, Clone)]
pub struct RerankerBundle {
    pub model: Reranker,
    pub alpha: f64,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches; `None` for epoch 0.
    pub train_loss: Option<f64>,
    pub dev_f1: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: RerankerBundle,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Every surface string of the collapsed training items.
fn training_words(examples: &[RerankExample]) -> impl Iterator<Item = &str> {
    examples.iter().flat_map(|e| e.collapsed.items.iter().map(|i| i.as_str()))
}

/// Mini-batch Adam over shuffled examples. After every epoch (and before
/// the first) α is searched on `dev`; the epoch with the best dev F1 is
/// returned, ties going to the earlier one.
pub fn train(examples: &[RerankExample], dev: &NBestCorpus, config: &TrainConfig, pretrained: Option<&Embeddings>) -> Result<TrainOutcome, PipelineError> {
    if examples.is_empty() {
        return Err(PipelineError::EmptyData("training set"));
    }
    if dev.is_empty() {
        return Err(PipelineError::EmptyData("development set"));
    }
    let extra = pretrained.map(|p| p.tokens.as_slice()).unwrap_or(&[]);
    let vocab = Vocab::build(training_words(examples), extra.iter().map(String::as_str), config.min_word_count);
    let longest = training_words(examples).map(|w| w.chars().count()).max().unwrap_or(1);
    let mut arch = config.reranker.clone();
    arch.char_pad_len = longest.clamp(1, config.max_char_len.max(1));
    let mut config = config.clone();
    config.reranker = arch.clone();

    let mut model = Reranker::new(arch, vocab, pretrained, config.seed)?;
    if config.freeze_embeddings {
        model.set_embeddings_trainable(false);
    }
    let mut adam = AdamState::new(config.adam(), &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let search = alpha_search(&score_corpus(&model, dev)?)?;
    info!("epoch 0: dev F1 {:.4} at alpha {}", search.f1, search.alpha);
    let mut history = vec![EpochRecord { epoch: 0, train_loss: None, dev_f1: search.f1, alpha: search.alpha }];
    let mut best = (0, model.params.clone(), search);

    let batch_size = config.batch_size.max(1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (batch_index, chunk) in order.chunks(batch_size).enumerate() {
            let batch: Vec<&RerankExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let grads = {
                let mut fwd = Forward::new(&model, Mode::Train, rng.next_u64());
                let l = loss(&mut fwd, &batch, config.lambda)?;
                let value = fwd.graph.value(l).data()[0];
                if !value.is_finite() {
                    return Err(PipelineError::NonFinite { epoch, batch: batch_index, value });
                }
                total += value;
                batches += 1;
                fwd.graph.backward(l).map_err(RerankerError::from)?
            };
            adam.step(&mut model.params, &grads);
        }
        let search = alpha_search(&score_corpus(&model, dev)?)?;
        let mean = total / batches as f64;
        info!("epoch {epoch}: train loss {mean:.6}, dev F1 {:.4} at alpha {}", search.f1, search.alpha);
        history.push(EpochRecord { epoch, train_loss: Some(mean), dev_f1: search.f1, alpha: search.alpha });
        if search.f1 > best.2.f1 {
            best = (epoch, model.params.clone(), search);
        }
    }
    let (best_epoch, params, search) = best;
    model.params = params;
    Ok(TrainOutcome { bundle: RerankerBundle { model, alpha: search.alpha, config }, history, best_epoch })
}

/// Mixture-selected label sequence for every sentence.
pub fn rerank(bundle: &RerankerBundle, nbest: &NBestCorpus) -> Result<Vec<LabelSequence>, PipelineError> {
    Ok(score_corpus(&bundle.model, nbest)?.select(bundle.alpha))
}

const PARAMS_FILE: &str = "params.ckpt";
const VOCAB_FILE: &str = "vocab.txt";
const META_FILE: &str = "bundle.cfg";

impl RerankerBundle {
    /// Writes `params.ckpt`, `vocab.txt` and `bundle.cfg` into `dir`.
    pub fn save(&self, dir: &Path, header: Option<&str>) -> Result<(), PipelineError> {
        fs::create_dir_all(dir)?;
        let mut buf = Vec::new();
        self.model.save(&mut buf, None)?;
        fs::write(dir.join(PARAMS_FILE), buf)?;
        let mut meta = String::new();
        if let Some(h) = header {
            writeln!(meta, "{h}").unwrap();
        }
        fs::write(dir.join(VOCAB_FILE), format!("{meta}{}", self.model.vocab.to_text()))?;
        writeln!(meta, "alpha = {}", self.alpha).unwrap();
        writeln!(meta, "char_pad_len = {}", self.model.config.char_pad_len).unwrap();
        fs::write(dir.join(META_FILE), meta)?;
        Ok(())
    }

    /// Loads a bundle, checking the stored parameters against `config`'s
    /// architecture. The pad length is taken from the bundle.
    pub fn load(dir: &Path, config: &TrainConfig) -> Result<Self, PipelineError> {
        let meta = fs::read_to_string(dir.join(META_FILE))?;
        let mut alpha = None;
        let mut char_pad_len = None;
        for line in meta.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once('=').ok_or_else(|| PipelineError::Bundle(format!("bad line `{line}`")))?;
            let bad = || PipelineError::Bundle(format!("bad value for `{}`", k.trim()));
            match k.trim() {
                "alpha" => alpha = Some(v.trim().parse::<f64>().map_err(|_| bad())?),
                "char_pad_len" => char_pad_len = Some(v.trim().parse::<usize>().map_err(|_| bad())?),
                other => return Err(PipelineError::Bundle(format!("unknown key `{other}`"))),
            }
        }
        let alpha = alpha.ok_or_else(|| PipelineError::Bundle("missing alpha".into()))?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(PipelineError::Bundle(format!("alpha {alpha} outside [0, 1]")));
        }
        let vocab = Vocab::from_text(&fs::read_to_string(dir.join(VOCAB_FILE))?)?;
        let mut config = config.clone();
        config.reranker.char_pad_len = char_pad_len.ok_or_else(|| PipelineError::Bundle("missing char_pad_len".into()))?;
        let bytes = fs::read(dir.join(PARAMS_FILE))?;
        let (mut model, _) = Reranker::load(&mut bytes.as_slice(), config.reranker.clone(), vocab)?;
        if config.freeze_embeddings {
            model.set_embeddings_trainable(false);
        }
        Ok(RerankerBundle { model, alpha, config })
    }
}
