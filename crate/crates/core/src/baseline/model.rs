use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{feature_strings, featurize, Clusters, FeatureTemplateSet, FeatureVocab};
use super::lattice::Potentials;
use super::nbest::{Candidate, CandidateSet};
use super::BaselineError;
use crate::corpus::{BioLabel, Dataset, LabelSequence, Sentence};
use crate::numerics::{AdamConfig, AdamState, Gradients, ParamId, ParamStore, Tensor};

pub const N_TAGS: usize = BioLabel::ALL.len();

/// Linear-chain CRF over the nine BIO2 labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfModel {
    pub templates: FeatureTemplateSet,
    pub clusters: Option<Clusters>,
    pub vocab: FeatureVocab,
    /// `n_features x N_TAGS`
    pub emission: Vec<f64>,
    /// `N_TAGS x N_TAGS`, `[prev][next]`
    pub transition: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrfTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for CrfTrainConfig {
    fn default() -> Self {
        CrfTrainConfig { epochs: 15, batch_size: 16, learning_rate: 0.05, l2: 1e-4, seed: 1 }
    }
}

/// Training-set mean negative log-likelihood before training (index 0)
/// and after every epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epoch_nll: Vec<f64>,
}

impl CrfModel {
    pub fn empty(templates: FeatureTemplateSet, clusters: Option<Clusters>) -> Self {
        CrfModel {
            templates,
            clusters,
            vocab: FeatureVocab::default(),
            emission: Vec::new(),
            transition: vec![0.0; N_TAGS * N_TAGS],
            start: vec![0.0; N_TAGS],
            end: vec![0.0; N_TAGS],
        }
    }

    pub fn n_features(&self) -> usize {
        self.vocab.len()
    }

    /// Feature ids per position; unseen features are dropped.
    pub fn features(&self, sentence: &Sentence) -> Vec<Vec<u32>> {
        featurize_frozen(self, sentence)
    }

    fn potentials_from(&self, feats: &[Vec<u32>]) -> Potentials {
        let mut emissions = vec![0.0; feats.len() * N_TAGS];
        for (i, fs) in feats.iter().enumerate() {
            let row = &mut emissions[i * N_TAGS..(i + 1) * N_TAGS];
            for &f in fs {
                let w = &self.emission[f as usize * N_TAGS..(f as usize + 1) * N_TAGS];
                for (r, x) in row.iter_mut().zip(w) {
                    *r += x;
                }
            }
        }
        Potentials { n_tags: N_TAGS, emissions, transitions: self.transition.clone(), start: self.start.clone(), end: self.end.clone() }
    }

    pub fn potentials(&self, sentence: &Sentence) -> Potentials {
        let feats = featurize_frozen(self, sentence);
        self.potentials_from(&feats)
    }

    /// Exact probability of `labels` under the model.
    pub fn sequence_prob(&self, sentence: &Sentence, labels: &LabelSequence) -> Result<f64, BaselineError> {
        if sentence.len() != labels.len() {
            return Err(BaselineError::LengthMismatch { tokens: sentence.len(), labels: labels.len() });
        }
        let pot = self.potentials(sentence);
        let tags: Vec<usize> = labels.labels().iter().map(|l| l.index()).collect();
        Ok((pot.score(&tags) - pot.log_partition()).exp().min(1.0))
    }

    /// The `k` most probable label sequences with their probabilities.
    pub fn kbest_decode(&self, sentence: &Sentence, k: usize) -> CandidateSet {
        let pot = self.potentials(sentence);
        let log_z = pot.log_partition();
        let candidates = pot
            .kbest(k)
            .into_iter()
            .map(|p| Candidate { labels: LabelSequence(p.tags.iter().map(|&t| BioLabel::ALL[t]).collect()), prob: (p.score - log_z).exp().min(1.0) })
            .collect();
        CandidateSet { sentence_id: sentence.id, gold: None, candidates }
    }

    pub fn decode(&self, sentence: &Sentence) -> LabelSequence {
        self.kbest_decode(sentence, 1).candidates.remove(0).labels
    }

    pub fn to_json(&self) -> Result<String, BaselineError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, BaselineError> {
        Ok(serde_json::from_str(text)?)
    }
}

fn featurize_frozen(model: &CrfModel, sentence: &Sentence) -> Vec<Vec<u32>> {
    (0..sentence.len())
        .map(|i| feature_strings(sentence, i, &model.templates, model.clusters.as_ref()).iter().filter_map(|f| model.vocab.get(f)).collect())
        .collect()
}

struct Slots {
    emission: ParamId,
    transition: ParamId,
    start: ParamId,
    end: ParamId,
}

fn to_params(model: &CrfModel) -> (ParamStore, Slots) {
    let mut store = ParamStore::new();
    let slots = Slots {
        emission: store.add("crf.emission", Tensor::vector(model.emission.clone())),
        transition: store.add("crf.transition", Tensor::vector(model.transition.clone())),
        start: store.add("crf.start", Tensor::vector(model.start.clone())),
        end: store.add("crf.end", Tensor::vector(model.end.clone())),
    };
    (store, slots)
}

fn load_params(model: &mut CrfModel, store: &ParamStore, slots: &Slots) {
    model.emission.copy_from_slice(store.get(slots.emission).data());
    model.transition.copy_from_slice(store.get(slots.transition).data());
    model.start.copy_from_slice(store.get(slots.start).data());
    model.end.copy_from_slice(store.get(slots.end).data());
}

/// Adds the gradient of one sentence's negative log-likelihood (expected
/// minus observed feature counts) and returns that NLL.
fn accumulate_nll_grad(model: &CrfModel, feats: &[Vec<u32>], gold: &[usize], grads: &mut Gradients, slots: &Slots, scale: f64) -> f64 {
    let pot = model.potentials_from(feats);
    let marg = pot.marginals();
    let nll = marg.log_z - pot.score(gold);
    let n = feats.len();

    let emission = grads.get_mut(slots.emission).data_mut();
    for (i, fs) in feats.iter().enumerate() {
        let mut delta = [0.0; N_TAGS];
        for (y, d) in delta.iter_mut().enumerate() {
            *d = marg.nodes[i * N_TAGS + y];
        }
        delta[gold[i]] -= 1.0;
        for &f in fs {
            let row = &mut emission[f as usize * N_TAGS..(f as usize + 1) * N_TAGS];
            for (r, d) in row.iter_mut().zip(&delta) {
                *r += scale * d;
            }
        }
    }
    let transition = grads.get_mut(slots.transition).data_mut();
    for i in 0..n.saturating_sub(1) {
        for pq in 0..N_TAGS * N_TAGS {
            transition[pq] += scale * marg.edges[i * N_TAGS * N_TAGS + pq];
        }
        transition[gold[i] * N_TAGS + gold[i + 1]] -= scale;
    }
    let start = grads.get_mut(slots.start).data_mut();
    for y in 0..N_TAGS {
        start[y] += scale * marg.nodes[y];
    }
    start[gold[0]] -= scale;
    let end = grads.get_mut(slots.end).data_mut();
    for y in 0..N_TAGS {
        end[y] += scale * marg.nodes[(n - 1) * N_TAGS + y];
    }
    end[gold[n - 1]] -= scale;
    nll
}

fn mean_nll(model: &CrfModel, data: &[(Vec<Vec<u32>>, Vec<usize>)]) -> f64 {
    let total: f64 = data
        .iter()
        .map(|(feats, gold)| {
            let pot = model.potentials_from(feats);
            pot.log_partition() - pot.score(gold)
        })
        .sum();
    total / data.len() as f64
}

/// Mini-batch Adam on the L2-regularized mean negative log-likelihood.
pub fn crf_train(
    train: &Dataset,
    templates: &FeatureTemplateSet,
    clusters: Option<Clusters>,
    config: &CrfTrainConfig,
) -> Result<(CrfModel, TrainLog), BaselineError> {
    if train.is_empty() {
        return Err(BaselineError::EmptyDataset);
    }
    let templates = templates.resolve(train.has_pos(), clusters.is_some());
    let mut model = CrfModel::empty(templates, clusters);
    let mut vocab = FeatureVocab::default();
    let data: Vec<(Vec<Vec<u32>>, Vec<usize>)> = train
        .iter()
        .map(|(s, gold)| {
            let feats = featurize(s, &model.templates, model.clusters.as_ref(), &mut vocab, true);
            (feats, gold.labels().iter().map(|l| l.index()).collect())
        })
        .collect();
    model.vocab = vocab;
    model.emission = vec![0.0; model.vocab.len() * N_TAGS];

    let (mut store, slots) = to_params(&model);
    let mut adam = AdamState::new(AdamConfig { learning_rate: config.learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8 }, &store);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog { epoch_nll: vec![mean_nll(&model, &data)] };
    let batch_size = config.batch_size.max(1);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (batch_index, batch) in order.chunks(batch_size).enumerate() {
            let mut grads = Gradients::zeros_like(&store);
            let scale = 1.0 / batch.len() as f64;
            let mut batch_nll = 0.0;
            for &i in batch {
                let (feats, gold) = &data[i];
                batch_nll += accumulate_nll_grad(&model, feats, gold, &mut grads, &slots, scale);
            }
            if !batch_nll.is_finite() {
                return Err(BaselineError::NonFinite { epoch, batch: batch_index, value: batch_nll });
            }
            if config.l2 > 0.0 {
                for id in [slots.emission, slots.transition, slots.start, slots.end] {
                    let theta = store.get(id).data().to_vec();
                    for (g, t) in grads.get_mut(id).data_mut().iter_mut().zip(theta) {
                        *g += config.l2 * t;
                    }
                }
            }
            adam.step(&mut store, &grads);
            load_params(&mut model, &store, &slots);
        }
        let nll = mean_nll(&model, &data);
        if !nll.is_finite() {
            return Err(BaselineError::NonFinite { epoch, batch: usize::MAX, value: nll });
        }
        info!("crf epoch {epoch}: mean nll {nll:.6}");
        log.epoch_nll.push(nll);
    }
    Ok((model, log))
}
