use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::embeddings::{init_embeddings, Embeddings};
use super::vocab::Vocab;
use super::RerankerError;
use crate::collapse::{CollapsedItem, CollapsedSequence};
use crate::numerics::{read_checkpoint, write_checkpoint, AdamState, Graph, Mode, ParamId, ParamStore, Tensor, Var};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankerConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_cnn_filters: usize,
    pub char_cnn_window: usize,
    pub lstm_hidden: usize,
    pub word_cnn_filters: usize,
    pub word_cnn_window: usize,
    pub dropout: f64,
    pub peepholes: bool,
    pub use_lstm: bool,
    pub use_word_cnn: bool,
    pub use_char_cnn: bool,
    /// Characters per word fed to the char-CNN; longer words are cut,
    /// shorter ones padded.
    pub char_pad_len: usize,
}

impl Default for RerankerConfig {
    fn default() -> Self {
        RerankerConfig {
            word_dim: 50,
            char_dim: 50,
            char_cnn_filters: 50,
            char_cnn_window: 3,
            lstm_hidden: 100,
            word_cnn_filters: 100,
            word_cnn_window: 3,
            dropout: 0.2,
            peepholes: false,
            use_lstm: true,
            use_word_cnn: true,
            use_char_cnn: true,
            char_pad_len: 32,
        }
    }
}

impl RerankerConfig {
    pub fn validate(&self) -> Result<(), RerankerError> {
        let bad = |m: &str| Err(RerankerError::Config(m.to_string()));
        if !self.use_lstm && !self.use_word_cnn {
            return bad("at least one of use_lstm and use_word_cnn must be set");
        }
        if self.word_dim == 0 || self.lstm_hidden == 0 || self.word_cnn_filters == 0 {
            return bad("dimensions must be positive");
        }
        if self.use_char_cnn && (self.char_dim == 0 || self.char_cnn_filters == 0 || self.char_pad_len == 0) {
            return bad("char-CNN dimensions must be positive");
        }
        if self.char_cnn_window.is_multiple_of(2) || self.word_cnn_window.is_multiple_of(2) {
            return bad("convolution windows must be odd");
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1]");
        }
        Ok(())
    }

    /// Width of one word representation.
    pub fn repr_dim(&self) -> usize {
        self.word_dim + if self.use_char_cnn { self.char_cnn_filters } else { 0 }
    }

    /// Width of the sequence representation fed to the score head.
    pub fn h_dim(&self) -> usize {
        (if self.use_lstm { self.lstm_hidden } else { 0 }) + if self.use_word_cnn { self.word_cnn_filters } else { 0 }
    }

    /// Parameter names and shapes in registration order. Matrices that
    /// multiply a vector are stored `[out, in]`; convolution filters are
    /// stored `[window * in, filters]`.
    pub fn param_shapes(&self, n_words: usize, n_chars: usize) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![("word_emb".to_string(), vec![n_words, self.word_dim])];
        if self.use_char_cnn {
            out.push(("char_emb".into(), vec![n_chars, self.char_dim]));
            out.push(("char_cnn.w".into(), vec![self.char_cnn_window * self.char_dim, self.char_cnn_filters]));
            out.push(("char_cnn.b".into(), vec![self.char_cnn_filters]));
        }
        let (h, d) = (self.lstm_hidden, self.repr_dim());
        if self.use_lstm {
            for i in 1..=8 {
                let cols = if i % 2 == 1 { h } else { d };
                out.push((format!("lstm.w{i}"), vec![h, cols]));
            }
            for i in 1..=4 {
                out.push((format!("lstm.b{i}"), vec![h]));
            }
            if self.peepholes {
                out.push(("lstm.mu1".into(), vec![h]));
                out.push(("lstm.mu2".into(), vec![h]));
            }
        }
        if self.use_word_cnn {
            out.push(("word_cnn.w".into(), vec![self.word_cnn_window * d, self.word_cnn_filters]));
            out.push(("word_cnn.b".into(), vec![self.word_cnn_filters]));
        }
        out.push(("head.w".into(), vec![1, self.h_dim()]));
        out.push(("head.b".into(), vec![1]));
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct CharIds {
    emb: ParamId,
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct LstmIds {
    w: [ParamId; 8],
    b: [ParamId; 4],
    mu: Option<[ParamId; 2]>,
}

#[derive(Debug, Clone, Copy)]
struct ParamIds {
    word_emb: ParamId,
    chars: Option<CharIds>,
    lstm: Option<LstmIds>,
    word_cnn: Option<(ParamId, ParamId)>,
    head: (ParamId, ParamId),
}

impl ParamIds {
    /// Looks every expected parameter up by name and checks its shape.
    fn resolve(store: &ParamStore, config: &RerankerConfig, vocab: &Vocab) -> Result<Self, RerankerError> {
        let expected = config.param_shapes(vocab.n_words(), vocab.n_chars());
        for (name, shape) in &expected {
            let id = store.find(name).ok_or_else(|| RerankerError::Dimension { name: name.clone(), expected: shape.clone(), found: None })?;
            let found = store.get(id).shape();
            if found != shape.as_slice() {
                return Err(RerankerError::Dimension { name: name.clone(), expected: shape.clone(), found: Some(found.to_vec()) });
            }
        }
        if store.len() != expected.len() {
            let extra = store.iter().map(|(_, p)| p.name.clone()).find(|n| !expected.iter().any(|(e, _)| e == n));
            return Err(RerankerError::Config(format!("checkpoint has unexpected parameter {}", extra.unwrap_or_default())));
        }
        let id = |name: &str| store.find(name).expect("checked above");
        Ok(ParamIds {
            word_emb: id("word_emb"),
            chars: config.use_char_cnn.then(|| CharIds { emb: id("char_emb"), w: id("char_cnn.w"), b: id("char_cnn.b") }),
            lstm: config.use_lstm.then(|| LstmIds {
                w: std::array::from_fn(|i| id(&format!("lstm.w{}", i + 1))),
                b: std::array::from_fn(|i| id(&format!("lstm.b{}", i + 1))),
                mu: config.peepholes.then(|| [id("lstm.mu1"), id("lstm.mu2")]),
            }),
            word_cnn: config.use_word_cnn.then(|| (id("word_cnn.w"), id("word_cnn.b"))),
            head: (id("head.w"), id("head.b")),
        })
    }
}

/// Neural scorer for collapsed sequences.
#[derive(Debug, Clone)]
pub struct Reranker {
    pub config: RerankerConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    ids: ParamIds,
}

fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-bound..=bound)).collect()).expect("shape matches")
}

impl Reranker {
    /// Fresh parameters: pretrained or uniform `±sqrt(3/dim)` embeddings,
    /// Glorot-uniform weights, zero biases.
    pub fn new(config: RerankerConfig, vocab: Vocab, pretrained: Option<&Embeddings>, seed: u64) -> Result<Self, RerankerError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for (name, shape) in config.param_shapes(vocab.n_words(), vocab.n_chars()) {
            let value = match name.as_str() {
                "word_emb" => init_embeddings(pretrained, &vocab, config.word_dim, &mut rng)?,
                "char_emb" => uniform(&shape, (3.0 / config.char_dim as f64).sqrt(), &mut rng),
                n if shape.len() == 1 && !n.contains(".mu") => Tensor::zeros(&shape),
                _ => {
                    let (fan_out, fan_in) = if shape.len() == 2 { (shape[0], shape[1]) } else { (1, shape[0]) };
                    uniform(&shape, (6.0 / (fan_in + fan_out) as f64).sqrt(), &mut rng)
                }
            };
            store.add(name, value);
        }
        Self::from_parts(config, vocab, store)
    }

    /// Wraps an existing parameter store, rejecting any shape that does not
    /// match `config` and `vocab`.
    pub fn from_parts(config: RerankerConfig, vocab: Vocab, params: ParamStore) -> Result<Self, RerankerError> {
        config.validate()?;
        let ids = ParamIds::resolve(&params, &config, &vocab)?;
        Ok(Reranker { config, vocab, params, ids })
    }

    pub fn set_embeddings_trainable(&mut self, trainable: bool) {
        self.params.set_trainable(self.ids.word_emb, trainable);
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.find(name)
    }

    /// Evaluation-mode score of one sequence.
    pub fn score(&self, seq: &CollapsedSequence) -> Result<f64, RerankerError> {
        Ok(self.score_all(&[seq])?[0])
    }

    /// Evaluation-mode scores sharing one tape.
    pub fn score_all(&self, seqs: &[&CollapsedSequence]) -> Result<Vec<f64>, RerankerError> {
        let mut fwd = Forward::new(self, Mode::Eval, 0);
        seqs.iter()
            .map(|s| {
                let v = fwd.score(s)?;
                Ok(fwd.graph.value(v).data()[0])
            })
            .collect()
    }

    pub fn save(&self, w: &mut impl Write, adam: Option<&AdamState>) -> Result<(), RerankerError> {
        write_checkpoint(w, &self.params, adam)?;
        Ok(())
    }

    pub fn load(r: &mut impl Read, config: RerankerConfig, vocab: Vocab) -> Result<(Self, Option<AdamState>), RerankerError> {
        let (params, adam) = read_checkpoint(r)?;
        Ok((Self::from_parts(config, vocab, params)?, adam))
    }
}

struct LstmVars {
    w: [Var; 8],
    b: [Var; 4],
    mu: Option<[Var; 2]>,
}

/// One recorded forward computation over a model. Char-CNN outputs are
/// cached per word string for the lifetime of the tape.
pub struct Forward<'m> {
    pub graph: Graph<'m>,
    model: &'m Reranker,
    word_emb: Var,
    chars: Option<(Var, Var, Var)>,
    lstm: Option<LstmVars>,
    word_cnn: Option<(Var, Var)>,
    head: (Var, Var),
    char_cache: HashMap<String, Var>,
}

impl<'m> Forward<'m> {
    pub fn new(model: &'m Reranker, mode: Mode, seed: u64) -> Self {
        let mut graph = Graph::new(&model.params, mode, seed);
        let ids = model.ids;
        let word_emb = graph.param(ids.word_emb);
        let chars = ids.chars.map(|c| (graph.param(c.emb), graph.param(c.w), graph.param(c.b)));
        let lstm =
            ids.lstm.map(|l| LstmVars { w: l.w.map(|id| graph.param(id)), b: l.b.map(|id| graph.param(id)), mu: l.mu.map(|m| m.map(|id| graph.param(id))) });
        let word_cnn = ids.word_cnn.map(|(w, b)| (graph.param(w), graph.param(b)));
        let head = (graph.param(ids.head.0), graph.param(ids.head.1));
        Forward { graph, model, word_emb, chars, lstm, word_cnn, head, char_cache: HashMap::new() }
    }

    /// Pads the word to the fixed character length, embeds, convolves with
    /// zero-padded windows and max-pools over positions.
    pub fn char_cnn(&mut self, word: &str) -> Result<Var, RerankerError> {
        if let Some(&v) = self.char_cache.get(word) {
            return Ok(v);
        }
        let (emb, w, b) = self.chars.ok_or_else(|| RerankerError::Config("char-CNN is disabled".into()))?;
        let cfg = &self.model.config;
        let ids = self.model.vocab.char_ids(word, cfg.char_pad_len);
        let g = &mut self.graph;
        let x = g.gather(emb, &ids)?;
        let win = g.windows(x, cfg.char_cnn_window)?;
        let conv = g.matmul(win, w)?;
        let conv = g.add_row(conv, b)?;
        let out = g.max_pool_rows(conv)?;
        self.char_cache.insert(word.to_string(), out);
        Ok(out)
    }

    /// Word embedding, optionally followed by the char-CNN vector, with
    /// dropout in training mode.
    pub fn word_repr(&mut self, item: &CollapsedItem) -> Result<Var, RerankerError> {
        let id = self.model.vocab.item_id(item);
        let emb = self.graph.gather(self.word_emb, &[id])?;
        let x = if self.chars.is_some() {
            let c = self.char_cnn(item.as_str())?;
            self.graph.concat(&[emb, c])
        } else {
            self.graph.concat(&[emb])
        };
        Ok(self.graph.dropout(x, self.model.config.dropout))
    }

    fn gate(&mut self, wh: Var, wx: Var, b: Var, h: Option<Var>, x: Var, peep: Option<(Var, Var)>) -> Result<Var, RerankerError> {
        let g = &mut self.graph;
        let mut z = g.matvec(wx, x)?;
        if let Some(h) = h {
            let zh = g.matvec(wh, h)?;
            z = g.add(zh, z)?;
        }
        if let Some((mu, m)) = peep {
            let p = g.mul(mu, m)?;
            z = g.add(z, p)?;
        }
        Ok(g.add(z, b)?)
    }

    /// Left-to-right LSTM from zero state; returns the last hidden vector.
    pub fn lstm_encode(&mut self, xs: &[Var]) -> Result<Var, RerankerError> {
        if xs.is_empty() {
            return Err(RerankerError::EmptySequence);
        }
        let l = self.lstm.as_ref().ok_or_else(|| RerankerError::Config("LSTM is disabled".into()))?;
        let (w, b, mu) = (l.w, l.b, l.mu);
        let mut h: Option<Var> = None;
        let mut m: Option<Var> = None;
        for &x in xs {
            let peep = |k: usize| mu.zip(m).map(|(mu, m)| (mu[k], m));
            let i = self.gate(w[0], w[1], b[0], h, x, peep(0))?;
            let f = self.gate(w[2], w[3], b[1], h, x, peep(1))?;
            let c = self.gate(w[4], w[5], b[2], h, x, None)?;
            let o = self.gate(w[6], w[7], b[3], h, x, None)?;
            let g = &mut self.graph;
            let (i, c, o) = (g.sigmoid(i), g.tanh(c), g.sigmoid(o));
            let mut cell = g.mul(i, c)?;
            if let Some(prev) = m {
                let f = g.sigmoid(f);
                let keep = g.mul(f, prev)?;
                cell = g.add(cell, keep)?;
            }
            let t = g.tanh(cell);
            h = Some(g.mul(t, o)?);
            m = Some(cell);
        }
        Ok(h.expect("non-empty"))
    }

    /// Centered zero-padded windows, one affine map per window, per-filter
    /// max over positions.
    pub fn word_cnn_encode(&mut self, xs: &[Var]) -> Result<Var, RerankerError> {
        if xs.is_empty() {
            return Err(RerankerError::EmptySequence);
        }
        let (w, b) = self.word_cnn.ok_or_else(|| RerankerError::Config("word-CNN is disabled".into()))?;
        let g = &mut self.graph;
        let x = g.stack_rows(xs)?;
        let win = g.windows(x, self.model.config.word_cnn_window)?;
        let conv = g.matmul(win, w)?;
        let conv = g.add_row(conv, b)?;
        Ok(g.max_pool_rows(conv)?)
    }

    /// `h_LSTM ⊕ h_CNN`, restricted to the enabled encoders.
    pub fn encode(&mut self, seq: &CollapsedSequence) -> Result<Var, RerankerError> {
        if seq.is_empty() {
            return Err(RerankerError::EmptySequence);
        }
        let xs = seq.items.iter().map(|item| self.word_repr(item)).collect::<Result<Vec<_>, _>>()?;
        let mut parts = Vec::with_capacity(2);
        if self.lstm.is_some() {
            parts.push(self.lstm_encode(&xs)?);
        }
        if self.word_cnn.is_some() {
            parts.push(self.word_cnn_encode(&xs)?);
        }
        Ok(self.graph.concat(&parts))
    }

    /// `sigmoid(W h(C) + b)` as a one-element vector.
    pub fn score(&mut self, seq: &CollapsedSequence) -> Result<Var, RerankerError> {
        let h = self.encode(seq)?;
        let g = &mut self.graph;
        let z = g.matvec(self.head.0, h)?;
        let z = g.add(z, self.head.1)?;
        Ok(g.sigmoid(z))
    }

    /// Squared L2 norm of every trainable parameter, as a scalar.
    pub fn trainable_norm_sq(&mut self) -> Var {
        let ids: Vec<ParamId> = self.model.params.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
        let g = &mut self.graph;
        let mut total = g.input(Tensor::scalar(0.0));
        for id in ids {
            let p = g.param(id);
            let s = g.sum_sq(p);
            total = g.add(total, s).expect("scalars");
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapse::collapse;
    use crate::corpus::{EntityType, LabelSequence, Sentence};
    use crate::numerics::{grad_check, GradCheckOptions};

    fn tiny_config() -> RerankerConfig {
        RerankerConfig {
            word_dim: 3,
            char_dim: 2,
            char_cnn_filters: 2,
            char_cnn_window: 3,
            lstm_hidden: 3,
            word_cnn_filters: 2,
            word_cnn_window: 3,
            dropout: 0.0,
            peepholes: false,
            use_lstm: true,
            use_word_cnn: true,
            use_char_cnn: true,
            char_pad_len: 5,
        }
    }

    fn words_vocab() -> Vocab {
        Vocab::build(["Barack", "Obama", "was", "born", "in", "hawaii", ".", "abc"], [], 1)
    }

    fn model(config: RerankerConfig, seed: u64) -> Reranker {
        Reranker::new(config, words_vocab(), None, seed).unwrap()
    }

    fn set(m: &mut Reranker, name: &str, data: Vec<f64>) {
        let id = m.param_id(name).unwrap();
        let t = m.params.get_mut(id);
        assert_eq!(t.len(), data.len(), "{name}");
        t.data_mut().copy_from_slice(&data);
    }

    fn zero(m: &mut Reranker, name: &str) {
        let id = m.param_id(name).unwrap();
        m.params.get_mut(id).data_mut().fill(0.0);
    }

    fn seq(words: &[&str], tags: &[&str]) -> CollapsedSequence {
        collapse(&Sentence::from_words(0, words).unwrap(), &LabelSequence::parse_tags(tags).unwrap()).unwrap()
    }

    fn obama(tags: &[&str]) -> CollapsedSequence {
        seq(&["Barack", "Obama", "was", "born", "in", "hawaii", "."], tags)
    }

    fn values(fwd: &Forward, v: Var) -> Vec<f64> {
        fwd.graph.value(v).data().to_vec()
    }

    #[test]
    fn default_dimensions() {
        let c = RerankerConfig::default();
        assert_eq!((c.repr_dim(), c.h_dim()), (100, 200));
        let shapes = c.param_shapes(10, 5);
        assert!(!shapes.iter().any(|(n, _)| n.contains("mu")));
        assert_eq!(shapes.iter().find(|(n, _)| n == "head.w").unwrap().1, vec![1, 200]);
        let lstm_only = RerankerConfig { use_word_cnn: false, ..c.clone() };
        assert_eq!(lstm_only.h_dim(), 100);
        let no_char = RerankerConfig { use_char_cnn: false, ..c };
        assert_eq!(no_char.repr_dim(), 50);
    }

    #[test]
    fn zero_char_filters_give_bias() {
        let mut m = model(tiny_config(), 1);
        zero(&mut m, "char_cnn.w");
        set(&mut m, "char_cnn.b", vec![0.3, -0.7]);
        let mut fwd = Forward::new(&m, Mode::Eval, 0);
        for w in ["", "Obama", "unseen-word"] {
            let v = fwd.char_cnn(w).unwrap();
            assert_eq!(values(&fwd, v), vec![0.3, -0.7]);
        }
    }

    #[test]
    fn char_filter_picks_coordinate_zero() {
        let mut m = model(tiny_config(), 2);
        let (a, b, c) = (m.vocab.char_id('a'), m.vocab.char_id('b'), m.vocab.char_id('c'));
        let mut emb = vec![0.0; m.vocab.n_chars() * 2];
        emb[0] = -0.4; // <pad_char>
        emb[a * 2] = 0.25;
        emb[b * 2] = 0.9;
        emb[c * 2] = -0.1;
        emb[b * 2 + 1] = 5.0; // coordinate 1 must be ignored
        set(&mut m, "char_emb", emb);
        // filter 0 reads coordinate 0 of the window centre; filter 1 is dead
        let mut w = vec![0.0; 6 * 2];
        w[2 * 2] = 1.0;
        set(&mut m, "char_cnn.w", w);
        zero(&mut m, "char_cnn.b");
        let mut fwd = Forward::new(&m, Mode::Eval, 0);
        let v = fwd.char_cnn("abc").unwrap();
        // positions: a, b, c, pad, pad -> max(0.25, 0.9, -0.1, -0.4, -0.4)
        assert_eq!(values(&fwd, v), vec![0.9, 0.0]);
        let v = fwd.char_cnn("c").unwrap();
        assert_eq!(values(&fwd, v)[0], -0.1);
    }

    #[test]
    fn truncation_makes_long_words_equal() {
        let m = model(tiny_config(), 3);
        let mut fwd = Forward::new(&m, Mode::Eval, 0);
        let a = fwd.char_cnn("hawaiians").unwrap();
        let b = fwd.char_cnn("bawaiians").unwrap();
        assert_ne!(values(&fwd, a), values(&fwd, b));
        let c = fwd.char_cnn("hawaiixyz").unwrap();
        let d = fwd.char_cnn("hawaiipqr").unwrap();
        assert_eq!(values(&fwd, c), values(&fwd, d));
    }

    #[test]
    fn word_repr_concatenates() {
        let m = model(tiny_config(), 4);
        let mut fwd = Forward::new(&m, Mode::Eval, 0);
        let item = CollapsedItem::TypeToken(EntityType::Per);
        let r = fwd.word_repr(&item).unwrap();
        let c = fwd.char_cnn("PER").unwrap();
        let mut expected = m.params.get(m.param_id("word_emb").unwrap()).row(2).to_vec();
        expected.extend(values(&fwd, c));
        assert_eq!(values(&fwd, r), expected);
    }

    #[test]
    fn full_dropout_zeroes_in_training() {
        let m = model(RerankerConfig { dropout: 1.0, ..tiny_config() }, 5);
        let mut fwd = Forward::new(&m, Mode::Train, 0);
        let r = fwd.word_repr(&CollapsedItem::Word("born".into())).unwrap();
        assert!(values(&fwd, r).iter().all(|&v| v == 0.0));
        let mut fwd = Forward::new(&m, Mode::Eval, 0);
        let r = fwd.word_repr(&CollapsedItem::Word("born".into())).unwrap();
        assert!(values(&fwd, r).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn zero_lstm_outputs_zero() {
        let mut m = model(tiny_config(), 6);
        for name in ["lstm.w1", "lstm.w2", "lstm.w3", "lstm.w4", "lstm.w5", "lstm.w6", "lstm.w7", "lstm.w8"] {
            zero(&mut m, name);
        }
        let mut fwd = Forward::new(&m, Mode::Eval, 0);
        let s = obama(&["B-PER", "I-PER", "O", "O", "O", "B-LOC", "O"]);
        let xs: Vec<Var> = s.items.iter().map(|i| fwd.word_repr(i).unwrap()).collect();
        let h = fwd.lstm_encode(&xs).unwrap();
        assert_eq!(values(&fwd, h), vec![0.0; 3]);
        assert!(matches!(fwd.lstm_encode(&[]), Err(RerankerError::EmptySequence)));
    }

    #[test]
    fn single_step_closed_form() {
        let mut m = model(tiny_config(), 7);
        for i in 1..=8 {
            zero(&mut m, &format!("lstm.w{i}"));
        }
        set(&mut m, "lstm.b3", vec![5.0, -1.0, 0.5]);
        let mut fwd = Forward::new(&m, Mode::Eval, 0);
        let x = fwd.word_repr(&CollapsedItem::Word("in".into())).unwrap();
        let h = fwd.lstm_encode(&[x]).unwrap();
        for (got, b3) in values(&fwd, h).into_iter().zip([5.0f64, -1.0, 0.5]) {
            let expected = (b3.tanh() * 0.5).tanh() * 0.5;
            assert!((got - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_gradient_over_five_steps() {
        for peepholes in [false, true] {
            let m = model(RerankerConfig { peepholes, use_word_cnn: false, ..tiny_config() }, 8);
            let s = seq(&["Barack", "was", "born", "in", "hawaii"], &["B-PER", "O", "O", "O", "B-LOC"]);
            let report = grad_check(
                &m.params,
                |p| {
                    let mm = Reranker { params: p.clone(), ..m.clone() };
                    let mut fwd = Forward::new(&mm, Mode::Eval, 0);
                    let xs: Vec<Var> = s.items.iter().map(|i| fwd.word_repr(i).unwrap()).collect();
                    let h = fwd.lstm_encode(&xs).unwrap();
                    let loss = fwd.graph.sum_sq(h);
                    let grads = fwd.graph.backward(loss)?;
                    Ok((fwd.graph.value(loss).data()[0], grads))
                },
                GradCheckOptions { coords_per_param: 30, ..Default::default() },
            )
            .unwrap();
            assert!(report.passed, "{report:?}");
        }
    }

    #[test]
    fn word_cnn_single_position() {
        let m = model(tiny_config(), 9);
        let mut fwd = Forward::new(&m, Mode::Eval, 0);
        let x = fwd.word_repr(&CollapsedItem::Word("born".into())).unwrap();
        let z = values(&fwd, x);
        let out = fwd.word_cnn_encode(&[x]).unwrap();
        let w = m.params.get(m.param_id("word_cnn.w").unwrap());
        let d = z.len();
        for f in 0..2 {
            // window [0, z, 0]: only the middle block of rows contributes
            let expected: f64 = (0..d).map(|j| z[j] * w.data()[(d + j) * 2 + f]).sum();
            assert!((values(&fwd, out)[f] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn word_cnn_zero_filters_give_bias() {
        let mut m = model(tiny_config(), 10);
        zero(&mut m, "word_cnn.w");
        set(&mut m, "word_cnn.b", vec![1.5, -2.0]);
        let mut fwd = Forward::new(&m, Mode::Eval, 0);
        let s = obama(&["O"; 7]);
        let xs: Vec<Var> = s.items.iter().map(|i| fwd.word_repr(i).unwrap()).collect();
        let out = fwd.word_cnn_encode(&xs).unwrap();
        assert_eq!(values(&fwd, out), vec![1.5, -2.0]);
    }

    #[test]
    fn word_cnn_hand_computed_max() {
        // repr = 1-d embedding only, one filter [1, 2, -1] over (prev, cur, next)
        let config = RerankerConfig { word_dim: 1, use_char_cnn: false, use_lstm: false, word_cnn_filters: 1, ..tiny_config() };
        let mut m = model(config, 11);
        let mut emb = vec![0.0; m.vocab.n_words()];
        let ids: Vec<usize> = ["was", "born", "in", "hawaii"].iter().map(|w| m.vocab.word_id(w)).collect();
        for (&id, v) in ids.iter().zip([1.0, -2.0, 3.0, 0.5]) {
            emb[id] = v;
        }
        set(&mut m, "word_emb", emb);
        set(&mut m, "word_cnn.w", vec![1.0, 2.0, -1.0]);
        set(&mut m, "word_cnn.b", vec![0.1]);
        let mut fwd = Forward::new(&m, Mode::Eval, 0);
        let s = seq(&["was", "born", "in", "hawaii"], &["O"; 4]);
        let xs: Vec<Var> = s.items.iter().map(|i| fwd.word_repr(i).unwrap()).collect();
        let out = fwd.word_cnn_encode(&xs).unwrap();
        // windows: [0,1,-2] -> 4.0; [1,-2,3] -> -6.0; [-2,3,0.5] -> 3.5; [3,0.5,0] -> 4.0
        assert_eq!(values(&fwd, out), vec![4.0 + 0.1]);
    }

    #[test]
    fn zero_head_scores_one_half() {
        let mut m = model(tiny_config(), 12);
        zero(&mut m, "head.w");
        assert_eq!(m.score(&obama(&["B-PER", "I-PER", "O", "O", "O", "B-LOC", "O"])).unwrap(), 0.5);
        assert_eq!(m.score(&seq(&["abc"], &["O"])).unwrap(), 0.5);
    }

    #[test]
    fn scores_are_open_unit_interval_and_deterministic() {
        use rand::seq::IndexedRandom;
        let m = model(tiny_config(), 13);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let words = ["Barack", "Obama", "was", "born", "in", "hawaii", ".", "zzz"];
        let tags = ["O", "B-PER", "I-PER", "B-LOC", "B-ORG", "B-MISC"];
        for _ in 0..1000 {
            let n = rng.random_range(1..8);
            let w: Vec<&str> = (0..n).map(|_| *words.choose(&mut rng).unwrap()).collect();
            let t: Vec<&str> = (0..n).map(|_| *tags.choose(&mut rng).unwrap()).collect();
            let s = crate::collapse::collapse_lenient(&Sentence::from_words(0, &w).unwrap(), &LabelSequence::parse_tags(&t).unwrap(), 0).unwrap();
            let score = m.score(&s).unwrap();
            assert!(score > 0.0 && score < 1.0);
            assert_eq!(score.to_bits(), m.score(&s.clone()).unwrap().to_bits());
        }
    }

    #[test]
    fn identical_collapsed_sequences_score_identically() {
        let m = model(tiny_config(), 14);
        let a = seq(&["Barack", "Obama", "was"], &["B-PER", "I-PER", "O"]);
        let b = seq(&["Michelle", "Obama", "was"], &["B-PER", "I-PER", "O"]);
        assert_eq!(a.items, b.items);
        let scores = m.score_all(&[&a, &b]).unwrap();
        assert_eq!(scores[0].to_bits(), scores[1].to_bits());
    }

    #[test]
    fn scoring_is_order_sensitive() {
        let m = model(RerankerConfig { use_word_cnn: false, ..tiny_config() }, 15);
        let fwd_seq = seq(&["was", "born", "in", "hawaii"], &["O"; 4]);
        let mut rev = fwd_seq.clone();
        rev.items.reverse();
        let mut f = Forward::new(&m, Mode::Eval, 0);
        let xs: Vec<Var> = fwd_seq.items.iter().map(|i| f.word_repr(i).unwrap()).collect();
        let h1 = f.lstm_encode(&xs).unwrap();
        let rs: Vec<Var> = xs.iter().rev().copied().collect();
        let h2 = f.lstm_encode(&rs).unwrap();
        assert_ne!(values(&f, h1), values(&f, h2));
        assert_ne!(m.score(&fwd_seq).unwrap(), m.score(&rev).unwrap());
    }

    #[test]
    fn full_model_gradient() {
        let m = model(RerankerConfig { peepholes: true, ..tiny_config() }, 16);
        let batch = [obama(&["B-PER", "I-PER", "O", "O", "O", "B-LOC", "O"]), obama(&["B-LOC", "I-LOC", "O", "O", "O", "O", "O"]), seq(&["abc"], &["B-ORG"])];
        let report = grad_check(
            &m.params,
            |p| {
                let mm = Reranker { params: p.clone(), ..m.clone() };
                let mut fwd = Forward::new(&mm, Mode::Eval, 0);
                let mut total = fwd.graph.input(Tensor::vector(vec![0.0]));
                for s in &batch {
                    let v = fwd.score(s).unwrap();
                    total = fwd.graph.add(total, v)?;
                }
                let loss = fwd.graph.sum_sq(total);
                let grads = fwd.graph.backward(loss)?;
                Ok((fwd.graph.value(loss).data()[0], grads))
            },
            GradCheckOptions { coords_per_param: 50, ..Default::default() },
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn checkpoint_roundtrip_and_mismatch() {
        let m = model(tiny_config(), 17);
        let mut buf = Vec::new();
        m.save(&mut buf, None).unwrap();
        let (back, adam) = Reranker::load(&mut buf.as_slice(), tiny_config(), words_vocab()).unwrap();
        assert!(adam.is_none());
        assert_eq!(back.params, m.params);
        let s = obama(&["O"; 7]);
        assert_eq!(back.score(&s).unwrap().to_bits(), m.score(&s).unwrap().to_bits());

        let wider = RerankerConfig { lstm_hidden: 4, ..tiny_config() };
        let err = Reranker::load(&mut buf.as_slice(), wider, words_vocab()).unwrap_err();
        assert!(matches!(err, RerankerError::Dimension { .. }), "{err}");
        let peep = RerankerConfig { peepholes: true, ..tiny_config() };
        assert!(matches!(Reranker::load(&mut buf.as_slice(), peep, words_vocab()), Err(RerankerError::Dimension { found: None, .. })));
        let fewer = RerankerConfig { use_word_cnn: false, ..tiny_config() };
        assert!(Reranker::load(&mut buf.as_slice(), fewer, words_vocab()).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(RerankerConfig { use_lstm: false, use_word_cnn: false, ..Default::default() }.validate().is_err());
        assert!(RerankerConfig { word_cnn_window: 2, ..Default::default() }.validate().is_err());
        assert!(RerankerConfig { dropout: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn frozen_embeddings_leave_the_regularizer() {
        let mut m = model(tiny_config(), 18);
        let all = m.params.trainable_norm_sq();
        m.set_embeddings_trainable(false);
        let emb = m.params.get(m.param_id("word_emb").unwrap()).sum_sq();
        let mut fwd = Forward::new(&m, Mode::Eval, 0);
        let r = fwd.trainable_norm_sq();
        assert!((fwd.graph.value(r).data()[0] - (all - emb)).abs() < 1e-12);
    }
}
