//! Command-line driver. One subcommand per invocation; every run writes a
//! manifest and a metrics file under `out_dir`.

use std::fmt::Write as _;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use thiserror::Error;

use crate::baseline::{crf_train, decode_corpus, jackknife_nbest, read_nbest, write_nbest, BaselineError, Clusters, CrfModel, NBestCorpus};
use crate::collapse::collapse_lenient;
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{parse_conll, write_conll, CorpusError, Dataset, LabelSequence, Sentence, HEADER_MARKER};
use crate::eval::{bucket_csv, chunk_prf, length_bucket_ssa, oracle, oracle_csv, per_type_csv, prf_key_values, ssa, EvalError};
use crate::experiment::{run_experiment, ExperimentConfig};
use crate::numerics::NumericsError;
use crate::pipeline::{alpha_search, make_examples, rerank, score_corpus, train, PipelineError, RerankerBundle};
use crate::reranker::{Embeddings, RerankerError};
use crate::synth::{generate, SynthConfig};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING_FILE: i32 = 3;
pub const EXIT_DIMENSION: i32 = 4;
pub const EXIT_FORMAT: i32 = 5;

const USAGE: &str = "usage: nerrank <command> [--config FILE] [--key value ...]

commands:
  baseline-train   train the CRF on `train`, write `model`
  baseline-decode  decode `input` with `model` into an n-best file
  jackknife        n-best lists for `train` by `folds`-fold jackknifing
  collapse         print collapsed patterns of the n-best file `input`
  rerank-train     train a reranker on `train_nbest`, select on `dev_nbest`
  rerank-decode    rerank the n-best file `input` with `reranker_dir`
  eval             score `pred` against `gold`
  oracle           oracle table of the n-best file `input`
  alpha-search     grid-search alpha on the n-best file `input`
  make-toy         write a synthetic train/dev/test corpus to `out_dir`
  experiment       baseline and every row of `variants` on train/dev/test
";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: file not found", .0.display())]
    MissingFile(PathBuf),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::MissingFile(_) => EXIT_MISSING_FILE,
            CliError::Dimension(_) => EXIT_DIMENSION,
            CliError::Format(_) => EXIT_FORMAT,
            CliError::Failed(_) => EXIT_FAILURE,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<RerankerError> for CliError {
    fn from(e: RerankerError) -> Self {
        match e {
            RerankerError::Dimension { .. } | RerankerError::EmbeddingDim { .. } | RerankerError::Config(_) => CliError::Dimension(e.to_string()),
            RerankerError::Embedding { .. } | RerankerError::Vocab(_) | RerankerError::Numerics(NumericsError::Checkpoint(_)) => {
                CliError::Format(e.to_string())
            }
            RerankerError::Io(io) => io.into(),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Format { .. }
            | BaselineError::Json(_)
            | BaselineError::InvalidCandidates { .. }
            | BaselineError::MissingGold(_)
            | BaselineError::LengthMismatch { .. } => CliError::Format(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Baseline(b) => b.into(),
            _ => CliError::Format(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Reranker(r) => r.into(),
            PipelineError::Baseline(b) => b.into(),
            PipelineError::Corpus(c) => c.into(),
            PipelineError::Eval(v) => v.into(),
            PipelineError::Io(io) => io.into(),
            PipelineError::Bundle(_) | PipelineError::MissingGold(_) | PipelineError::EmptyCandidates(_) => CliError::Format(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

/// Parses `argv` (without the program name), runs the subcommand and
/// returns the process exit status.
pub fn run(argv: &[String]) -> i32 {
    match dispatch(argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("nerrank: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprint!("{USAGE}");
            }
            e.exit_code()
        }
    }
}

/// Subcommand plus the config resolved from `--config` and overrides.
pub fn parse_args(argv: &[String]) -> Result<(String, RunConfig), CliError> {
    let (command, rest) = argv.split_first().ok_or_else(|| CliError::Usage("missing command".into()))?;
    if command.starts_with('-') {
        return Err(CliError::Usage(format!("expected a command, found `{command}`")));
    }
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < rest.len() {
        let arg = &rest[i];
        let key = arg.strip_prefix("--").ok_or_else(|| CliError::Usage(format!("unexpected argument `{arg}`")))?;
        if let Some((k, v)) = key.split_once('=') {
            pairs.push((k.replace('-', "_"), v.to_string()));
            i += 1;
        } else {
            let value = rest.get(i + 1).ok_or_else(|| CliError::Usage(format!("`--{key}` needs a value")))?;
            pairs.push((key.replace('-', "_"), value.clone()));
            i += 2;
        }
    }
    let mut config = RunConfig::default();
    for (k, v) in pairs.iter().filter(|(k, _)| k == "config") {
        let text = read_text(Path::new(v))?;
        config.apply_text(&text).map_err(|e| match e {
            ConfigError::Syntax { line } => CliError::Usage(format!("{k} {v}, line {line}: expected `key = value`")),
            other => other.into(),
        })?;
    }
    for (k, v) in pairs.iter().filter(|(k, _)| k != "config") {
        config.set(k, v)?;
    }
    config.validate()?;
    Ok((command.clone(), config))
}

fn dispatch(argv: &[String]) -> Result<(), CliError> {
    if matches!(argv.first().map(String::as_str), Some("-h" | "--help" | "help")) {
        print!("{USAGE}");
        return Ok(());
    }
    let (command, config) = parse_args(argv)?;
    let mut ctx = Run::new(&command, config);
    info!("{command}: seed {}, config {}", ctx.config.train.seed, ctx.config.hash());
    for (k, v) in ctx.config.entries() {
        info!("  {k} = {v}");
    }
    match command.as_str() {
        "baseline-train" => baseline_train(&mut ctx),
        "baseline-decode" => baseline_decode(&mut ctx),
        "jackknife" => jackknife(&mut ctx),
        "collapse" => collapse(&mut ctx),
        "rerank-train" => rerank_train(&mut ctx),
        "rerank-decode" => rerank_decode(&mut ctx),
        "eval" => eval(&mut ctx),
        "oracle" => oracle_cmd(&mut ctx),
        "alpha-search" => alpha_search_cmd(&mut ctx),
        "make-toy" => make_toy(&mut ctx),
        "experiment" => experiment(&mut ctx),
        other => return Err(CliError::Usage(format!("unknown command `{other}`"))),
    }?;
    ctx.finish()
}

struct Run {
    command: String,
    config: RunConfig,
    header: String,
    start: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    metrics: String,
}

impl Run {
    fn new(command: &str, config: RunConfig) -> Self {
        let header = config.header();
        Run { command: command.into(), config, header, start: Instant::now(), inputs: Vec::new(), outputs: Vec::new(), metrics: String::new() }
    }

    fn path(&mut self, key: &str, value: &str) -> Result<PathBuf, CliError> {
        if value.is_empty() {
            return Err(CliError::Usage(format!("{} needs `--{key}`", self.command)));
        }
        let p = PathBuf::from(value);
        self.inputs.push(p.clone());
        Ok(p)
    }

    fn read(&mut self, key: &str, value: &str) -> Result<String, CliError> {
        let p = self.path(key, value)?;
        read_text(&p)
    }

    fn conll(&mut self, key: &str, value: &str) -> Result<Dataset, CliError> {
        Ok(parse_conll(&self.read(key, value)?)?)
    }

    fn nbest(&mut self, key: &str, value: &str) -> Result<NBestCorpus, CliError> {
        Ok(read_nbest(&self.read(key, value)?)?)
    }

    fn crf_model(&mut self) -> Result<CrfModel, CliError> {
        let text = self.read("model", &self.config.model.clone())?;
        Ok(CrfModel::from_json(strip_header(&text))?)
    }

    fn clusters(&mut self) -> Result<Option<Clusters>, CliError> {
        if self.config.clusters.is_empty() {
            warn!("no cluster file given, cluster features disabled");
            return Ok(None);
        }
        Ok(Some(Clusters::parse(&self.read("clusters", &self.config.clusters.clone())?)))
    }

    fn embeddings(&mut self) -> Result<Option<Embeddings>, CliError> {
        if self.config.embeddings.is_empty() {
            return Ok(None);
        }
        let text = self.read("embeddings", &self.config.embeddings.clone())?;
        Ok(Some(Embeddings::parse(&text, self.config.train.reranker.word_dim)?))
    }

    fn bundle(&mut self) -> Result<RerankerBundle, CliError> {
        let dir = self.path("reranker_dir", &self.config.reranker_dir.clone())?;
        if !dir.is_dir() {
            return Err(CliError::MissingFile(dir));
        }
        RerankerBundle::load(&dir, &self.config.train).map_err(|e| match e {
            PipelineError::Io(io) if io.kind() == ErrorKind::NotFound => CliError::MissingFile(dir),
            other => other.into(),
        })
    }

    /// Writes `body` after the header line.
    fn write(&mut self, path: &Path, body: &str) -> Result<(), CliError> {
        let text = format!("{}\n{body}", self.header);
        write_file(path, &text)?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn write_headed(&mut self, path: &Path, text: &str) -> Result<(), CliError> {
        write_file(path, text)?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn out(&self, default_name: &str) -> PathBuf {
        self.config.out_path(default_name)
    }

    fn metric(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.metrics, "{key} = {value}").unwrap();
    }

    fn finish(mut self) -> Result<(), CliError> {
        let dir = PathBuf::from(&self.config.out_dir);
        let metrics_path = dir.join(format!("{}.metrics", self.command));
        let body = std::mem::take(&mut self.metrics);
        self.write(&metrics_path, &body)?;
        let mut manifest = String::new();
        writeln!(manifest, "command = {}", self.command).unwrap();
        writeln!(manifest, "version = {}", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(manifest, "config_hash = {}", self.config.hash()).unwrap();
        writeln!(manifest, "seconds = {:.3}", self.start.elapsed().as_secs_f64()).unwrap();
        for p in &self.inputs {
            writeln!(manifest, "input = {}", p.display()).unwrap();
        }
        for p in &self.outputs {
            writeln!(manifest, "output = {}", p.display()).unwrap();
        }
        manifest.push_str(&self.config.to_text());
        let manifest_path = dir.join(format!("{}.manifest", self.command));
        self.write(&manifest_path, &manifest)
    }
}

fn strip_header(text: &str) -> &str {
    if text.starts_with(HEADER_MARKER) {
        text.split_once('\n').map_or("", |(_, rest)| rest)
    } else {
        text
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => CliError::MissingFile(path.to_path_buf()),
        ErrorKind::InvalidData => CliError::Format(format!("{}: not UTF-8 text", path.display())),
        _ => CliError::Failed(format!("{}: {e}", path.display())),
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn predictions(sentences: &[Sentence], labels: &[LabelSequence], header: &str) -> Result<String, CliError> {
    Ok(write_conll(sentences, labels, Some(header))?)
}

fn record_prf(ctx: &mut Run, prefix: &str, gold: &[LabelSequence], pred: &[LabelSequence]) -> Result<f64, CliError> {
    let report = chunk_prf(gold, pred, None)?;
    ctx.metrics.push_str(&prf_key_values(prefix, &report));
    ctx.metric(&format!("{prefix}ssa"), format!("{:.2}", 100.0 * ssa(pred, gold)?));
    Ok(report.f1())
}

fn baseline_train(ctx: &mut Run) -> Result<(), CliError> {
    let data = ctx.conll("train", &ctx.config.train_file.clone())?;
    let clusters = ctx.clusters()?;
    let (model, log) = crf_train(&data, &ctx.config.templates.set(), clusters, &ctx.config.crf())?;
    ctx.metric("sentences", data.len());
    ctx.metric("features", model.n_features());
    for (epoch, nll) in log.epoch_nll.iter().enumerate() {
        ctx.metric(&format!("epoch.{epoch}.nll"), nll);
    }
    let path = if ctx.config.model.is_empty() { ctx.out("baseline.json") } else { PathBuf::from(&ctx.config.model) };
    ctx.write(&path, &model.to_json()?)?;
    println!("trained CRF on {} sentences, {} features -> {}", data.len(), model.n_features(), path.display());
    Ok(())
}

fn baseline_decode(ctx: &mut Run) -> Result<(), CliError> {
    let model = ctx.crf_model()?;
    let data = ctx.conll("input", &ctx.config.input.clone())?;
    let corpus = decode_corpus(&model, &data, ctx.config.train.n_best);
    let path = ctx.out("decoded.nbest");
    let text = write_nbest(&corpus, Some(&ctx.header));
    ctx.write_headed(&path, &text)?;
    let one_best = corpus.one_best();
    let header = ctx.header.clone();
    let one_best_path = PathBuf::from(format!("{}.1best.conll", path.display()));
    ctx.write_headed(&one_best_path, &predictions(&corpus.sentences, &one_best, &header)?)?;
    ctx.metric("sentences", corpus.len());
    let f1 = record_prf(ctx, "", &corpus.gold()?, &one_best)?;
    println!("decoded {} sentences, 1-best F1 = {:.2} -> {}", corpus.len(), 100.0 * f1, path.display());
    Ok(())
}

fn jackknife(ctx: &mut Run) -> Result<(), CliError> {
    let data = ctx.conll("train", &ctx.config.train_file.clone())?;
    let clusters = ctx.clusters()?;
    let c = &ctx.config;
    let out = jackknife_nbest(&data, c.folds, c.train.n_best, &c.templates.set(), clusters.as_ref(), &c.crf())?;
    for (fold, ids) in out.folds.iter().enumerate() {
        ctx.metric(&format!("fold.{fold}.sentences"), ids.len());
    }
    let path = ctx.out("train.nbest");
    let text = write_nbest(&out.corpus, Some(&ctx.header));
    ctx.write_headed(&path, &text)?;
    println!("jackknifed {} sentences over {} folds -> {}", out.corpus.len(), ctx.config.folds, path.display());
    Ok(())
}

fn collapse(ctx: &mut Run) -> Result<(), CliError> {
    let corpus = ctx.nbest("input", &ctx.config.input.clone())?;
    let mut body = String::new();
    for (sentence, set) in corpus.iter() {
        for (i, cand) in set.candidates.iter().enumerate() {
            let pattern = collapse_lenient(sentence, &cand.labels, i)?;
            writeln!(body, "{}\t{i}\t{:.6}\t{pattern}", set.sentence_id, cand.prob).unwrap();
        }
    }
    print!("{body}");
    let path = ctx.out("collapsed.txt");
    ctx.write(&path, &body)
}

fn rerank_train(ctx: &mut Run) -> Result<(), CliError> {
    let train_nbest = ctx.nbest("train_nbest", &ctx.config.train_nbest.clone())?;
    let dev_nbest = ctx.nbest("dev_nbest", &ctx.config.dev_nbest.clone())?;
    let pretrained = ctx.embeddings()?;
    let examples = make_examples(&train_nbest)?;
    let outcome = train(&examples, &dev_nbest, &ctx.config.train, pretrained.as_ref())?;
    for r in &outcome.history {
        if let Some(l) = r.train_loss {
            ctx.metric(&format!("epoch.{}.train_loss", r.epoch), l);
        }
        ctx.metric(&format!("epoch.{}.dev_f1", r.epoch), format!("{:.4}", 100.0 * r.dev_f1));
        ctx.metric(&format!("epoch.{}.alpha", r.epoch), r.alpha);
    }
    ctx.metric("examples", examples.len());
    ctx.metric("best_epoch", outcome.best_epoch);
    ctx.metric("alpha", outcome.bundle.alpha);
    ctx.metric("dev_f1", format!("{:.4}", 100.0 * outcome.history[outcome.best_epoch].dev_f1));
    let dir = if ctx.config.reranker_dir.is_empty() { Path::new(&ctx.config.out_dir).join("reranker") } else { PathBuf::from(&ctx.config.reranker_dir) };
    outcome.bundle.save(&dir, Some(&ctx.header))?;
    ctx.outputs.push(dir.clone());
    println!(
        "best epoch {} alpha {} dev F1 = {:.2} -> {}",
        outcome.best_epoch,
        outcome.bundle.alpha,
        100.0 * outcome.history[outcome.best_epoch].dev_f1,
        dir.display()
    );
    Ok(())
}

fn rerank_decode(ctx: &mut Run) -> Result<(), CliError> {
    let mut bundle = ctx.bundle()?;
    if let Some(a) = ctx.config.alpha {
        bundle.alpha = a;
    }
    let corpus = ctx.nbest("input", &ctx.config.input.clone())?;
    let selected = rerank(&bundle, &corpus)?;
    let path = ctx.out("predictions.conll");
    let header = ctx.header.clone();
    ctx.write_headed(&path, &predictions(&corpus.sentences, &selected, &header)?)?;
    ctx.metric("alpha", bundle.alpha);
    ctx.metric("sentences", corpus.len());
    if corpus.sets.iter().all(|s| s.gold.is_some()) {
        let f1 = record_prf(ctx, "", &corpus.gold()?, &selected)?;
        println!("reranked {} sentences at alpha {}, F1 = {:.2} -> {}", corpus.len(), bundle.alpha, 100.0 * f1, path.display());
    } else {
        println!("reranked {} sentences at alpha {} -> {}", corpus.len(), bundle.alpha, path.display());
    }
    Ok(())
}

fn eval(ctx: &mut Run) -> Result<(), CliError> {
    let gold = ctx.conll("gold", &ctx.config.gold.clone())?;
    let pred = ctx.conll("pred", &ctx.config.pred.clone())?;
    if gold.len() != pred.len() {
        return Err(CliError::Format(format!("gold has {} sentences, predictions {}", gold.len(), pred.len())));
    }
    for (i, (g, p)) in gold.sentences.iter().zip(&pred.sentences).enumerate() {
        if !g.words().eq(p.words()) {
            return Err(CliError::Format(format!("sentence {i}: gold and prediction tokens differ")));
        }
    }
    let report = chunk_prf(&gold.gold, &pred.gold, None)?;
    let s = ssa(&pred.gold, &gold.gold)?;
    println!(
        "sentences = {}\nprecision = {:.2}\nrecall = {:.2}\nF1 = {:.2}\nSSA = {:.2}",
        gold.len(),
        100.0 * report.overall.precision(),
        100.0 * report.overall.recall(),
        100.0 * report.f1(),
        100.0 * s
    );
    for (t, prf) in &report.per_type {
        println!("{t}: P = {:.2} R = {:.2} F1 = {:.2}", 100.0 * prf.precision(), 100.0 * prf.recall(), 100.0 * prf.f1());
    }
    ctx.metric("sentences", gold.len());
    ctx.metrics.push_str(&prf_key_values("", &report));
    ctx.metric("ssa", format!("{:.2}", 100.0 * s));
    let dir = PathBuf::from(&ctx.config.out_dir);
    ctx.write(&dir.join("eval.per_type.csv"), &per_type_csv(&report))?;
    let buckets = length_bucket_ssa(&pred.gold, &gold.gold, ctx.config.bucket_width)?;
    ctx.write(&dir.join("eval.buckets.csv"), &bucket_csv(&buckets))
}

fn oracle_cmd(ctx: &mut Run) -> Result<(), CliError> {
    let corpus = ctx.nbest("input", &ctx.config.input.clone())?;
    let report = oracle(&corpus, ctx.config.train.n_best)?;
    let csv = oracle_csv(&report);
    print!("{csv}");
    for r in &report.rows {
        ctx.metric(&format!("n.{}.oba", r.n), format!("{:.4}", 100.0 * r.oba));
        ctx.metric(&format!("n.{}.obf", r.n), format!("{:.4}", 100.0 * r.obf));
        ctx.metric(&format!("n.{}.owf", r.n), format!("{:.4}", 100.0 * r.owf));
    }
    let path = ctx.out("oracle.csv");
    ctx.write(&path, &csv)
}

fn alpha_search_cmd(ctx: &mut Run) -> Result<(), CliError> {
    let bundle = ctx.bundle()?;
    let corpus = ctx.nbest("input", &ctx.config.input.clone())?;
    let search = alpha_search(&score_corpus(&bundle.model, &corpus)?)?;
    let mut csv = String::from("alpha,f1\n");
    for (a, f) in &search.evaluations {
        writeln!(csv, "{a},{:.4}", 100.0 * f).unwrap();
    }
    ctx.metric("alpha", search.alpha);
    ctx.metric("f1", format!("{:.4}", 100.0 * search.f1));
    ctx.metric("evaluations", search.evaluations.len());
    println!("alpha = {}\nF1 = {:.2}", search.alpha, 100.0 * search.f1);
    let path = ctx.out("alpha.csv");
    ctx.write(&path, &csv)
}

fn make_toy(ctx: &mut Run) -> Result<(), CliError> {
    let corpus = generate(&SynthConfig { sentences: ctx.config.toy_sentences, seed: ctx.config.train.seed, ..Default::default() });
    let dir = PathBuf::from(&ctx.config.out_dir);
    let header = ctx.header.clone();
    for (name, data) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        ctx.write_headed(&dir.join(format!("{name}.conll")), &predictions(&data.sentences, &data.gold, &header)?)?;
        ctx.metric(&format!("{name}.sentences"), data.len());
    }
    println!("wrote {}/{{train,dev,test}}.conll", dir.display());
    Ok(())
}

fn experiment(ctx: &mut Run) -> Result<(), CliError> {
    let train_set = ctx.conll("train", &ctx.config.train_file.clone())?;
    let dev_set = ctx.conll("dev", &ctx.config.dev_file.clone())?;
    let test_set = ctx.conll("test", &ctx.config.test_file.clone())?;
    let clusters = ctx.clusters()?;
    let pretrained = ctx.embeddings()?;
    let c = &ctx.config;
    let config = ExperimentConfig { templates: c.templates.set(), crf: c.crf(), folds: c.folds, train: c.train.clone(), variants: c.variants.clone() };
    let report = run_experiment(&train_set, &dev_set, &test_set, &config, clusters.as_ref(), pretrained.as_ref())?;
    let table = report.table();
    print!("{table}");
    let dir = PathBuf::from(&ctx.config.out_dir);
    let header = ctx.header.clone();
    for row in std::iter::once(&report.baseline).chain(&report.rows) {
        let key = row.name.trim_start_matches('+');
        ctx.metric(&format!("{key}.f1"), format!("{:.4}", 100.0 * row.f1));
        ctx.metric(&format!("{key}.ssa"), format!("{:.4}", 100.0 * row.ssa));
        ctx.metric(&format!("{key}.alpha"), row.alpha);
        ctx.metric(&format!("{key}.best_epoch"), row.best_epoch);
        let text = predictions(&report.test_nbest.sentences, &row.predictions, &header)?;
        ctx.write_headed(&dir.join(format!("predictions.{key}.conll")), &text)?;
    }
    ctx.write(&dir.join("experiment.table"), &table)?;
    ctx.write(&dir.join("experiment.oracle.csv"), &oracle_csv(&report.test_oracle))
}
