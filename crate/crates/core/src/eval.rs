//! Chunk-level precision/recall/F1, sentence selection accuracy, oracle
//! curves over n-best lists and length-bucketed breakdowns.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::baseline::{BaselineError, NBestCorpus};
use crate::corpus::{extract_spans, normalize_to_bio2, tag_accuracy, CorpusError, EntitySpan, EntityType, LabelSequence};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("corpora are misaligned: {gold} gold vs {pred} predicted sentences")]
    Misaligned { gold: usize, pred: usize },
    #[error("sentence {index}: {source}")]
    Sentence { index: usize, source: CorpusError },
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Prf {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Prf {
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.true_positives as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.true_positives as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn add(&mut self, other: &Prf) {
        self.true_positives += other.true_positives;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrfReport {
    pub overall: Prf,
    pub per_type: BTreeMap<EntityType, Prf>,
}

impl PrfReport {
    pub fn f1(&self) -> f64 {
        self.overall.f1()
    }
}

fn spans(labels: &LabelSequence, index: usize) -> Result<Vec<EntitySpan>, EvalError> {
    extract_spans(&normalize_to_bio2(labels)).map_err(|source| EvalError::Sentence { index, source })
}

fn check_aligned<T, U>(gold: &[T], pred: &[U]) -> Result<(), EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::Misaligned { gold: gold.len(), pred: pred.len() });
    }
    Ok(())
}

/// Exact-match span scoring. Both sides are normalized to BIO2 first.
/// With `type_filter`, `overall` covers only that type.
pub fn chunk_prf(gold: &[LabelSequence], pred: &[LabelSequence], type_filter: Option<EntityType>) -> Result<PrfReport, EvalError> {
    check_aligned(gold, pred)?;
    let mut per_type: BTreeMap<EntityType, Prf> = EntityType::ALL.iter().map(|&t| (t, Prf::default())).collect();
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::Sentence { index, source: CorpusError::LengthMismatch { left: g.len(), right: p.len() } });
        }
        let gs = spans(g, index)?;
        let ps = spans(p, index)?;
        let gold_set: HashSet<&EntitySpan> = gs.iter().collect();
        for s in &gs {
            per_type.get_mut(&s.entity_type).unwrap().gold += 1;
        }
        for s in &ps {
            let entry = per_type.get_mut(&s.entity_type).unwrap();
            entry.predicted += 1;
            if gold_set.contains(s) {
                entry.true_positives += 1;
            }
        }
    }
    let mut overall = Prf::default();
    for (t, prf) in &per_type {
        if type_filter.is_none_or(|f| f == *t) {
            overall.add(prf);
        }
    }
    Ok(PrfReport { overall, per_type })
}

fn same_sequence(a: &LabelSequence, b: &LabelSequence) -> bool {
    normalize_to_bio2(a) == normalize_to_bio2(b)
}

/// Fraction of sentences whose selected sequence equals gold after BIO2
/// normalization. Zero for an empty corpus.
pub fn ssa(selections: &[LabelSequence], gold: &[LabelSequence]) -> Result<f64, EvalError> {
    check_aligned(gold, selections)?;
    if gold.is_empty() {
        return Ok(0.0);
    }
    let correct = selections.iter().zip(gold).filter(|(s, g)| same_sequence(s, g)).count();
    Ok(correct as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub n: usize,
    pub oba: f64,
    pub obf: f64,
    pub owf: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
}

impl OracleReport {
    pub fn row(&self, n: usize) -> Option<&OracleRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

/// Index of the candidate with the best (or worst) tag accuracy among the
/// first `n`; ties go to the lower index.
fn oracle_pick(gold: &LabelSequence, cands: &[LabelSequence], best: bool) -> Result<usize, CorpusError> {
    let mut chosen = 0;
    let mut chosen_acc = tag_accuracy(gold, &cands[0])?;
    for (i, c) in cands.iter().enumerate().skip(1) {
        let acc = tag_accuracy(gold, c)?;
        if (best && acc > chosen_acc) || (!best && acc < chosen_acc) {
            chosen = i;
            chosen_acc = acc;
        }
    }
    Ok(chosen)
}

/// Oracle-best sentence accuracy and oracle-best/worst F1 for every list
/// length `1..=n_max`.
pub fn oracle(nbest: &NBestCorpus, n_max: usize) -> Result<OracleReport, EvalError> {
    let gold = nbest.gold()?;
    let normalized: Vec<Vec<LabelSequence>> = nbest.sets.iter().map(|s| s.candidates.iter().map(|c| normalize_to_bio2(&c.labels)).collect()).collect();
    let mut report = OracleReport::default();
    for n in 1..=n_max {
        let mut best = Vec::with_capacity(gold.len());
        let mut worst = Vec::with_capacity(gold.len());
        for (index, (g, cands)) in gold.iter().zip(&normalized).enumerate() {
            let cands = &cands[..n.min(cands.len())];
            let wrap = |source| EvalError::Sentence { index, source };
            best.push(cands[oracle_pick(g, cands, true).map_err(wrap)?].clone());
            worst.push(cands[oracle_pick(g, cands, false).map_err(wrap)?].clone());
        }
        report.rows.push(OracleRow { n, oba: ssa(&best, &gold)?, obf: chunk_prf(&gold, &best, None)?.f1(), owf: chunk_prf(&gold, &worst, None)?.f1() });
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketRow {
    pub sentences: usize,
    pub correct: usize,
}

impl BucketRow {
    pub fn ssa(&self) -> f64 {
        self.correct as f64 / self.sentences as f64
    }
}

/// SSA per sentence-length bucket `(upper - width, upper]`, keyed by
/// `upper`. Empty buckets are absent.
pub fn length_bucket_ssa(selections: &[LabelSequence], gold: &[LabelSequence], bucket_width: usize) -> Result<BTreeMap<usize, BucketRow>, EvalError> {
    check_aligned(gold, selections)?;
    let width = bucket_width.max(1);
    let mut table: BTreeMap<usize, BucketRow> = BTreeMap::new();
    for (s, g) in selections.iter().zip(gold) {
        let upper = g.len().div_ceil(width) * width;
        let row = table.entry(upper).or_insert(BucketRow { sentences: 0, correct: 0 });
        row.sentences += 1;
        row.correct += usize::from(same_sequence(s, g));
    }
    Ok(table)
}

/// Flat `key = value` lines for a P/R/F1 report, percentages with two
/// decimals.
pub fn prf_key_values(prefix: &str, report: &PrfReport) -> String {
    let mut out = String::new();
    let mut line = |key: String, prf: &Prf| {
        writeln!(out, "{prefix}{key}precision = {:.2}", 100.0 * prf.precision()).unwrap();
        writeln!(out, "{prefix}{key}recall = {:.2}", 100.0 * prf.recall()).unwrap();
        writeln!(out, "{prefix}{key}f1 = {:.2}", 100.0 * prf.f1()).unwrap();
    };
    line(String::new(), &report.overall);
    for (t, prf) in &report.per_type {
        line(format!("{t}."), prf);
    }
    out
}

pub fn oracle_csv(report: &OracleReport) -> String {
    let mut out = String::from("n,oba,obf,owf\n");
    for r in &report.rows {
        writeln!(out, "{},{:.4},{:.4},{:.4}", r.n, 100.0 * r.oba, 100.0 * r.obf, 100.0 * r.owf).unwrap();
    }
    out
}

pub fn bucket_csv(table: &BTreeMap<usize, BucketRow>) -> String {
    let mut out = String::from("length_upper,sentences,correct,ssa\n");
    for (upper, row) in table {
        writeln!(out, "{upper},{},{},{:.4}", row.sentences, row.correct, 100.0 * row.ssa()).unwrap();
    }
    out
}

pub fn per_type_csv(report: &PrfReport) -> String {
    let mut out = String::from("type,tp,predicted,gold,precision,recall,f1\n");
    for (t, p) in &report.per_type {
        writeln!(out, "{t},{},{},{},{:.4},{:.4},{:.4}", p.true_positives, p.predicted, p.gold, 100.0 * p.precision(), 100.0 * p.recall(), 100.0 * p.f1())
            .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{Candidate, CandidateSet};
    use crate::corpus::{BioLabel, Sentence};
    use proptest::prelude::*;

    fn seq(tags: &[&str]) -> LabelSequence {
        LabelSequence::parse_tags(tags).unwrap()
    }

    #[test]
    fn identical_corpora_score_one() {
        let g = vec![seq(&["B-PER", "I-PER", "O", "B-LOC"]), seq(&["O", "B-ORG"])];
        let r = chunk_prf(&g, &g, None).unwrap();
        assert_eq!((r.overall.precision(), r.overall.recall(), r.f1()), (1.0, 1.0, 1.0));
    }

    #[test]
    fn wrong_type_and_boundary_errors() {
        let gold = vec![seq(&["B-PER", "I-PER", "O", "O", "O", "B-LOC", "O"])];
        let pred = vec![seq(&["B-LOC", "I-LOC", "O", "O", "O", "O", "O"])];
        let r = chunk_prf(&gold, &pred, None).unwrap();
        assert_eq!((r.overall.precision(), r.overall.recall(), r.f1()), (0.0, 0.0, 0.0));

        let gold = vec![seq(&["B-PER", "I-PER"])];
        let pred = vec![seq(&["B-PER", "O"])];
        let r = chunk_prf(&gold, &pred, None).unwrap();
        assert_eq!(r.overall, Prf { true_positives: 0, predicted: 1, gold: 1 });
        assert_eq!(r.f1(), 0.0);
    }

    #[test]
    fn type_filter_restricts_overall() {
        let gold = vec![seq(&["B-PER", "O", "B-LOC"])];
        let pred = vec![seq(&["B-PER", "O", "B-ORG"])];
        let per = chunk_prf(&gold, &pred, Some(EntityType::Per)).unwrap();
        assert_eq!(per.f1(), 1.0);
        let loc = chunk_prf(&gold, &pred, Some(EntityType::Loc)).unwrap();
        assert_eq!(loc.overall, Prf { true_positives: 0, predicted: 0, gold: 1 });
    }

    #[test]
    fn misaligned_corpora_error() {
        assert!(chunk_prf(&[seq(&["O"])], &[], None).is_err());
        assert!(chunk_prf(&[seq(&["O"])], &[seq(&["O", "O"])], None).is_err());
    }

    #[test]
    fn ssa_examples() {
        let g = vec![seq(&["O"]), seq(&["B-PER"]), seq(&["O", "O"]), seq(&["B-LOC"])];
        assert_eq!(ssa(&g, &g).unwrap(), 1.0);
        let sel = vec![seq(&["O"]), seq(&["O"]), seq(&["B-PER", "O"]), seq(&["B-PER"])];
        assert_eq!(ssa(&sel, &g).unwrap(), 0.25);
        // IOB1 I-PER is the same chunk as B-PER
        assert_eq!(ssa(&[seq(&["I-PER", "O"])], &[seq(&["B-PER", "O"])]).unwrap(), 1.0);
    }

    #[test]
    fn bucket_examples() {
        let g = vec![LabelSequence::all_o(7); 3];
        let table = length_bucket_ssa(&g, &g, 5).unwrap();
        assert_eq!(table.keys().copied().collect::<Vec<_>>(), vec![10]);
        assert!(length_bucket_ssa(&[], &[], 5).unwrap().is_empty());

        let gold = vec![LabelSequence::all_o(3), LabelSequence::all_o(4), LabelSequence::all_o(8), LabelSequence::all_o(10)];
        let mut sel = gold.clone();
        sel[0] = seq(&["B-PER", "O", "O"]);
        let table = length_bucket_ssa(&sel, &gold, 5).unwrap();
        assert_eq!(table[&5].ssa(), 0.5);
        assert_eq!(table[&10].ssa(), 1.0);
        // a length-5 sentence belongs to (0, 5]
        let t = length_bucket_ssa(&[LabelSequence::all_o(5)], &[LabelSequence::all_o(5)], 5).unwrap();
        assert!(t.contains_key(&5));
    }

    fn set(gold: &[&str], cands: &[&[&str]]) -> (Sentence, CandidateSet) {
        let n = cands.len() as f64;
        let words: Vec<String> = (0..gold.len()).map(|i| format!("w{i}")).collect();
        let candidates = cands.iter().enumerate().map(|(i, c)| Candidate { labels: seq(c), prob: (n - i as f64) / (n * (n + 1.0)) }).collect();
        (Sentence::from_words(0, &words).unwrap(), CandidateSet { sentence_id: 0, gold: Some(seq(gold)), candidates })
    }

    #[test]
    fn oracle_hand_enumeration() {
        // s1: gold at rank 2; s2: gold at rank 1; s3: gold never present.
        let mut corpus = NBestCorpus::default();
        for (s, c) in [
            set(&["B-PER", "O"], &[&["B-LOC", "O"], &["B-PER", "O"], &["O", "O"]]),
            set(&["O", "B-LOC"], &[&["O", "B-LOC"], &["O", "O"], &["B-ORG", "B-LOC"]]),
            set(&["B-ORG", "I-ORG"], &[&["B-ORG", "O"], &["B-ORG", "B-ORG"], &["O", "O"]]),
        ] {
            corpus.push(s, c);
        }
        let report = oracle(&corpus, 3).unwrap();
        // gold spans: PER[0,0], LOC[1,1], ORG[0,1] -> 3 gold spans.
        // n=1: picks LOC[0,0] | LOC[1,1] | ORG[0,0]: tp=1, pred=3 -> F1=1/3.
        let r1 = report.row(1).unwrap();
        assert_eq!(r1.oba, 1.0 / 3.0);
        assert!((r1.obf - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r1.owf, r1.obf);
        // n=2 best: B-PER O (acc 1) | O B-LOC (1) | first of the tied
        // B-ORG O / B-ORG B-ORG (acc 1/2) -> tp=2, pred=3 -> F1=2/3.
        // n=2 worst: B-LOC O (1/2) | O O (1/2) | B-ORG O (1/2, tie keeps
        // lower index) -> tp=0 -> F1=0.
        let r2 = report.row(2).unwrap();
        assert_eq!(r2.oba, 2.0 / 3.0);
        assert!((r2.obf - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r2.owf, 0.0);
        // n=3 best unchanged; worst: B-LOC O (1/2, ties keep index 0) |
        // O O | O O (0) -> tp=0 -> F1=0.
        let r3 = report.row(3).unwrap();
        assert_eq!(r3.oba, 2.0 / 3.0);
        assert!((r3.obf - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r3.owf, 0.0);
    }

    #[test]
    fn oracle_with_gold_everywhere_is_perfect() {
        let mut corpus = NBestCorpus::default();
        let (s, c) = set(&["B-PER", "O"], &[&["O", "O"], &["B-PER", "O"]]);
        corpus.push(s, c);
        let report = oracle(&corpus, 2).unwrap();
        assert_eq!(report.row(2).unwrap().oba, 1.0);
        assert_eq!(report.row(2).unwrap().obf, 1.0);
    }

    /// Span-set comparison written independently of `chunk_prf`.
    fn brute_counts(gold: &[LabelSequence], pred: &[LabelSequence]) -> (usize, usize, usize) {
        let collect = |c: &[LabelSequence]| -> Vec<(usize, usize, usize, EntityType)> {
            let mut out = Vec::new();
            for (k, s) in c.iter().enumerate() {
                let labels = s.labels();
                let mut i = 0;
                while i < labels.len() {
                    if let Some(t) = labels[i].entity_type() {
                        let mut j = i;
                        while j + 1 < labels.len() && labels[j + 1] == BioLabel::I(t) {
                            j += 1;
                        }
                        out.push((k, i, j, t));
                        i = j + 1;
                    } else {
                        i += 1;
                    }
                }
            }
            out
        };
        let g = collect(gold);
        let p = collect(pred);
        let tp = p.iter().filter(|x| g.contains(x)).count();
        (tp, p.len(), g.len())
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<LabelSequence>> {
        prop::collection::vec(prop::collection::vec((0..9usize).prop_map(|i| BioLabel::ALL[i]), 1..=6).prop_map(|v| normalize_to_bio2(&LabelSequence(v))), 1..5)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn agrees_with_brute_force((gold, pred) in arb_corpus().prop_flat_map(|g| {
            let shapes: Vec<usize> = g.iter().map(LabelSequence::len).collect();
            let pred = shapes.into_iter().map(|n| prop::collection::vec((0..9usize).prop_map(|i| BioLabel::ALL[i]), n..=n)
                .prop_map(|v| normalize_to_bio2(&LabelSequence(v)))).collect::<Vec<_>>();
            (Just(g), pred)
        })) {
            let report = chunk_prf(&gold, &pred, None).unwrap();
            let (tp, p, g) = brute_counts(&gold, &pred);
            prop_assert_eq!(report.overall, Prf { true_positives: tp, predicted: p, gold: g });
            let per_type_tp: usize = report.per_type.values().map(|x| x.true_positives).sum();
            prop_assert_eq!(per_type_tp, report.overall.true_positives);
        }
    }
}
