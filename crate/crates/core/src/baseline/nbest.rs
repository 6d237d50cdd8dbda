//! N-best candidate lists and their plain-text interchange format.
//!
//! ```text
//! #SENT <id>
//! TOKENS<TAB>tok1<TAB>tok2...
//! GOLD<TAB>tag1<TAB>tag2...          (optional)
//! CAND<TAB><probability><TAB>tag1...  (one per candidate, best first)
//! <blank line>
//! ```

use std::fmt::Write as _;

use super::BaselineError;
use crate::corpus::{LabelSequence, Sentence, Token, HEADER_MARKER};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub labels: LabelSequence,
    pub prob: f64,
}

/// Candidates for one sentence, most probable first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub sentence_id: usize,
    pub gold: Option<LabelSequence>,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn truncated(&self, n: usize) -> CandidateSet {
        CandidateSet { candidates: self.candidates.iter().take(n).cloned().collect(), ..self.clone() }
    }

    /// Checks the ordering and range invariants on probabilities.
    pub fn validate(&self) -> Result<(), BaselineError> {
        let bad = |reason: &str| BaselineError::InvalidCandidates { sentence: self.sentence_id, reason: reason.to_string() };
        if self.candidates.is_empty() {
            return Err(bad("no candidates"));
        }
        if self.candidates.iter().any(|c| !(c.prob > 0.0 && c.prob <= 1.0)) {
            return Err(bad("probability outside (0, 1]"));
        }
        if self.candidates.windows(2).any(|w| w[0].prob < w[1].prob) {
            return Err(bad("probabilities not in descending order"));
        }
        if self.candidates.iter().map(|c| c.prob).sum::<f64>() > 1.0 + 1e-9 {
            return Err(bad("probabilities sum above 1"));
        }
        Ok(())
    }
}

/// Candidate sets aligned with the sentences they label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NBestCorpus {
    pub sentences: Vec<Sentence>,
    pub sets: Vec<CandidateSet>,
}

impl NBestCorpus {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn push(&mut self, sentence: Sentence, set: CandidateSet) {
        self.sentences.push(sentence);
        self.sets.push(set);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sentence, &CandidateSet)> {
        self.sentences.iter().zip(&self.sets)
    }

    pub fn truncated(&self, n: usize) -> NBestCorpus {
        NBestCorpus { sentences: self.sentences.clone(), sets: self.sets.iter().map(|s| s.truncated(n)).collect() }
    }

    pub fn max_candidates(&self) -> usize {
        self.sets.iter().map(CandidateSet::len).max().unwrap_or(0)
    }

    /// Gold sequences, or an error naming the first sentence without one.
    pub fn gold(&self) -> Result<Vec<LabelSequence>, BaselineError> {
        self.sets.iter().map(|s| s.gold.clone().ok_or(BaselineError::MissingGold(s.sentence_id))).collect()
    }

    /// Top candidate of every sentence.
    pub fn one_best(&self) -> Vec<LabelSequence> {
        self.sets.iter().map(|s| s.candidates[0].labels.clone()).collect()
    }
}

fn join_tags(labels: &LabelSequence) -> String {
    labels.labels().iter().map(|l| l.to_string()).collect::<Vec<_>>().join("\t")
}

/// Serializes `corpus`, preceded by an optional header comment line.
pub fn write_nbest(corpus: &NBestCorpus, header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        writeln!(out, "{h}").unwrap();
    }
    for (sentence, set) in corpus.iter() {
        writeln!(out, "#SENT {}", set.sentence_id).unwrap();
        let words: Vec<&str> = sentence.words().collect();
        writeln!(out, "TOKENS\t{}", words.join("\t")).unwrap();
        if let Some(gold) = &set.gold {
            writeln!(out, "GOLD\t{}", join_tags(gold)).unwrap();
        }
        for cand in &set.candidates {
            writeln!(out, "CAND\t{:.16e}\t{}", cand.prob, join_tags(&cand.labels)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn read_nbest(text: &str) -> Result<NBestCorpus, BaselineError> {
    let mut corpus = NBestCorpus::default();
    let mut current: Option<(Sentence, CandidateSet)> = None;
    let err = |line: usize, message: String| BaselineError::Format { line, message };

    let finish = |current: &mut Option<(Sentence, CandidateSet)>, corpus: &mut NBestCorpus, line: usize| {
        if let Some((sentence, set)) = current.take() {
            if sentence.is_empty() {
                return Err(err(line, format!("sentence {} has no TOKENS line", set.sentence_id)));
            }
            set.validate()?;
            corpus.push(sentence, set);
        }
        Ok(())
    };

    for (index, line) in text.lines().enumerate() {
        let line_no = index + 1;
        if line.starts_with(HEADER_MARKER) {
            continue;
        }
        if line.trim().is_empty() {
            finish(&mut current, &mut corpus, line_no)?;
            continue;
        }
        if let Some(id) = line.strip_prefix("#SENT ") {
            finish(&mut current, &mut corpus, line_no)?;
            let id: usize = id.trim().parse().map_err(|_| err(line_no, format!("bad sentence id `{id}`")))?;
            current = Some((Sentence::new(id, Vec::new()), CandidateSet { sentence_id: id, gold: None, candidates: Vec::new() }));
            continue;
        }
        let Some((sentence, set)) = current.as_mut() else {
            return Err(err(line_no, "record outside a #SENT block".into()));
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let check_len = |n: usize| {
            if n != sentence.len() {
                Err(err(line_no, format!("expected {} tags, found {n}", sentence.len())))
            } else {
                Ok(())
            }
        };
        match fields[0] {
            "TOKENS" => {
                sentence.tokens = fields[1..].iter().map(|w| Token::new(*w, None)).collect::<Result<_, _>>().map_err(|e| err(line_no, e.to_string()))?;
            }
            "GOLD" => {
                check_len(fields.len() - 1)?;
                set.gold = Some(LabelSequence::parse_tags(&fields[1..]).map_err(|e| err(line_no, e.to_string()))?);
            }
            "CAND" => {
                if fields.len() < 2 {
                    return Err(err(line_no, "CAND line without probability".into()));
                }
                let prob: f64 = fields[1].parse().map_err(|_| err(line_no, format!("bad probability `{}`", fields[1])))?;
                check_len(fields.len() - 2)?;
                let labels = LabelSequence::parse_tags(&fields[2..]).map_err(|e| err(line_no, e.to_string()))?;
                set.candidates.push(Candidate { labels, prob });
            }
            other => return Err(err(line_no, format!("unknown record `{other}`"))),
        }
    }
    finish(&mut current, &mut corpus, text.lines().count() + 1)?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> NBestCorpus {
        let mut corpus = NBestCorpus::default();
        let s = Sentence::from_words(7, &["Barack", "Obama", "spoke"]).unwrap();
        let set = CandidateSet {
            sentence_id: 7,
            gold: Some(LabelSequence::parse_tags(&["B-PER", "I-PER", "O"]).unwrap()),
            candidates: vec![
                Candidate { labels: LabelSequence::parse_tags(&["B-PER", "I-PER", "O"]).unwrap(), prob: 0.612345678901234 },
                Candidate { labels: LabelSequence::parse_tags(&["B-LOC", "I-LOC", "O"]).unwrap(), prob: 1.0e-7 / 3.0 },
            ],
        };
        corpus.push(s, set);
        corpus
    }

    #[test]
    fn roundtrip_is_exact() {
        let text = write_nbest(&sample(), Some("#nerrank test"));
        assert!(text.contains("#SENT 7\nTOKENS\tBarack\tObama\tspoke\nGOLD\tB-PER\tI-PER\tO\nCAND\t6.12345678901234"));
        assert_eq!(read_nbest(&text).unwrap(), sample());
    }

    #[test]
    fn gold_is_optional() {
        let text = "#SENT 0\nTOKENS\ta\nCAND\t1.0\tO\n\n";
        let corpus = read_nbest(text).unwrap();
        assert_eq!(corpus.sets[0].gold, None);
        assert!(corpus.gold().is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_nbest("TOKENS\ta\n").is_err());
        assert!(read_nbest("#SENT 0\nTOKENS\ta\tb\nCAND\t0.5\tO\n\n").is_err());
        assert!(read_nbest("#SENT 0\nTOKENS\ta\nCAND\t0.2\tO\nCAND\t0.5\tB-PER\n\n").is_err());
        assert!(read_nbest("#SENT 0\nTOKENS\ta\n\n").is_err());
        assert!(read_nbest("#SENT 0\nTOKENS\ta\nCAND\t0.5\tB-FOO\n\n").is_err());
    }
}
