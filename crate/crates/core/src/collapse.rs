//! Collapsed sentence patterns: every predicted entity mention is replaced
//! by a single token naming its type.

use std::fmt;

use log::warn;

use crate::corpus::{extract_spans, normalize_to_bio2, CorpusError, EntityType, LabelSequence, Sentence};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CollapsedItem {
    Word(String),
    TypeToken(EntityType),
}

impl CollapsedItem {
    /// String fed to the reranker vocabularies.
    pub fn as_str(&self) -> &str {
        match self {
            CollapsedItem::Word(w) => w,
            CollapsedItem::TypeToken(t) => t.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CollapsedSequence {
    pub items: Vec<CollapsedItem>,
    /// (sentence id, candidate index)
    pub source: (usize, usize),
}

impl CollapsedSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl fmt::Display for CollapsedSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&collapsed_token_strings(self).join(" "))
    }
}

/// Collapses a BIO2-valid labeling of `sentence`.
pub fn collapse(sentence: &Sentence, labels: &LabelSequence) -> Result<CollapsedSequence, CorpusError> {
    collapse_candidate(sentence, labels, 0)
}

pub fn collapse_candidate(sentence: &Sentence, labels: &LabelSequence, candidate: usize) -> Result<CollapsedSequence, CorpusError> {
    if sentence.len() != labels.len() {
        return Err(CorpusError::LengthMismatch { left: sentence.len(), right: labels.len() });
    }
    let spans = extract_spans(labels)?;
    let mut items = Vec::with_capacity(sentence.len());
    let mut spans = spans.into_iter().peekable();
    let mut i = 0;
    while i < sentence.len() {
        match spans.peek() {
            Some(span) if span.start == i => {
                items.push(CollapsedItem::TypeToken(span.entity_type));
                i = span.end + 1;
                spans.next();
            }
            _ => {
                let surface = sentence.tokens[i].surface();
                if surface.parse::<EntityType>().is_ok() {
                    warn!("sentence {}: word `{surface}` collides with a reserved type token", sentence.id);
                }
                items.push(CollapsedItem::Word(surface.to_string()));
                i += 1;
            }
        }
    }
    Ok(CollapsedSequence { items, source: (sentence.id, candidate) })
}

/// Like [`collapse_candidate`], normalizing invalid transitions first.
pub fn collapse_lenient(sentence: &Sentence, labels: &LabelSequence, candidate: usize) -> Result<CollapsedSequence, CorpusError> {
    collapse_candidate(sentence, &normalize_to_bio2(labels), candidate)
}

pub fn collapsed_token_strings(seq: &CollapsedSequence) -> Vec<String> {
    seq.items.iter().map(|item| item.as_str().to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::BioLabel;

    fn obama() -> Sentence {
        Sentence::from_words(0, &["Barack", "Obama", "was", "born", "in", "hawaii", "."]).unwrap()
    }

    fn seq(tags: &[&str]) -> LabelSequence {
        LabelSequence::parse_tags(tags).unwrap()
    }

    #[test]
    fn obama_patterns() {
        let c = collapse(&obama(), &seq(&["B-PER", "I-PER", "O", "O", "O", "B-LOC", "O"])).unwrap();
        assert_eq!(c.to_string(), "PER was born in LOC .");
        assert_eq!(collapsed_token_strings(&c), vec!["PER", "was", "born", "in", "LOC", "."]);
        let c = collapse(&obama(), &seq(&["B-LOC", "I-LOC", "O", "O", "O", "O", "O"])).unwrap();
        assert_eq!(c.to_string(), "LOC was born in hawaii .");
    }

    #[test]
    fn all_o_is_identity() {
        let s = obama();
        let c = collapse(&s, &LabelSequence::all_o(s.len())).unwrap();
        let words: Vec<_> = s.words().map(str::to_string).collect();
        assert_eq!(collapsed_token_strings(&c), words);
    }

    #[test]
    fn adjacent_entities_stay_separate() {
        let s = Sentence::from_words(3, &["A", "B"]).unwrap();
        let c = collapse_candidate(&s, &seq(&["B-PER", "B-PER"]), 4).unwrap();
        assert_eq!(collapsed_token_strings(&c), vec!["PER", "PER"]);
        assert_eq!(c.source, (3, 4));
    }

    #[test]
    fn rejects_invalid_or_misaligned() {
        let s = Sentence::from_words(0, &["a", "b"]).unwrap();
        assert!(collapse(&s, &seq(&["O", "I-PER"])).is_err());
        assert!(collapse(&s, &seq(&["O"])).is_err());
        let c = collapse_lenient(&s, &seq(&["O", "I-PER"]), 0).unwrap();
        assert_eq!(c.to_string(), "a PER");
    }

    fn valid_sequences(len: usize) -> Vec<LabelSequence> {
        let alphabet = [BioLabel::O, BioLabel::B(EntityType::Per), BioLabel::I(EntityType::Per), BioLabel::B(EntityType::Loc), BioLabel::I(EntityType::Loc)];
        let mut out: Vec<Vec<BioLabel>> = vec![vec![]];
        for _ in 0..len {
            out = out.into_iter().flat_map(|p| alphabet.iter().map(move |&l| [p.clone(), vec![l]].concat())).collect();
        }
        out.into_iter().map(LabelSequence).filter(LabelSequence::is_bio2_valid).collect()
    }

    /// True when two entities touch, the case where collapsing loses the
    /// boundary between them.
    fn has_touching_entities(labels: &LabelSequence) -> bool {
        labels.labels().windows(2).any(|w| w[0] != BioLabel::O && matches!(w[1], BioLabel::B(_)))
    }

    #[test]
    fn length_law_holds_exhaustively() {
        for len in 1..=4 {
            let words: Vec<String> = (0..len).map(|i| format!("w{i}")).collect();
            let s = Sentence::from_words(0, &words).unwrap();
            for labels in valid_sequences(len) {
                let c = collapse(&s, &labels).unwrap();
                let spans = extract_spans(&labels).unwrap();
                let entity_tokens: usize = spans.iter().map(|s| s.len()).sum();
                assert_eq!(c.len(), len - entity_tokens + spans.len());
            }
        }
    }

    #[test]
    fn touching_entities_collide() {
        let s = Sentence::from_words(0, &["a", "b", "c"]).unwrap();
        let left = collapse(&s, &seq(&["B-PER", "I-PER", "B-PER"])).unwrap();
        let right = collapse(&s, &seq(&["B-PER", "B-PER", "I-PER"])).unwrap();
        assert_eq!(collapsed_token_strings(&left), collapsed_token_strings(&right));
        let left = collapse(&s, &seq(&["B-PER", "I-PER", "B-LOC"])).unwrap();
        let right = collapse(&s, &seq(&["B-PER", "B-LOC", "I-LOC"])).unwrap();
        assert_eq!(collapsed_token_strings(&left), collapsed_token_strings(&right));
    }

    #[test]
    fn injective_when_entities_are_separated() {
        for len in 1..=4 {
            let words: Vec<String> = (0..len).map(|i| format!("w{i}")).collect();
            let s = Sentence::from_words(0, &words).unwrap();
            let mut seen = std::collections::HashMap::new();
            for labels in valid_sequences(len).into_iter().filter(|l| !has_touching_entities(l)) {
                let c = collapse(&s, &labels).unwrap();
                if let Some(prev) = seen.insert(collapsed_token_strings(&c), labels.clone()) {
                    panic!("{prev} and {labels} collapse identically");
                }
            }
        }
    }
}
