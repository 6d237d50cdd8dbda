//! CoNLL-style data model: tokens, BIO2 label sequences and entity spans.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Header lines written by this toolkit start with this marker and are
/// skipped by every reader.
pub const HEADER_MARKER: &str = "#nerrank";

const DOC_START: &str = "-DOCSTART-";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown entity type `{0}`")]
    UnknownEntityType(String),
    #[error("malformed label `{0}`")]
    MalformedLabel(String),
    #[error("invalid token `{0}`: tokens must be non-empty and contain no whitespace")]
    InvalidToken(String),
    #[error("label I-{found} at position {position} does not continue an entity of the same type")]
    InvalidBio { position: usize, found: EntityType },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("span {0} is out of range for a sentence of length {1}")]
    SpanOutOfRange(EntitySpan, usize),
    #[error("spans {0} and {1} overlap")]
    OverlappingSpans(EntitySpan, EntitySpan),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityType {
    Per,
    Loc,
    Org,
    Misc,
}

impl EntityType {
    pub const ALL: [EntityType; 4] = [EntityType::Per, EntityType::Loc, EntityType::Org, EntityType::Misc];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Loc => "LOC",
            EntityType::Org => "ORG",
            EntityType::Misc => "MISC",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "PER" => Ok(EntityType::Per),
            "LOC" => Ok(EntityType::Loc),
            "ORG" => Ok(EntityType::Org),
            "MISC" => Ok(EntityType::Misc),
            other => Err(CorpusError::UnknownEntityType(other.to_string())),
        }
    }
}

/// A position tag together with its entity type. `O` carries no type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BioLabel {
    O,
    B(EntityType),
    I(EntityType),
}

impl BioLabel {
    /// Every label in the fixed tag order used by the baseline tagger.
    pub const ALL: [BioLabel; 9] = [
        BioLabel::O,
        BioLabel::B(EntityType::Per),
        BioLabel::I(EntityType::Per),
        BioLabel::B(EntityType::Loc),
        BioLabel::I(EntityType::Loc),
        BioLabel::B(EntityType::Org),
        BioLabel::I(EntityType::Org),
        BioLabel::B(EntityType::Misc),
        BioLabel::I(EntityType::Misc),
    ];

    pub fn entity_type(self) -> Option<EntityType> {
        match self {
            BioLabel::O => None,
            BioLabel::B(t) | BioLabel::I(t) => Some(t),
        }
    }

    /// Position of this label in [`BioLabel::ALL`].
    pub fn index(self) -> usize {
        match self {
            BioLabel::O => 0,
            BioLabel::B(t) => 1 + 2 * t.index(),
            BioLabel::I(t) => 2 + 2 * t.index(),
        }
    }

    pub fn from_index(index: usize) -> Option<BioLabel> {
        BioLabel::ALL.get(index).copied()
    }
}

impl fmt::Display for BioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioLabel::O => f.write_str("O"),
            BioLabel::B(t) => write!(f, "B-{t}"),
            BioLabel::I(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for BioLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(BioLabel::O);
        }
        match s.split_once('-') {
            Some(("B", ty)) => Ok(BioLabel::B(ty.parse()?)),
            Some(("I", ty)) => Ok(BioLabel::I(ty.parse()?)),
            _ => Err(CorpusError::MalformedLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    surface: String,
    pos: Option<String>,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: Option<String>) -> Result<Self, CorpusError> {
        let surface = surface.into();
        if surface.is_empty() || surface.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidToken(surface));
        }
        Ok(Token { surface, pos })
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn pos(&self) -> Option<&str> {
        self.pos.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(id: usize, tokens: Vec<Token>) -> Self {
        Sentence { id, tokens }
    }

    /// Builds a sentence without part-of-speech tags from surface strings.
    pub fn from_words<S: AsRef<str>>(id: usize, words: &[S]) -> Result<Self, CorpusError> {
        let tokens = words.iter().map(|w| Token::new(w.as_ref(), None)).collect::<Result<Vec<_>, _>>()?;
        Ok(Sentence { id, tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(Token::surface)
    }

    pub fn has_pos(&self) -> bool {
        self.tokens.iter().all(|t| t.pos.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LabelSequence(pub Vec<BioLabel>);

impl LabelSequence {
    pub fn new(labels: Vec<BioLabel>) -> Self {
        LabelSequence(labels)
    }

    pub fn all_o(len: usize) -> Self {
        LabelSequence(vec![BioLabel::O; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[BioLabel] {
        &self.0
    }

    pub fn parse_tags<S: AsRef<str>>(tags: &[S]) -> Result<Self, CorpusError> {
        tags.iter().map(|t| t.as_ref().parse()).collect::<Result<Vec<_>, _>>().map(LabelSequence)
    }

    /// Index of the first `I-X` that does not continue an `X` segment.
    pub fn first_bio2_violation(&self) -> Option<usize> {
        let mut prev = BioLabel::O;
        for (i, &label) in self.0.iter().enumerate() {
            if let BioLabel::I(t) = label {
                if prev.entity_type() != Some(t) {
                    return Some(i);
                }
            }
            prev = label;
        }
        None
    }

    pub fn is_bio2_valid(&self) -> bool {
        self.first_bio2_violation().is_none()
    }
}

impl fmt::Display for LabelSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, label) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{label}")?;
        }
        Ok(())
    }
}

/// An entity mention covering tokens `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub entity_type: EntityType,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, entity_type: EntityType) -> Self {
        EntitySpan { start, end, entity_type }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for EntitySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{}]", self.entity_type, self.start, self.end)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub sentences: Vec<Sentence>,
    pub gold: Vec<LabelSequence>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Pushes a sentence with a fresh id equal to its load position.
    pub fn push(&mut self, tokens: Vec<Token>, gold: LabelSequence) -> Result<(), CorpusError> {
        if tokens.len() != gold.len() {
            return Err(CorpusError::LengthMismatch { left: tokens.len(), right: gold.len() });
        }
        let id = self.sentences.len();
        self.sentences.push(Sentence::new(id, tokens));
        self.gold.push(gold);
        Ok(())
    }

    /// Copies the sentences at `indices`, keeping their original ids.
    pub fn select(&self, indices: impl IntoIterator<Item = usize>) -> Dataset {
        let mut out = Dataset::default();
        for i in indices {
            out.sentences.push(self.sentences[i].clone());
            out.gold.push(self.gold[i].clone());
        }
        out
    }

    pub fn has_pos(&self) -> bool {
        !self.sentences.is_empty() && self.sentences.iter().all(Sentence::has_pos)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sentence, &LabelSequence)> {
        self.sentences.iter().zip(self.gold.iter())
    }
}

/// Parses whitespace-separated CoNLL columns. The last column is the NER
/// tag, the second is part-of-speech when at least three columns exist.
/// Tags are converted to BIO2.
pub fn parse_conll(text: &str) -> Result<Dataset, CorpusError> {
    let mut dataset = Dataset::default();
    let mut tokens = Vec::new();
    let mut labels = Vec::new();

    let flush = |tokens: &mut Vec<Token>, labels: &mut Vec<BioLabel>, dataset: &mut Dataset| {
        if !tokens.is_empty() {
            let gold = normalize_to_bio2(&LabelSequence(std::mem::take(labels)));
            dataset.push(std::mem::take(tokens), gold).expect("aligned by construction");
        }
    };

    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        if raw.starts_with(HEADER_MARKER) {
            continue;
        }
        let cols: Vec<&str> = raw.split_whitespace().collect();
        if cols.is_empty() {
            flush(&mut tokens, &mut labels, &mut dataset);
            continue;
        }
        if cols[0] == DOC_START {
            flush(&mut tokens, &mut labels, &mut dataset);
            continue;
        }
        if cols.len() < 2 {
            return Err(CorpusError::Parse { line: line_no, message: format!("expected at least 2 columns, found {}", cols.len()) });
        }
        let tag = cols[cols.len() - 1];
        let label: BioLabel = tag.parse().map_err(|e: CorpusError| CorpusError::Parse { line: line_no, message: e.to_string() })?;
        let pos = (cols.len() >= 3).then(|| cols[1].to_string());
        tokens.push(Token::new(cols[0], pos).expect("split_whitespace yields non-empty tokens"));
        labels.push(label);
    }
    flush(&mut tokens, &mut labels, &mut dataset);
    Ok(dataset)
}

/// Two-column `token<TAB>tag` text, sentences separated by blank lines,
/// preceded by an optional header comment.
pub fn write_conll(sentences: &[Sentence], labels: &[LabelSequence], header: Option<&str>) -> Result<String, CorpusError> {
    if sentences.len() != labels.len() {
        return Err(CorpusError::LengthMismatch { left: sentences.len(), right: labels.len() });
    }
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(h);
        out.push('\n');
    }
    for (sentence, seq) in sentences.iter().zip(labels) {
        if sentence.len() != seq.len() {
            return Err(CorpusError::LengthMismatch { left: sentence.len(), right: seq.len() });
        }
        for (token, label) in sentence.tokens.iter().zip(seq.labels()) {
            out.push_str(token.surface());
            out.push('\t');
            out.push_str(&label.to_string());
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

/// Rewrites any B/I/O sequence into BIO2 with conlleval chunk semantics:
/// an `I-X` that does not follow an `X` label opens a new chunk.
pub fn normalize_to_bio2(labels: &LabelSequence) -> LabelSequence {
    let mut prev = BioLabel::O;
    let out = labels
        .0
        .iter()
        .map(|&label| {
            let fixed = match label {
                BioLabel::I(t) if prev.entity_type() != Some(t) => BioLabel::B(t),
                other => other,
            };
            prev = label;
            fixed
        })
        .collect();
    LabelSequence(out)
}

/// Maximal `B-X (I-X)*` runs, ordered by start position.
pub fn extract_spans(labels: &LabelSequence) -> Result<Vec<EntitySpan>, CorpusError> {
    let mut spans = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (i, &label) in labels.0.iter().enumerate() {
        match label {
            BioLabel::O => spans.extend(open.take()),
            BioLabel::B(t) => {
                spans.extend(open.take());
                open = Some(EntitySpan::new(i, i, t));
            }
            BioLabel::I(t) => match open.as_mut() {
                Some(span) if span.entity_type == t => span.end = i,
                _ => return Err(CorpusError::InvalidBio { position: i, found: t }),
            },
        }
    }
    spans.extend(open);
    Ok(spans)
}

pub fn spans_to_labels(spans: &[EntitySpan], len: usize) -> Result<LabelSequence, CorpusError> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    for span in &sorted {
        if span.start > span.end || span.end >= len {
            return Err(CorpusError::SpanOutOfRange(*span, len));
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].start <= pair[0].end {
            return Err(CorpusError::OverlappingSpans(pair[0], pair[1]));
        }
    }
    let mut labels = vec![BioLabel::O; len];
    for span in &sorted {
        labels[span.start] = BioLabel::B(span.entity_type);
        for label in &mut labels[span.start + 1..=span.end] {
            *label = BioLabel::I(span.entity_type);
        }
    }
    Ok(LabelSequence(labels))
}

/// Fraction of positions where `cand` matches `gold` exactly.
pub fn tag_accuracy(gold: &LabelSequence, cand: &LabelSequence) -> Result<f64, CorpusError> {
    if gold.len() != cand.len() {
        return Err(CorpusError::LengthMismatch { left: gold.len(), right: cand.len() });
    }
    if gold.is_empty() {
        return Ok(1.0);
    }
    let matches = gold.0.iter().zip(&cand.0).filter(|(g, c)| g == c).count();
    Ok(matches as f64 / gold.len() as f64)
}
