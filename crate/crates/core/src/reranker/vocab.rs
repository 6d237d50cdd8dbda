use std::collections::HashMap;
use std::fmt::Write as _;

use super::RerankerError;
use crate::collapse::CollapsedItem;
use crate::corpus::{EntityType, HEADER_MARKER};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_CHAR: usize = 0;
pub const UNK_CHAR: usize = 1;

const RESERVED_WORDS: [&str; 6] = ["<pad>", "<unk>", "PER", "LOC", "ORG", "MISC"];
const RESERVED_CHARS: [&str; 2] = ["<pad_char>", "<unk_char>"];

/// Word and character indices. Reserved word ids: `<pad>`=0, `<unk>`=1,
/// `PER`=2, `LOC`=3, `ORG`=4, `MISC`=5. Reserved char ids:
/// `<pad_char>`=0, `<unk_char>`=1.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    word_ids: HashMap<String, usize>,
    chars: Vec<String>,
    char_ids: HashMap<char, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    /// Only the reserved entries.
    pub fn new() -> Self {
        let words: Vec<String> = RESERVED_WORDS.iter().map(|s| s.to_string()).collect();
        let word_ids = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, word_ids, chars: RESERVED_CHARS.iter().map(|s| s.to_string()).collect(), char_ids: HashMap::new() }
    }

    /// Words seen at least `min_count` times in `train`, every word of
    /// `extra` (e.g. pretrained embedding tokens), and every character of
    /// the training words, in first-seen order.
    pub fn build<'a>(train: impl IntoIterator<Item = &'a str>, extra: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut vocab = Vocab::new();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order = Vec::new();
        for w in train {
            let c = counts.entry(w).or_insert(0);
            if *c == 0 {
                order.push(w);
            }
            *c += 1;
            for ch in w.chars() {
                vocab.add_char(ch);
            }
        }
        for w in order {
            if counts[w] >= min_count {
                vocab.add_word(w);
            }
        }
        for w in extra {
            vocab.add_word(w);
        }
        vocab
    }

    pub fn add_word(&mut self, word: &str) -> usize {
        if let Some(&id) = self.word_ids.get(word) {
            return id;
        }
        self.words.push(word.to_string());
        self.word_ids.insert(word.to_string(), self.words.len() - 1);
        self.words.len() - 1
    }

    pub fn add_char(&mut self, ch: char) -> usize {
        if let Some(&id) = self.char_ids.get(&ch) {
            return id;
        }
        self.chars.push(ch.to_string());
        self.char_ids.insert(ch, self.chars.len() - 1);
        self.chars.len() - 1
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    pub fn n_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Exact match, then lowercase, then `<unk>`.
    pub fn word_id(&self, word: &str) -> usize {
        if let Some(&id) = self.word_ids.get(word) {
            return id;
        }
        self.word_ids.get(&word.to_lowercase()).copied().unwrap_or(UNK)
    }

    pub fn type_id(t: EntityType) -> usize {
        2 + t.index()
    }

    pub fn item_id(&self, item: &CollapsedItem) -> usize {
        match item {
            CollapsedItem::TypeToken(t) => Self::type_id(*t),
            CollapsedItem::Word(w) => self.word_id(w),
        }
    }

    pub fn char_id(&self, ch: char) -> usize {
        self.char_ids.get(&ch).copied().unwrap_or(UNK_CHAR)
    }

    /// Character ids truncated or padded with `<pad_char>` to `len`.
    pub fn char_ids(&self, word: &str, len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = word.chars().take(len).map(|c| self.char_id(c)).collect();
        ids.resize(len, PAD_CHAR);
        ids
    }

    /// `words <n>` then one word per line, `chars <m>` then one char per
    /// line, both in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "words {}", self.words.len()).unwrap();
        for w in &self.words {
            writeln!(out, "{w}").unwrap();
        }
        writeln!(out, "chars {}", self.chars.len()).unwrap();
        for c in &self.chars {
            writeln!(out, "{c}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, RerankerError> {
        let bad = |m: &str| RerankerError::Vocab(m.to_string());
        let mut lines = text.lines().skip_while(|l| l.starts_with(HEADER_MARKER));
        let mut section = |tag: &str| -> Result<Vec<String>, RerankerError> {
            let head = lines.next().ok_or_else(|| bad("truncated vocabulary"))?;
            let n: usize =
                head.strip_prefix(tag).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad(&format!("expected `{tag} <count>`, found `{head}`")))?;
            (0..n).map(|_| lines.next().map(str::to_string).ok_or_else(|| bad("truncated vocabulary"))).collect()
        };
        let words = section("words ")?;
        let chars = section("chars ")?;
        if words.len() < RESERVED_WORDS.len()
            || words.iter().zip(RESERVED_WORDS).any(|(a, b)| a != b)
            || chars.len() < RESERVED_CHARS.len()
            || chars.iter().zip(RESERVED_CHARS).any(|(a, b)| a != b)
        {
            return Err(bad("reserved entries missing or out of place"));
        }
        let mut vocab = Vocab::new();
        for w in &words[RESERVED_WORDS.len()..] {
            vocab.add_word(w);
        }
        for c in &chars[RESERVED_CHARS.len()..] {
            let mut it = c.chars();
            match (it.next(), it.next()) {
                (Some(ch), None) => {
                    vocab.add_char(ch);
                }
                _ => return Err(bad(&format!("bad character entry `{c}`"))),
            }
        }
        if vocab.n_words() != words.len() || vocab.n_chars() != chars.len() {
            return Err(bad("duplicate entries"));
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocab::build(["Obama", "PER", "was"], [], 1);
        assert_eq!(v.word_id("<pad>"), PAD);
        assert_eq!(v.word_id("<unk>"), UNK);
        assert_eq!(v.item_id(&CollapsedItem::TypeToken(EntityType::Per)), 2);
        assert_eq!(v.item_id(&CollapsedItem::TypeToken(EntityType::Misc)), 5);
        assert_eq!(v.word_id("PER"), 2);
        assert_eq!(v.word_id("Obama"), 6);
    }

    #[test]
    fn lookup_falls_back() {
        let v = Vocab::build(["born"], ["hawaii"], 1);
        assert_eq!(v.word_id("Hawaii"), v.word_id("hawaii"));
        assert_eq!(v.word_id("Zanzibar"), UNK);
        assert_eq!(v.char_ids("bz", 4), vec![v.char_id('b'), UNK_CHAR, PAD_CHAR, PAD_CHAR]);
        assert_eq!(v.char_ids("born", 2).len(), 2);
    }

    #[test]
    fn min_count_filters_rare_words() {
        let v = Vocab::build(["a", "b", "a"], [], 2);
        assert_eq!(v.word_id("b"), UNK);
        assert_ne!(v.word_id("a"), UNK);
        assert_ne!(v.char_id('b'), UNK_CHAR);
    }

    #[test]
    fn text_roundtrip() {
        let v = Vocab::build(["Obama", "was", "née"], ["x"], 1);
        assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocab::from_text("words 1\n<pad>\nchars 0\n").is_err());
    }
}
