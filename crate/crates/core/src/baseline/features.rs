//! Discrete feature templates for the baseline tagger.

use std::collections::HashMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;

const BOS: &str = "<S>";
const EOS: &str = "</S>";

/// Which template families are active. Every family is instantiated at
/// each of `offsets` relative to the current position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureTemplateSet {
    pub word_unigram: bool,
    pub word_bigram: bool,
    pub shape: bool,
    pub capital: bool,
    pub capital_word: bool,
    pub connect: bool,
    pub capital_connect: bool,
    pub cluster: bool,
    pub prefix_suffix: bool,
    pub pos_grams: bool,
    pub pos_word: bool,
    pub offsets: Vec<isize>,
}

impl Default for FeatureTemplateSet {
    fn default() -> Self {
        Self::full()
    }
}

impl FeatureTemplateSet {
    pub fn full() -> Self {
        FeatureTemplateSet {
            word_unigram: true,
            word_bigram: true,
            shape: true,
            capital: true,
            capital_word: true,
            connect: true,
            capital_connect: true,
            cluster: true,
            prefix_suffix: true,
            pos_grams: true,
            pos_word: true,
            offsets: vec![-1, 0],
        }
    }

    /// Word identity, shape, capitalization and affixes only.
    pub fn lexical() -> Self {
        FeatureTemplateSet {
            word_bigram: false,
            capital_word: false,
            connect: false,
            capital_connect: false,
            cluster: false,
            pos_grams: false,
            pos_word: false,
            ..Self::full()
        }
    }

    /// Disables the templates whose inputs are unavailable.
    pub fn resolve(&self, has_pos: bool, has_clusters: bool) -> Self {
        let mut out = self.clone();
        if !has_pos && (out.pos_grams || out.pos_word) {
            out.pos_grams = false;
            out.pos_word = false;
        }
        if !has_clusters && out.cluster {
            warn!("no cluster file supplied; cluster features disabled");
            out.cluster = false;
        }
        out
    }
}

/// Brown-style word clusters read from `cluster-id token` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clusters(HashMap<String, String>);

impl Clusters {
    pub fn parse(text: &str) -> Self {
        let map = text
            .lines()
            .filter_map(|line| {
                let mut cols = line.split_whitespace();
                let id = cols.next()?;
                let token = cols.next()?;
                Some((token.to_string(), id.to_string()))
            })
            .collect();
        Clusters(map)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn get(&self, word: &str) -> &str {
        self.0.get(word).map(String::as_str).unwrap_or("<none>")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Character classes (upper `A`, lower `a`, digit `d`, anything else `x`)
/// with consecutive repeats collapsed.
pub fn shape(word: &str) -> String {
    let mut out = String::new();
    for c in word.chars() {
        let class = if c.is_ascii_uppercase() {
            'A'
        } else if c.is_ascii_lowercase() {
            'a'
        } else if c.is_ascii_digit() {
            'd'
        } else {
            'x'
        };
        if !out.ends_with(class) {
            out.push(class);
        }
    }
    out
}

pub fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

pub fn connect_class(word: &str) -> &'static str {
    match word.to_ascii_lowercase().as_str() {
        "of" => "of",
        "and" => "and",
        "for" => "for",
        "-" => "-",
        _ => "other",
    }
}

fn word_at(sentence: &Sentence, index: isize) -> &str {
    if index < 0 {
        BOS
    } else {
        sentence.tokens.get(index as usize).map(|t| t.surface()).unwrap_or(EOS)
    }
}

fn pos_at(sentence: &Sentence, index: isize) -> &str {
    if index < 0 {
        BOS
    } else {
        match sentence.tokens.get(index as usize) {
            Some(t) => t.pos().unwrap_or("<nopos>"),
            None => EOS,
        }
    }
}

/// Feature strings firing at `position`.
pub fn feature_strings(sentence: &Sentence, position: usize, templates: &FeatureTemplateSet, clusters: Option<&Clusters>) -> Vec<String> {
    let mut out = vec!["bias".to_string()];
    let pos = position as isize;
    for &offset in &templates.offsets {
        let i = pos + offset;
        let w = word_at(sentence, i);
        let next = word_at(sentence, i + 1);
        let inside = i >= 0 && (i as usize) < sentence.len();
        if templates.word_unigram {
            out.push(format!("w[{offset}]={w}"));
        }
        if templates.word_bigram {
            out.push(format!("ww[{offset}]={w}|{next}"));
        }
        if inside {
            let cap = u8::from(is_capitalized(w));
            let conn = connect_class(w);
            if templates.shape {
                out.push(format!("sh[{offset}]={}", shape(w)));
            }
            if templates.capital {
                out.push(format!("ca[{offset}]={cap}"));
            }
            if templates.capital_word {
                out.push(format!("caw[{offset}]={cap}|{w}"));
            }
            if templates.connect {
                out.push(format!("co[{offset}]={conn}"));
            }
            if templates.capital_connect {
                out.push(format!("caco[{offset}]={cap}|{conn}"));
            }
            if templates.prefix_suffix {
                let chars: Vec<char> = w.chars().collect();
                for n in 1..=chars.len().min(4) {
                    let prefix: String = chars[..n].iter().collect();
                    let suffix: String = chars[chars.len() - n..].iter().collect();
                    out.push(format!("pre{n}[{offset}]={prefix}"));
                    out.push(format!("suf{n}[{offset}]={suffix}"));
                }
            }
        }
        if templates.cluster {
            if let Some(clusters) = clusters {
                out.push(format!("cl[{offset}]={}", clusters.get(w)));
                out.push(format!("cl2[{offset}]={}|{}", clusters.get(w), clusters.get(next)));
            }
        }
        if templates.pos_grams {
            let p = pos_at(sentence, i);
            let pn = pos_at(sentence, i + 1);
            let pp = pos_at(sentence, i - 1);
            out.push(format!("p[{offset}]={p}"));
            out.push(format!("pp[{offset}]={p}|{pn}"));
            out.push(format!("ppp[{offset}]={pp}|{p}|{pn}"));
        }
    }
    if templates.pos_word {
        out.push(format!("pw={}|{}", pos_at(sentence, pos), word_at(sentence, pos)));
    }
    out
}

/// Maps feature strings to dense ids; grows during training, frozen after.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVocab {
    ids: HashMap<String, u32>,
}

impl FeatureVocab {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn intern(&mut self, feature: String) -> u32 {
        let next = self.ids.len() as u32;
        *self.ids.entry(feature).or_insert(next)
    }

    pub fn get(&self, feature: &str) -> Option<u32> {
        self.ids.get(feature).copied()
    }
}

/// Per-position feature ids. With `grow`, unseen strings get new ids;
/// otherwise they are dropped.
pub fn featurize(sentence: &Sentence, templates: &FeatureTemplateSet, clusters: Option<&Clusters>, vocab: &mut FeatureVocab, grow: bool) -> Vec<Vec<u32>> {
    (0..sentence.len())
        .map(|i| {
            feature_strings(sentence, i, templates, clusters).into_iter().filter_map(|f| if grow { Some(vocab.intern(f)) } else { vocab.get(&f) }).collect()
        })
        .collect()
}
