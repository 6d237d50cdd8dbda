//! Synthetic template corpus whose entity types are decided by a cue word
//! two positions away from the second mention.
//!
//! Sentences follow `[Opener ,] A cue prep B [tail] .` The cue's suffix
//! names one of four relation classes, and the class fixes the types of
//! `A` and `B`. Names are shared across types, so a name alone is only a
//! weak hint. Development and test sentences draw part of their cue words
//! from stems never seen in training.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{BioLabel, Dataset, EntityType, LabelSequence, Token};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sentences: usize,
    pub train_fraction: f64,
    pub dev_fraction: f64,
    pub seed: u64,
    /// Probability that a mention of type `T` uses a name from `T`'s pool.
    pub home_prob: f64,
    /// Share of development/test cue words built from unseen stems.
    pub unseen_cue_fraction: f64,
    pub multiword_prob: f64,
    pub names_per_type: usize,
    pub stems_per_class: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 2000,
            train_fraction: 0.6,
            dev_fraction: 0.2,
            seed: 7,
            home_prob: 0.6,
            unseen_cue_fraction: 0.5,
            multiword_prob: 0.2,
            names_per_type: 24,
            stems_per_class: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

const CLASSES: [(&str, EntityType, EntityType); 4] = [
    ("ize", EntityType::Per, EntityType::Loc),
    ("ify", EntityType::Org, EntityType::Per),
    ("ech", EntityType::Loc, EntityType::Misc),
    ("yst", EntityType::Misc, EntityType::Org),
];
const PREPS: [&str; 4] = ["in", "at", "with", "near"];
const OPENERS: [&str; 4] = ["Yesterday", "Then", "Later", "Reportedly"];
const TAILS: [&str; 3] = ["again", "today", "twice"];
const STEM_CONSONANTS: [char; 9] = ['b', 'd', 'g', 'k', 'l', 'm', 'n', 'p', 'r'];
const STEM_VOWELS: [char; 3] = ['a', 'o', 'u'];
const NAME_ONSETS: [&str; 10] = ["T", "S", "V", "H", "F", "Z", "W", "J", "Ch", "Sh"];
const NAME_SYLLABLES: [&str; 12] = ["e", "i", "ev", "is", "eth", "iz", "en", "il", "ef", "ish", "et", "iv"];

struct Lexicon {
    names: Vec<Vec<String>>,
    seen_stems: Vec<Vec<String>>,
    unseen_stems: Vec<Vec<String>>,
}

fn lexicon(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Lexicon {
    let mut all_names = Vec::new();
    for onset in NAME_ONSETS {
        for a in NAME_SYLLABLES {
            for b in NAME_SYLLABLES {
                all_names.push(format!("{onset}{a}{b}"));
            }
        }
    }
    all_names.sort_unstable();
    all_names.dedup();
    let mut stems = Vec::new();
    for a in STEM_CONSONANTS {
        for v in STEM_VOWELS {
            for b in STEM_CONSONANTS {
                stems.push(format!("{a}{v}{b}"));
            }
        }
    }
    all_names.shuffle(rng);
    stems.shuffle(rng);
    let k = config.names_per_type;
    let names = (0..4).map(|t| all_names[t * k..(t + 1) * k].to_vec()).collect();
    let s = config.stems_per_class;
    let seen_stems = (0..4).map(|c| stems[c * s..(c + 1) * s].to_vec()).collect();
    let unseen_stems = (0..4).map(|c| stems[(4 + c) * s..(5 + c) * s].to_vec()).collect();
    Lexicon { names, seen_stems, unseen_stems }
}

fn push_mention(words: &mut Vec<String>, labels: &mut Vec<BioLabel>, t: EntityType, lex: &Lexicon, config: &SynthConfig, rng: &mut ChaCha8Rng) {
    let n = if rng.random::<f64>() < config.multiword_prob { 2 } else { 1 };
    for i in 0..n {
        let pool = if rng.random::<f64>() < config.home_prob {
            t.index()
        } else {
            let others: Vec<usize> = (0..4).filter(|&o| o != t.index()).collect();
            *others.choose(rng).unwrap()
        };
        words.push(lex.names[pool].choose(rng).unwrap().clone());
        labels.push(if i == 0 { BioLabel::B(t) } else { BioLabel::I(t) });
    }
}

fn sentence(lex: &Lexicon, config: &SynthConfig, unseen_prob: f64, rng: &mut ChaCha8Rng) -> (Vec<String>, LabelSequence) {
    let (class, (suffix, ta, tb)) = {
        let c = rng.random_range(0..CLASSES.len());
        (c, CLASSES[c])
    };
    let mut words = Vec::new();
    let mut labels = Vec::new();
    let plain = |words: &mut Vec<String>, labels: &mut Vec<BioLabel>, w: &str| {
        words.push(w.to_string());
        labels.push(BioLabel::O);
    };
    if rng.random::<f64>() < 0.3 {
        plain(&mut words, &mut labels, OPENERS.choose(rng).unwrap());
        plain(&mut words, &mut labels, ",");
    }
    push_mention(&mut words, &mut labels, ta, lex, config, rng);
    let stems = if rng.random::<f64>() < unseen_prob { &lex.unseen_stems } else { &lex.seen_stems };
    let cue = format!("{}{suffix}", stems[class].choose(rng).unwrap());
    plain(&mut words, &mut labels, &cue);
    plain(&mut words, &mut labels, PREPS.choose(rng).unwrap());
    push_mention(&mut words, &mut labels, tb, lex, config, rng);
    if rng.random::<f64>() < 0.3 {
        plain(&mut words, &mut labels, TAILS.choose(rng).unwrap());
    }
    plain(&mut words, &mut labels, ".");
    (words, LabelSequence(labels))
}

fn dataset(n: usize, lex: &Lexicon, config: &SynthConfig, unseen_prob: f64, rng: &mut ChaCha8Rng) -> Dataset {
    let mut ds = Dataset::default();
    for _ in 0..n {
        let (words, labels) = sentence(lex, config, unseen_prob, rng);
        let tokens = words.into_iter().map(|w| Token::new(w, None).expect("generated words are non-empty")).collect();
        ds.push(tokens, labels).expect("aligned by construction");
    }
    ds
}

/// Generates train, development and test splits.
pub fn generate(config: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lex = lexicon(config, &mut rng);
    let n_train = (config.sentences as f64 * config.train_fraction).round() as usize;
    let n_dev = (config.sentences as f64 * config.dev_fraction).round() as usize;
    let n_test = config.sentences.saturating_sub(n_train + n_dev);
    SynthCorpus {
        train: dataset(n_train, &lex, config, 0.0, &mut rng),
        dev: dataset(n_dev, &lex, config, config.unseen_cue_fraction, &mut rng),
        test: dataset(n_test, &lex, config, config.unseen_cue_fraction, &mut rng),
    }
}
