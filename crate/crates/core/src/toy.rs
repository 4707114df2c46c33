//! Synthetic labeled corpus with a planted two-level theme structure.
//!
//! Four themes each own a block of general words and three subthemes, and
//! every subtheme owns its own block of specific words. Blocks are disjoint.
//! A document picks one subtheme and draws most tokens from that subtheme's
//! block, a share from its theme's general block, and a little uniform noise
//! from the whole vocabulary. Its label is the theme name.
//!
//! `data/toy_corpus.jsonl` at the repository root is the output of
//! [`generate`] with [`DEFAULT_SEED`] (see the `gen_toy` example).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{RawDocument, Vocabulary};
use crate::error::{Error, Result};
use crate::model::top_indices;
use crate::tpd::parent_of;
use crate::trainer::Checkpoint;

pub const DEFAULT_SEED: u64 = 2024;
pub const DOCS_PER_SUBTHEME: usize = 40;

const GENERAL_SHARE: f64 = 0.3;
const NOISE_SHARE: f64 = 0.08;
const MIN_LEN: usize = 150;
const MAX_LEN: usize = 250;
const FILLERS: [&str; 6] = ["the", "and", "of", "with", "about", "for"];

pub struct Theme {
    pub name: &'static str,
    pub general: [&'static str; 10],
    pub subthemes: [Subtheme; 3],
}

pub struct Subtheme {
    pub name: &'static str,
    pub words: [&'static str; 10],
}

pub const THEMES: [Theme; 4] = [
    Theme {
        name: "sports",
        general: ["team", "game", "player", "season", "coach", "match", "score", "league", "fans", "stadium"],
        subthemes: [
            Subtheme {
                name: "soccer",
                words: ["goal", "striker", "penalty", "midfield", "keeper", "offside", "tackle", "corner", "referee", "pitch"],
            },
            Subtheme {
                name: "basketball",
                words: ["dunk", "hoop", "rebound", "court", "guard", "layup", "playoffs", "buzzer", "jumpshot", "backboard"],
            },
            Subtheme {
                name: "tennis",
                words: ["serve", "racket", "volley", "baseline", "deuce", "backhand", "forehand", "slam", "tiebreak", "umpire"],
            },
        ],
    },
    Theme {
        name: "food",
        general: ["cook", "kitchen", "recipe", "taste", "dinner", "flavor", "meal", "chef", "ingredient", "dish"],
        subthemes: [
            Subtheme {
                name: "baking",
                words: ["flour", "oven", "dough", "bread", "yeast", "pastry", "butter", "sugar", "knead", "crust"],
            },
            Subtheme {
                name: "grilling",
                words: ["grill", "barbecue", "charcoal", "smoke", "steak", "burger", "skewer", "marinade", "brisket", "ribs"],
            },
            Subtheme {
                name: "salads",
                words: ["lettuce", "tomato", "cucumber", "dressing", "vinegar", "spinach", "kale", "avocado", "crouton", "arugula"],
            },
        ],
    },
    Theme {
        name: "technology",
        general: ["software", "computer", "system", "data", "user", "device", "network", "code", "digital", "internet"],
        subthemes: [
            Subtheme {
                name: "security",
                words: ["encryption", "password", "firewall", "malware", "hacker", "breach", "phishing", "vulnerability", "antivirus", "ransomware"],
            },
            Subtheme {
                name: "mobile",
                words: ["smartphone", "app", "battery", "touchscreen", "android", "iphone", "charger", "tablet", "notification", "camera"],
            },
            Subtheme {
                name: "machine_learning",
                words: ["neural", "learning", "model", "training", "algorithm", "dataset", "prediction", "inference", "classifier", "gradient"],
            },
        ],
    },
    Theme {
        name: "nature",
        general: ["forest", "river", "mountain", "wildlife", "climate", "animal", "tree", "land", "water", "habitat"],
        subthemes: [
            Subtheme {
                name: "birds",
                words: ["feather", "nest", "wing", "beak", "migration", "eagle", "sparrow", "owl", "flock", "songbird"],
            },
            Subtheme {
                name: "ocean",
                words: ["coral", "reef", "whale", "tide", "wave", "shark", "dolphin", "seaweed", "lagoon", "plankton"],
            },
            Subtheme {
                name: "weather",
                words: ["rain", "storm", "thunder", "cloud", "snow", "wind", "hurricane", "forecast", "drought", "lightning"],
            },
        ],
    },
];

/// Block a word belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    General { theme: usize },
    /// `subtheme` is the global index `3 * theme + local index`
    Specific { theme: usize, subtheme: usize },
}

impl Block {
    pub fn theme(self) -> usize {
        match self {
            Block::General { theme } | Block::Specific { theme, .. } => theme,
        }
    }
}

pub fn num_subthemes() -> usize {
    THEMES.iter().map(|t| t.subthemes.len()).sum()
}

/// Planted theme of every global subtheme index.
pub fn planted_parents() -> Vec<usize> {
    THEMES
        .iter()
        .enumerate()
        .flat_map(|(t, theme)| std::iter::repeat_n(t, theme.subthemes.len()))
        .collect()
}

pub fn block_of(word: &str) -> Option<Block> {
    let mut sub = 0;
    for (t, theme) in THEMES.iter().enumerate() {
        if theme.general.contains(&word) {
            return Some(Block::General { theme: t });
        }
        for s in &theme.subthemes {
            if s.words.contains(&word) {
                return Some(Block::Specific { theme: t, subtheme: sub });
            }
            sub += 1;
        }
    }
    None
}

pub fn all_words() -> Vec<&'static str> {
    THEMES
        .iter()
        .flat_map(|t| t.general.iter().chain(t.subthemes.iter().flat_map(|s| s.words.iter())))
        .copied()
        .collect()
}

fn sentence_case(words: &[&str]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
    s.push('.');
    s
}

/// `DOCS_PER_SUBTHEME` documents per subtheme in shuffled order.
pub fn generate(seed: u64) -> Vec<RawDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = all_words();
    let mut plan: Vec<(usize, usize)> = THEMES
        .iter()
        .enumerate()
        .flat_map(|(t, theme)| (0..theme.subthemes.len()).map(move |s| (t, s)))
        .flat_map(|ts| std::iter::repeat_n(ts, DOCS_PER_SUBTHEME))
        .collect();
    plan.shuffle(&mut rng);

    plan.into_iter()
        .map(|(t, s)| {
            let theme = &THEMES[t];
            let len = rng.random_range(MIN_LEN..=MAX_LEN);
            let mut tokens = Vec::with_capacity(len + len / 4);
            for _ in 0..len {
                let u: f64 = rng.random();
                let word = if u < NOISE_SHARE {
                    vocab[rng.random_range(0..vocab.len())]
                } else if u < NOISE_SHARE + GENERAL_SHARE {
                    theme.general[rng.random_range(0..theme.general.len())]
                } else {
                    let words = &theme.subthemes[s].words;
                    words[rng.random_range(0..words.len())]
                };
                tokens.push(word);
                if rng.random_bool(0.2) {
                    tokens.push(FILLERS[rng.random_range(0..FILLERS.len())]);
                }
            }
            let mut sentences = Vec::new();
            let mut rest = &tokens[..];
            while !rest.is_empty() {
                let take = rng.random_range(8..=14).min(rest.len());
                sentences.push(sentence_case(&rest[..take]));
                rest = &rest[take..];
            }
            RawDocument {
                text: sentences.join(" "),
                label: Some(theme.name.to_owned()),
            }
        })
        .collect()
}

/// Theme holding the plurality of `words`, ties to the lower theme; `None`
/// when no word belongs to a block.
pub fn dominant_theme<S: AsRef<str>>(words: &[S]) -> Option<usize> {
    let mut counts = [0usize; THEMES.len()];
    for w in words {
        if let Some(b) = block_of(w.as_ref()) {
            counts[b.theme()] += 1;
        }
    }
    let best = (0..counts.len()).rev().max_by_key(|&t| counts[t])?;
    (counts[best] > 0).then_some(best)
}

/// Fraction of child-topic pairs on which two groupings agree about
/// "same parent" vs "different parent". Invariant to relabeling either side.
pub fn pairwise_agreement(learned: &[usize], planted: &[usize]) -> f64 {
    assert_eq!(learned.len(), planted.len());
    let n = learned.len();
    let (mut agree, mut total) = (0usize, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            agree += usize::from((learned[i] == learned[j]) == (planted[i] == planted[j]));
            total += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        agree as f64 / total as f64
    }
}

/// Agreement between a trained two-level hierarchy and the planted one.
///
/// Each level-1 topic is assigned the dominant theme of its top `n_top`
/// words, and its learned parent is the argmax of the level-0/1 plan.
pub fn hierarchy_agreement(cp: &Checkpoint, vocab: &Vocabulary, n_top: usize) -> Result<f64> {
    let model = cp.model()?;
    if model.num_levels() < 2 {
        return Err(Error::invalid("hierarchy agreement needs two levels"));
    }
    let beta = model.beta(1)?;
    let planted: Vec<usize> = (0..beta.num_topics())
        .map(|k| {
            let words: Vec<&str> = top_indices(&beta.topic(k), n_top)
                .into_iter()
                .map(|w| vocab.words()[w].as_str())
                .collect();
            // unthemed topics get a private group
            dominant_theme(&words).unwrap_or(THEMES.len() + k)
        })
        .collect();
    Ok(pairwise_agreement(&parent_of(&cp.plans[0]), &planted))
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    text: &'a str,
    label: Option<&'a str>,
}

/// One `{"text": ..., "label": ...}` object per line.
pub fn to_jsonl(docs: &[RawDocument]) -> String {
    let mut out = String::new();
    for d in docs {
        let line = serde_json::to_string(&JsonDoc {
            text: &d.text,
            label: d.label.as_deref(),
        })
        .expect("string fields always serialize");
        out.push_str(&line);
        out.push('\n');
    }
    out
}
