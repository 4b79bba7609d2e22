//! Embedded default datasets: definitional gender pairs, the occupation and
//! template lists for the NLI probe set, and the default vocabulary.

use crate::error::Result;
use crate::nli::NliTemplate;
use crate::subspace::{GenderPair, GenderPairSet};

pub const OCCUPATIONS_TXT: &str = include_str!("../data/occupations.txt");
pub const TEMPLATES_JSONL: &str = include_str!("../data/templates.jsonl");
pub const GENDER_PAIRS_JSONL: &str = include_str!("../data/gender_pairs.jsonl");

/// Definitional male/female word pairs. The first ten drive the default
/// estimation set; the rest extend word-level gender swapping.
pub const GENDER_WORD_PAIRS: &[(&str, &str)] = &[
    ("he", "she"),
    ("man", "woman"),
    ("father", "mother"),
    ("boy", "girl"),
    ("son", "daughter"),
    ("brother", "sister"),
    ("husband", "wife"),
    ("uncle", "aunt"),
    ("king", "queen"),
    ("male", "female"),
    ("men", "women"),
    ("boys", "girls"),
    ("grandfather", "grandmother"),
    ("gentleman", "lady"),
    ("gentlemen", "ladies"),
    ("nephew", "niece"),
    ("sir", "madam"),
    ("mr", "mrs"),
];

/// Swaps every known gender word to its counterpart, word by word. Unknown
/// words pass through unchanged.
pub fn gender_swap(text: &str) -> String {
    text.split_whitespace()
        .map(|w| {
            for &(m, f) in GENDER_WORD_PAIRS {
                if w == m {
                    return f;
                }
                if w == f {
                    return m;
                }
            }
            w
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// The shipped estimation set: ten definitional pairs in four carrier
/// templates of varying length (40 sentence pairs).
pub fn default_gender_pairs() -> GenderPairSet {
    let pairs = GENDER_PAIRS_JSONL
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).expect("embedded pair set");
            GenderPair {
                male: v["male"].as_str().unwrap().to_string(),
                female: v["female"].as_str().unwrap().to_string(),
            }
        })
        .collect();
    GenderPairSet::new(pairs).expect("embedded pair set is non-empty")
}

pub fn default_occupations() -> Vec<String> {
    OCCUPATIONS_TXT
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn default_templates() -> Result<Vec<NliTemplate>> {
    crate::nli::parse_templates(TEMPLATES_JSONL, "<embedded templates>")
}

/// Neutral filler words used by the synthetic dataset generators; all of
/// them are part of the default vocabulary.
pub const FILLER_WORDS: &[&str] = &[
    "the", "a", "an", "was", "is", "were", "are", "will", "would", "to", "of", "and", "in", "on",
    "at", "into", "with", "for", "from", "this", "that", "they", "it", "went", "walked", "said",
    "saw", "stayed", "sat", "left", "spoke", "ruled", "waited", "cooked", "home", "house", "room",
    "kitchen", "market", "book", "reading", "yesterday", "everyone", "arrive", "early", "today",
    "quiet", "dinner", "night", "game", "train", "morning", "store", "cold", "warm", "rain",
    "sun", "garden", "window", "table", "chair", "street", "city", "river", "mountain", "blanket",
    "sock", "shoe", "coat", "bread", "water", "coffee", "tea", "letter", "phone", "paper", "door",
    "floor", "wall", "cloud", "weather", "cooler", "supposed", "tomorrow", "be", "than", "not",
    "easy", "wash", "machine", "late", "burned", "fire", "down", "up", "over", "under", "again",
    "long", "short", "new", "old", "small", "big", "liked", "wanted", "started", "finished",
    "plays", "works", "lives", "eats", "sleeps", "smiled", "laughed", "cried", "helped",
];

/// Deterministic default vocabulary: specials, punctuation, gender words,
/// fillers, occupations, then every word appearing in the embedded template
/// and pair files.
pub fn default_vocab_tokens() -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut push = |tok: &str| {
        if !tok.is_empty() && seen.insert(tok.to_string()) {
            out.push(tok.to_string());
        }
    };
    push("[CLS]");
    push("[SEP]");
    push("[UNK]");
    push(".");
    push(",");
    push("?");
    push("!");
    for &(m, f) in GENDER_WORD_PAIRS {
        push(m);
        push(f);
    }
    for w in FILLER_WORDS {
        push(w);
    }
    for occ in OCCUPATIONS_TXT.lines() {
        push(occ.trim());
    }
    for line in TEMPLATES_JSONL.lines().chain(GENDER_PAIRS_JSONL.lines()) {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line).expect("embedded data");
        for field in ["activity", "male", "female"] {
            if let Some(text) = v.get(field).and_then(|x| x.as_str()) {
                for w in crate::encoder::tokenizer::split_words(text) {
                    if w != "<" && w != ">" && !w.contains('<') {
                        push(&w);
                    }
                }
            }
        }
    }
    push("man");
    push("woman");
    out
}
