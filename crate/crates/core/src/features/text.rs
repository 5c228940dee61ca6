use std::collections::HashSet;
use std::path::Path;

use unicode_general_category::{get_general_category, GeneralCategory as G};

use crate::error::Result;
use crate::graph::EntityRecord;
use crate::io;

/// Subword vocabulary, one piece per line. Pieces that continue a word may
/// carry a leading `##`; matching is case-insensitive.
#[derive(Clone, Debug, Default)]
pub struct Vocab {
    pieces: HashSet<String>,
    max_chars: usize,
}

impl Vocab {
    pub fn from_lines(text: &str) -> Vocab {
        let mut v = Vocab::default();
        for line in text.lines() {
            let piece = line.trim_end_matches('\r').trim();
            if !piece.is_empty() {
                let piece = piece.to_lowercase();
                v.max_chars = v.max_chars.max(piece.trim_start_matches("##").chars().count());
                v.pieces.insert(piece);
            }
        }
        v
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        Ok(Vocab::from_lines(&io::read_to_string(path)?))
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    fn contains(&self, piece: &str, continuation: bool) -> bool {
        if continuation {
            self.pieces.contains(&format!("##{piece}")) || self.pieces.contains(piece)
        } else {
            self.pieces.contains(piece)
        }
    }

    /// Number of pieces in the greedy longest-match segmentation of one
    /// word. Characters not covered by any piece cost one token each.
    pub fn count_tokens(&self, word: &str) -> usize {
        let chars: Vec<char> = word.to_lowercase().chars().collect();
        let mut start = 0;
        let mut tokens = 0;
        while start < chars.len() {
            let longest = (start + 1..=chars.len().min(start + self.max_chars))
                .rev()
                .find(|&end| {
                    let piece: String = chars[start..end].iter().collect();
                    self.contains(&piece, start > 0)
                })
                .unwrap_or(start + 1);
            tokens += 1;
            start = longest;
        }
        tokens
    }
}

pub fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        G::ConnectorPunctuation
            | G::DashPunctuation
            | G::OpenPunctuation
            | G::ClosePunctuation
            | G::InitialPunctuation
            | G::FinalPunctuation
            | G::OtherPunctuation
    )
}

pub fn is_numeric(c: char) -> bool {
    get_general_category(c) == G::DecimalNumber
}

/// Whole-word, case-insensitive match of "unknown"; words are maximal runs
/// of alphanumeric characters.
pub fn has_unknown_word(text: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric())
        .any(|w| w.eq_ignore_ascii_case("unknown"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TextStats {
    pub chars: usize,
    pub unknown: bool,
    pub punctuation: usize,
    pub punctuation_ratio: f64,
    pub numeric: usize,
    pub numeric_ratio: f64,
    pub tokens_per_word: f64,
}

pub fn text_stats(text: &str, vocab: Option<&Vocab>) -> TextStats {
    let chars = text.chars().count();
    if chars == 0 {
        return TextStats::default();
    }
    let punctuation = text.chars().filter(|&c| is_punctuation(c)).count();
    let numeric = text.chars().filter(|&c| is_numeric(c)).count();
    let words: Vec<&str> = text.split_whitespace().collect();
    let tokens_per_word = match vocab {
        Some(v) if !words.is_empty() => {
            words.iter().map(|w| v.count_tokens(w)).sum::<usize>() as f64 / words.len() as f64
        }
        Some(_) => 0.0,
        None => 1.0,
    };
    TextStats {
        chars,
        unknown: has_unknown_word(text),
        punctuation,
        punctuation_ratio: punctuation as f64 / chars as f64,
        numeric,
        numeric_ratio: numeric as f64 / chars as f64,
        tokens_per_word,
    }
}

pub const TEXT_FEATURES: [&str; 15] = [
    "name_chars",
    "name_unknown",
    "name_punct",
    "name_punct_ratio",
    "name_numeric",
    "name_numeric_ratio",
    "name_tokens_per_word",
    "desc_missing",
    "desc_chars",
    "desc_unknown",
    "desc_punct",
    "desc_punct_ratio",
    "desc_numeric",
    "desc_numeric_ratio",
    "desc_tokens_per_word",
];

fn push_stats(out: &mut Vec<f64>, s: &TextStats) {
    out.extend([
        s.chars as f64,
        s.unknown as u8 as f64,
        s.punctuation as f64,
        s.punctuation_ratio,
        s.numeric as f64,
        s.numeric_ratio,
        s.tokens_per_word,
    ]);
}

/// Values in [`TEXT_FEATURES`] order. A missing description sets the flag
/// and zeroes every description statistic.
pub fn text_feature_values(rec: &EntityRecord, vocab: Option<&Vocab>) -> Vec<f64> {
    let mut out = Vec::with_capacity(TEXT_FEATURES.len());
    push_stats(&mut out, &text_stats(&rec.name, vocab));
    match rec.description.as_deref() {
        Some(d) => {
            out.push(0.0);
            push_stats(&mut out, &text_stats(d, vocab));
        }
        None => out.extend([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    }
    out
}

pub fn text_features(rec: &EntityRecord, vocab: Option<&Vocab>) -> Vec<(&'static str, f64)> {
    TEXT_FEATURES
        .iter()
        .copied()
        .zip(text_feature_values(rec, vocab))
        .collect()
}
