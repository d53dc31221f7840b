//! Label cleanup.
//!
//! Labeler responses are comma-separated word pairs, but models drift into
//! sentences, punctuation and other scripts. Default cleanup lowercases,
//! strips everything that is not a letter or digit, collapses whitespace,
//! keeps the first `truncate_words` words and drops labels outside basic
//! Latin. Minimal cleanup only removes non-printing characters and
//! normalizes whitespace.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanupMode {
    #[default]
    Default,
    Minimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanupPolicy {
    pub mode: CleanupMode,
    pub truncate_words: usize,
    pub reject_non_english: bool,
}

impl Default for CleanupPolicy {
    fn default() -> Self {
        Self {
            mode: CleanupMode::Default,
            truncate_words: 2,
            reject_non_english: true,
        }
    }
}

impl CleanupPolicy {
    pub fn minimal() -> Self {
        Self {
            mode: CleanupMode::Minimal,
            truncate_words: 2,
            reject_non_english: false,
        }
    }

    pub fn for_mode(mode: CleanupMode) -> Self {
        match mode {
            CleanupMode::Default => Self::default(),
            CleanupMode::Minimal => Self::minimal(),
        }
    }

    pub fn with_truncate_words(mut self, n: usize) -> Result<Self, String> {
        if n == 0 {
            return Err("truncate_words must be >= 1".into());
        }
        self.truncate_words = n;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.truncate_words == 0 {
            Err("truncate_words must be >= 1".into())
        } else {
            Ok(())
        }
    }
}

/// Why cleanup dropped a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    Empty,
    NonEnglish,
}

impl Rejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Rejection::Empty => "empty",
            Rejection::NonEnglish => "non_english",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Empty => f.write_str("label empty after cleanup"),
            Rejection::NonEnglish => f.write_str("label is not in basic Latin script"),
        }
    }
}

/// Splits a labeler response on commas, trimming pieces and dropping empty
/// ones. Order is preserved.
pub fn split_labels(response: &str) -> Vec<String> {
    response
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

/// Control characters and invisible format characters that are not
/// whitespace.
pub fn is_non_printing(c: char) -> bool {
    if c.is_whitespace() {
        return false;
    }
    c.is_control()
        || matches!(c,
            '\u{00AD}'
            | '\u{034F}'
            | '\u{061C}'
            | '\u{180E}'
            | '\u{200B}'..='\u{200F}'
            | '\u{202A}'..='\u{202E}'
            | '\u{2060}'..='\u{206F}'
            | '\u{FEFF}'
            | '\u{FFF9}'..='\u{FFFB}'
        )
}

/// Joins whitespace-separated words with single spaces.
fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True iff every character is an ASCII lowercase letter, digit or space.
/// Expects already lowercased input; accented Latin letters count as
/// non-English.
pub fn is_english_heuristic(text: &str) -> bool {
    text.chars()
        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == ' ')
}

pub fn clean_label(raw: &str, policy: &CleanupPolicy) -> Result<String, Rejection> {
    match policy.mode {
        CleanupMode::Default => clean_default(raw, policy),
        CleanupMode::Minimal => clean_minimal(raw, policy),
    }
}

fn clean_default(raw: &str, policy: &CleanupPolicy) -> Result<String, Rejection> {
    let spaced: String = raw
        .to_lowercase()
        .chars()
        .filter(|&c| !is_non_printing(c))
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let words: Vec<&str> = spaced
        .split_whitespace()
        .take(policy.truncate_words.max(1))
        .collect();
    if words.is_empty() {
        return Err(Rejection::Empty);
    }
    let cleaned = words.join(" ");
    if policy.reject_non_english && !is_english_heuristic(&cleaned) {
        return Err(Rejection::NonEnglish);
    }
    Ok(cleaned)
}

fn clean_minimal(raw: &str, policy: &CleanupPolicy) -> Result<String, Rejection> {
    let printable: String = raw.chars().filter(|&c| !is_non_printing(c)).collect();
    let cleaned = collapse_whitespace(&printable);
    if cleaned.is_empty() {
        return Err(Rejection::Empty);
    }
    if policy.reject_non_english && !is_english_heuristic(&cleaned.to_lowercase()) {
        return Err(Rejection::NonEnglish);
    }
    Ok(cleaned)
}
