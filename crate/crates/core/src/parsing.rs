//! Reply normalisation: raw completion text to a single answer letter.
//!
//! Order of rules:
//! 1. trim surrounding whitespace, newlines and ASCII punctuation;
//! 2. a lone letter `A`–`E` (either case) is accepted as is;
//! 3. otherwise collect every standalone capital `A`–`E` token. This covers
//!    `answer is X`, `X.` and `(X)` alike. One distinct letter is accepted,
//!    two or more are ambiguous, none means no letter.
//!
//! Lowercase letters only count in rule 2; inside prose `a` is an article.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::letter::Letter;

static STANDALONE_LETTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?-u:\b)([A-E])(?-u:\b)").expect("valid regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseReason {
    Clean,
    Stripped,
    Extracted,
    Ambiguous,
    NoLetter,
}

impl ParseReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseReason::Clean => "clean",
            ParseReason::Stripped => "stripped",
            ParseReason::Extracted => "extracted",
            ParseReason::Ambiguous => "ambiguous",
            ParseReason::NoLetter => "no_letter",
        }
    }
}

impl fmt::Display for ParseReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParseReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clean" => Ok(ParseReason::Clean),
            "stripped" => Ok(ParseReason::Stripped),
            "extracted" => Ok(ParseReason::Extracted),
            "ambiguous" => Ok(ParseReason::Ambiguous),
            "no_letter" => Ok(ParseReason::NoLetter),
            other => Err(format!("unknown parse reason {other:?}")),
        }
    }
}

/// `value` is `None` exactly when `reason` is `Ambiguous` or `NoLetter`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedAnswer {
    pub value: Option<Letter>,
    pub reason: ParseReason,
}

impl ParsedAnswer {
    fn accept(letter: Letter, reason: ParseReason) -> Self {
        Self {
            value: Some(letter),
            reason,
        }
    }

    fn reject(reason: ParseReason) -> Self {
        Self { value: None, reason }
    }
}

fn is_trim_char(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation()
}

pub fn parse_answer(raw: &str) -> ParsedAnswer {
    let trimmed = raw.trim_matches(is_trim_char);

    let mut chars = trimmed.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        if let Some(letter) = Letter::from_char(c) {
            let reason = if trimmed.len() == raw.len() {
                ParseReason::Clean
            } else {
                ParseReason::Stripped
            };
            return ParsedAnswer::accept(letter, reason);
        }
    }

    let candidates: BTreeSet<Letter> = STANDALONE_LETTER
        .captures_iter(trimmed)
        .filter_map(|c| Letter::from_char(c[1].chars().next()?))
        .collect();
    let mut it = candidates.into_iter();
    match (it.next(), it.next()) {
        (Some(letter), None) => ParsedAnswer::accept(letter, ParseReason::Extracted),
        (Some(_), Some(_)) => ParsedAnswer::reject(ParseReason::Ambiguous),
        (None, _) => ParsedAnswer::reject(ParseReason::NoLetter),
    }
}

/// One labelled case of the parser corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCase {
    pub raw: String,
    pub expected: Option<Letter>,
    pub reason: ParseReason,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read parser corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("parser corpus line {line}: {message}")]
    Malformed { line: usize, message: String },
}

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusCase>, CorpusError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CorpusError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusMismatch {
    pub case: CorpusCase,
    pub got: ParsedAnswer,
}

/// Replays the corpus; returns the mismatching cases.
pub fn check_corpus(cases: &[CorpusCase]) -> Vec<CorpusMismatch> {
    cases
        .iter()
        .filter_map(|case| {
            let got = parse_answer(&case.raw);
            (got.value != case.expected || got.reason != case.reason).then(|| CorpusMismatch {
                case: case.clone(),
                got,
            })
        })
        .collect()
}
