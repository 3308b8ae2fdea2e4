//! Seeded scripted responder.
//!
//! Each question has a fixed distribution over the five letters plus an
//! "invalid reply" outcome. Every draw is a pure function of
//! `(campaign_seed, question_id, sample_index)`, so results do not depend on
//! request order, parallelism or interruptions.

mod server;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::{ClientError, Responder, SampleRequest};
use crate::dataset::QuestionSet;
use crate::letter::Letter;
use crate::parsing::parse_answer;

pub use server::{serve_mock, MockHandle, MockOptions};

/// Replies used for invalid outcomes when a script entry names none. Each
/// parses to no letter.
pub const DEFAULT_INVALID_TEXTS: [&str; 3] = [
    "I'm not sure.",
    "B or D",
    "The question cannot be answered from the information given.",
];

const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimSeed(pub u64);

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("unknown question id {0}")]
    UnknownQuestion(String),
    #[error("script for {question_id}: probabilities sum to {sum}, expected 1")]
    NotNormalised { question_id: String, sum: f64 },
    #[error("script for {question_id}: probability {value} out of range")]
    BadProbability { question_id: String, value: f64 },
    #[error("script for {question_id}: invalid text {text:?} parses as a letter")]
    InvalidTextParses { question_id: String, text: String },
    #[error("script for {0}: invalid_probability > 0 but no invalid texts")]
    EmptyPool(String),
    #[error("script line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("cannot read script: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Indexed by [`Letter::index`].
    pub probs: [f64; 5],
    pub invalid_probability: f64,
    pub invalid_texts: Vec<String>,
}

impl ScriptEntry {
    pub fn new(probs: [f64; 5], invalid_probability: f64) -> Self {
        Self {
            probs,
            invalid_probability,
            invalid_texts: DEFAULT_INVALID_TEXTS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn point(letter: Letter) -> Self {
        let mut probs = [0.0; 5];
        probs[letter.index()] = 1.0;
        Self::new(probs, 0.0)
    }

    /// Two-outcome support: `correct` with probability `p_correct`, `wrong`
    /// otherwise.
    pub fn two_outcome(correct: Letter, wrong: Letter, p_correct: f64) -> Self {
        assert_ne!(correct, wrong);
        let mut probs = [0.0; 5];
        probs[correct.index()] = p_correct;
        probs[wrong.index()] = 1.0 - p_correct;
        Self::new(probs, 0.0)
    }

    /// Letter probabilities conditioned on a valid reply.
    pub fn valid_probs(&self) -> [f64; 5] {
        let total: f64 = self.probs.iter().sum();
        self.probs.map(|p| if total > 0.0 { p / total } else { 0.0 })
    }

    /// Entropy (nats) of the valid-reply distribution.
    pub fn true_entropy(&self) -> f64 {
        self.valid_probs()
            .iter()
            .filter(|&&p| p > 0.0)
            .fold(0.0, |acc, &p| acc - p * p.ln())
    }

    fn validate(&self, question_id: &str) -> Result<(), SimError> {
        let all = self.probs.iter().chain(std::iter::once(&self.invalid_probability));
        for &p in all.clone() {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::BadProbability {
                    question_id: question_id.into(),
                    value: p,
                });
            }
        }
        let sum: f64 = all.sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(SimError::NotNormalised {
                question_id: question_id.into(),
                sum,
            });
        }
        if self.invalid_probability > 0.0 && self.invalid_texts.is_empty() {
            return Err(SimError::EmptyPool(question_id.into()));
        }
        if let Some(text) = self.invalid_texts.iter().find(|t| parse_answer(t).value.is_some()) {
            return Err(SimError::InvalidTextParses {
                question_id: question_id.into(),
                text: text.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResponderScript {
    entries: BTreeMap<String, ScriptEntry>,
}

#[derive(Serialize, Deserialize)]
struct ScriptLine {
    question_id: String,
    probs: BTreeMap<Letter, f64>,
    #[serde(default)]
    invalid_probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    invalid_texts: Option<Vec<String>>,
}

impl ResponderScript {
    pub fn new(entries: BTreeMap<String, ScriptEntry>) -> Result<Self, SimError> {
        for (id, e) in &entries {
            e.validate(id)?;
        }
        Ok(Self { entries })
    }

    /// Builds one entry per question of `set`.
    pub fn for_questions(
        set: &QuestionSet,
        mut entry: impl FnMut(&crate::dataset::Question) -> ScriptEntry,
    ) -> Result<Self, SimError> {
        Self::new(set.questions().iter().map(|q| (q.id.clone(), entry(q))).collect())
    }

    pub fn entry(&self, question_id: &str) -> Option<&ScriptEntry> {
        self.entries.get(question_id)
    }

    pub fn entries(&self) -> &BTreeMap<String, ScriptEntry> {
        &self.entries
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Line-delimited `{question_id, probs, invalid_probability[, invalid_texts]}`.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: ScriptLine = serde_json::from_str(raw).map_err(|e| SimError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            let mut probs = [0.0; 5];
            for (l, p) in line.probs {
                probs[l.index()] = p;
            }
            let mut entry = ScriptEntry::new(probs, line.invalid_probability);
            if let Some(texts) = line.invalid_texts {
                entry.invalid_texts = texts;
            }
            if entries.insert(line.question_id.clone(), entry).is_some() {
                return Err(SimError::Malformed {
                    line: i + 1,
                    message: format!("duplicate question id {}", line.question_id),
                });
            }
        }
        Self::new(entries)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, e) in &self.entries {
            let probs = Letter::ALL
                .iter()
                .filter(|l| e.probs[l.index()] > 0.0)
                .map(|&l| (l, e.probs[l.index()]))
                .collect();
            let default_pool = e.invalid_texts.iter().map(String::as_str).eq(DEFAULT_INVALID_TEXTS);
            let line = ScriptLine {
                question_id: id.clone(),
                probs,
                invalid_probability: e.invalid_probability,
                invalid_texts: (!default_pool).then(|| e.invalid_texts.clone()),
            };
            out.push_str(&serde_json::to_string(&line).expect("script serialises"));
            out.push('\n');
        }
        out
    }
}

/// Two uniform draws in `[0, 1)` keyed by seed, question and sample index.
pub fn keyed_uniforms(seed: SimSeed, question_id: &str, sample_index: u32) -> (f64, f64) {
    let mut h = Sha256::new();
    h.update(b"mcq-entropy/sim/v1\0");
    h.update(seed.0.to_le_bytes());
    h.update((question_id.len() as u64).to_le_bytes());
    h.update(question_id.as_bytes());
    h.update(sample_index.to_le_bytes());
    let d = h.finalize();
    let word = |i: usize| u64::from_le_bytes(d[i..i + 8].try_into().expect("8 bytes"));
    let unit = |w: u64| (w >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (unit(word(0)), unit(word(8)))
}

/// Draws one reply text for `(question_id, sample_index)`.
pub fn scripted_sample(
    script: &ResponderScript,
    question_id: &str,
    sample_index: u32,
    seed: SimSeed,
) -> Result<String, SimError> {
    let entry = script
        .entry(question_id)
        .ok_or_else(|| SimError::UnknownQuestion(question_id.to_string()))?;
    let (u, v) = keyed_uniforms(seed, question_id, sample_index);

    let mut cum = 0.0;
    let mut last_letter = None;
    for l in Letter::ALL {
        let p = entry.probs[l.index()];
        if p > 0.0 {
            cum += p;
            last_letter = Some(l);
            if u < cum {
                return Ok(l.to_string());
            }
        }
    }
    if entry.invalid_probability > 0.0 {
        let pool = &entry.invalid_texts;
        let k = ((v * pool.len() as f64) as usize).min(pool.len() - 1);
        return Ok(pool[k].clone());
    }
    // Rounding left `u` just above the cumulative sum.
    Ok(last_letter.expect("validated script has positive mass").to_string())
}

/// In-process backend answering from a script.
#[derive(Debug, Clone)]
pub struct ScriptedResponder {
    script: ResponderScript,
    seed: SimSeed,
}

impl ScriptedResponder {
    pub fn new(script: ResponderScript, seed: SimSeed) -> Self {
        Self { script, seed }
    }
}

impl Responder for ScriptedResponder {
    async fn respond(&self, request: SampleRequest<'_>) -> Result<String, ClientError> {
        scripted_sample(&self.script, request.question_id, request.sample_index, self.seed)
            .map_err(|e| ClientError::Protocol(e.to_string()))
    }
}
