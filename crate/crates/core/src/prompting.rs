//! Fixed few-shot chat prompt construction.
//!
//! Every request is built from scratch: system instruction, the exemplar
//! turns, then the question under evaluation. Nothing from previously asked
//! questions ever enters a prompt.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::Question;
use crate::digest::sha256_hex;
use crate::letter::Letter;

pub const DEFAULT_SYSTEM_INSTRUCTION: &str = "You're a highly knowledgeable physics tutor. For each message, give only the letter of the correct answer without any explanations or additional information.";

const DEFAULT_EXEMPLARS: [(&str, Letter); 3] = [
    (
        "A ball rolls down a slope and accelerates uniformly at 2 m/s^2. If it starts from rest, what will be its speed after 3 seconds? A. 3 m/s, B. 4 m/s, C. 5 m/s, D. 6 m/s, E. 7 m/s",
        Letter::D,
    ),
    (
        "A cyclist accelerates uniformly from rest to a speed of 10 m/s in 5 seconds. What is their acceleration? A. 1 m/s^2, B. 2 m/s^2, C. 3 m/s^2, D. 4 m/s^2, E. 5 m/s^2",
        Letter::B,
    ),
    (
        "A rocket accelerates from rest at a constant rate of 6 m/s^2. What speed will it reach after 4 seconds? A. 12 m/s, B. 18 m/s, C. 24 m/s, D. 30 m/s, E. 36 m/s",
        Letter::C,
    ),
];

/// Number of exemplars in a standard template.
pub const SHOTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    /// Question text with its options rendered inline.
    pub question_text: String,
    pub answer_letter: Letter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    system_instruction: String,
    exemplars: Vec<Exemplar>,
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("cannot read exemplar file: {0}")]
    Io(#[from] std::io::Error),
    #[error("exemplar file line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("expected {expected} exemplars, found {found}")]
    ExemplarCount { expected: usize, found: usize },
    #[error("exemplar {index}: answer {letter} is not among its options")]
    AnswerNotOffered { index: usize, letter: Letter },
    #[error("empty system instruction")]
    EmptySystem,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            system_instruction: DEFAULT_SYSTEM_INSTRUCTION.to_string(),
            exemplars: DEFAULT_EXEMPLARS
                .iter()
                .map(|(text, letter)| Exemplar {
                    question_text: text.to_string(),
                    answer_letter: *letter,
                })
                .collect(),
        }
    }
}

impl PromptTemplate {
    /// A standard three-shot template.
    pub fn new(system_instruction: String, exemplars: Vec<Exemplar>) -> Result<Self, PromptError> {
        if exemplars.len() != SHOTS {
            return Err(PromptError::ExemplarCount {
                expected: SHOTS,
                found: exemplars.len(),
            });
        }
        Self::with_any_shots(system_instruction, exemplars)
    }

    /// Zero- to three-shot variant; not used by the default pipeline.
    pub fn with_any_shots(
        system_instruction: String,
        exemplars: Vec<Exemplar>,
    ) -> Result<Self, PromptError> {
        if system_instruction.trim().is_empty() {
            return Err(PromptError::EmptySystem);
        }
        if exemplars.len() > SHOTS {
            return Err(PromptError::ExemplarCount {
                expected: SHOTS,
                found: exemplars.len(),
            });
        }
        for (i, ex) in exemplars.iter().enumerate() {
            if !offers(&ex.question_text, ex.answer_letter) {
                return Err(PromptError::AnswerNotOffered {
                    index: i + 1,
                    letter: ex.answer_letter,
                });
            }
        }
        Ok(Self {
            system_instruction,
            exemplars,
        })
    }

    /// Keeps only the first `shots` exemplars.
    pub fn truncated(&self, shots: usize) -> Self {
        Self {
            system_instruction: self.system_instruction.clone(),
            exemplars: self.exemplars.iter().take(shots).cloned().collect(),
        }
    }

    pub fn system_instruction(&self) -> &str {
        &self.system_instruction
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    /// Stable digest over the system text and exemplars.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("template serialises");
        sha256_hex(&canonical)
    }
}

fn offers(question_text: &str, letter: Letter) -> bool {
    let marker = format!("{letter}. ");
    question_text.starts_with(&marker) || question_text.contains(&format!(" {marker}"))
}

/// `<body> A. <a>, B. <b>, C. <c>, D. <d>, E. <e>`
pub fn render_question(q: &Question) -> String {
    render_inline(&q.body, Letter::ALL.iter().map(|&l| (l, q.choice(l))))
}

fn render_inline<'a>(body: &str, options: impl Iterator<Item = (Letter, &'a str)>) -> String {
    let options: Vec<String> = options.map(|(l, text)| format!("{l}. {}", text.trim())).collect();
    format!("{} {}", body.trim(), options.join(", "))
}

/// Loads a template from a line-delimited exemplar file, or the built-in
/// default when `path` is `None`.
///
/// Each line is either `{"system": "..."}` (at most once) or an exemplar
/// record in the dataset shape: `{"question": ..., "choices": {...}, "answer": "X"}`.
pub fn load_exemplars(path: Option<&Path>) -> Result<PromptTemplate, PromptError> {
    match path {
        None => Ok(PromptTemplate::default()),
        Some(p) => parse_exemplars(&std::fs::read_to_string(p)?),
    }
}

pub fn parse_exemplars(text: &str) -> Result<PromptTemplate, PromptError> {
    let mut system = None;
    let mut exemplars = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |message: String| PromptError::Malformed { line, message };
        let v: Value = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        if let Some(s) = v.get("system") {
            let s = s.as_str().ok_or_else(|| bad("system must be a string".into()))?;
            if system.replace(s.to_string()).is_some() {
                return Err(bad("duplicate system record".into()));
            }
            continue;
        }
        let body = v
            .get("question")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing question".into()))?;
        let choices = v
            .get("choices")
            .and_then(Value::as_object)
            .ok_or_else(|| bad("missing choices object".into()))?;
        let mut options = Vec::new();
        for l in Letter::ALL {
            let text = choices
                .get(&l.to_string())
                .and_then(Value::as_str)
                .ok_or_else(|| bad(format!("missing choice {l}")))?;
            options.push((l, text));
        }
        if choices.len() != 5 {
            return Err(bad(format!("expected 5 choices, found {}", choices.len())));
        }
        let answer: Letter = v
            .get("answer")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing answer".into()))?
            .parse()
            .map_err(|e: crate::letter::InvalidLetter| bad(e.to_string()))?;
        exemplars.push(Exemplar {
            question_text: render_inline(body, options.into_iter()),
            answer_letter: answer,
        });
    }
    PromptTemplate::new(
        system.unwrap_or_else(|| DEFAULT_SYSTEM_INSTRUCTION.to_string()),
        exemplars,
    )
}

/// Full message sequence for one request: system, exemplar turns, question.
pub fn build_prompt(q: &Question, template: &PromptTemplate) -> Vec<ChatMessage> {
    let mut messages = Vec::with_capacity(2 + 2 * template.exemplars.len());
    messages.push(ChatMessage::new(Role::System, template.system_instruction.clone()));
    for ex in &template.exemplars {
        messages.push(ChatMessage::new(Role::User, ex.question_text.clone()));
        messages.push(ChatMessage::new(Role::Assistant, ex.answer_letter.to_string()));
    }
    messages.push(ChatMessage::new(Role::User, render_question(q)));
    messages
}

/// Stable digest of a rendered message sequence.
pub fn prompt_hash(messages: &[ChatMessage]) -> String {
    let canonical = serde_json::to_vec(messages).expect("messages serialise");
    sha256_hex(&canonical)
}

impl fmt::Display for ChatMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let role = match self.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        write!(f, "{role}({:?})", self.content)
    }
}
