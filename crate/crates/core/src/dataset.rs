//! Multiple-choice question sets.
//!
//! The on-disk shape is UTF-8 with one JSON object per line:
//!
//! ```text
//! {"id":"q0001","question":"...","choices":{"A":"...","B":"...","C":"...","D":"...","E":"..."},"answer":"D","category":"D"}
//! ```
//!
//! `id` is optional and synthesised from the record ordinal when absent. A few
//! alternative field spellings are accepted on input (see [`FIELD_ALIASES`]);
//! output always uses the canonical names.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::digest::sha256_hex;
use crate::letter::Letter;

/// Question category, ordered by increasing reasoning demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    D,
    F,
    C,
    S,
    M,
}

impl Category {
    pub const ALL: [Category; 5] = [Category::D, Category::F, Category::C, Category::S, Category::M];

    pub fn code(self) -> &'static str {
        match self {
            Category::D => "D",
            Category::F => "F",
            Category::C => "C",
            Category::S => "S",
            Category::M => "M",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Category::D => "Replication of Definitions",
            Category::F => "Replication of Physical Facts",
            Category::C => "Conceptual Physics and Qualitative Reasoning",
            Category::S => "Single-Step Reasoning",
            Category::M => "Multi-Step Reasoning",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "D" => Ok(Category::D),
            "F" => Ok(Category::F),
            "C" => Ok(Category::C),
            "S" => Ok(Category::S),
            "M" => Ok(Category::M),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub id: String,
    pub body: String,
    /// Choice texts indexed by [`Letter::index`].
    pub choices: [String; 5],
    pub correct: Letter,
    pub category: Category,
    /// Free-form provenance marker, e.g. `"synthetic"`.
    pub source: Option<String>,
}

impl Question {
    pub fn choice(&self, letter: Letter) -> &str {
        &self.choices[letter.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionSet {
    questions: Vec<Question>,
    source_digest: String,
}

impl QuestionSet {
    pub fn new(questions: Vec<Question>, source_digest: String) -> Self {
        Self {
            questions,
            source_digest,
        }
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    pub fn get(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    /// Counts per category; every category is present, possibly with zero.
    pub fn category_counts(&self) -> BTreeMap<Category, usize> {
        let mut counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|&c| (c, 0)).collect();
        for q in &self.questions {
            *counts.entry(q.category).or_default() += 1;
        }
        counts
    }

    /// Serialises to the canonical line-delimited shape.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for q in &self.questions {
            let choices: Map<String, Value> = Letter::ALL
                .iter()
                .map(|&l| (l.to_string(), Value::String(q.choice(l).to_string())))
                .collect();
            let mut obj = Map::new();
            obj.insert("id".into(), Value::String(q.id.clone()));
            obj.insert("question".into(), Value::String(q.body.clone()));
            obj.insert("choices".into(), Value::Object(choices));
            obj.insert("answer".into(), Value::String(q.correct.to_string()));
            obj.insert("category".into(), Value::String(q.category.to_string()));
            if let Some(source) = &q.source {
                obj.insert("source".into(), Value::String(source.clone()));
            }
            out.push_str(&Value::Object(obj).to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record, field `{field}`: {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate question id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: question {id}: unknown category {code:?}")]
    UnknownCategory { line: usize, id: String, code: String },
    #[error("line {line}: question {id}: {message}")]
    Choice {
        line: usize,
        id: String,
        message: String,
    },
}

/// Accepted input spellings per canonical field name.
pub const FIELD_ALIASES: &[(&str, &[&str])] = &[
    ("id", &["id", "question_id", "qid"]),
    ("question", &["question", "body", "text", "stem"]),
    ("choices", &["choices", "options"]),
    ("answer", &["answer", "correct", "label"]),
    ("category", &["category", "cat", "type"]),
    ("source", &["source"]),
];

fn field<'a>(obj: &'a Map<String, Value>, canonical: &str) -> Option<&'a Value> {
    let aliases = FIELD_ALIASES
        .iter()
        .find(|(name, _)| *name == canonical)
        .map(|(_, aliases)| *aliases)
        .unwrap_or(&[]);
    aliases.iter().find_map(|a| obj.get(*a))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<QuestionSet, DatasetError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(&bytes)
}

/// Parses dataset bytes; `source_digest` is the SHA-256 of `bytes`.
pub fn parse_dataset(bytes: &[u8]) -> Result<QuestionSet, DatasetError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        DatasetError::Malformed {
            line,
            field: "<record>".into(),
            message: "invalid UTF-8".into(),
        }
    })?;

    let mut questions = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let ordinal = questions.len() + 1;
        let q = parse_record(raw, line, ordinal)?;
        if !seen.insert(q.id.clone()) {
            return Err(DatasetError::DuplicateId { line, id: q.id });
        }
        questions.push(q);
    }
    Ok(QuestionSet::new(questions, sha256_hex(bytes)))
}

fn malformed(line: usize, field: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::Malformed {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn required_str(obj: &Map<String, Value>, name: &str, line: usize) -> Result<String, DatasetError> {
    match field(obj, name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(malformed(line, name, "expected a string")),
        None => Err(malformed(line, name, "missing")),
    }
}

fn parse_record(raw: &str, line: usize, ordinal: usize) -> Result<Question, DatasetError> {
    let value: Value =
        serde_json::from_str(raw).map_err(|e| malformed(line, "<record>", e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(malformed(line, "<record>", "expected a JSON object"));
    };

    let id = match field(&obj, "id") {
        None | Some(Value::Null) => format!("q{ordinal:04}"),
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(malformed(line, "id", "expected a non-empty string")),
    };

    let body = required_str(&obj, "question", line)?;
    if body.trim().is_empty() {
        return Err(malformed(line, "question", "empty question text"));
    }

    let choice_err = |message: String| DatasetError::Choice {
        line,
        id: id.clone(),
        message,
    };

    let mut slots: [Option<String>; 5] = Default::default();
    match field(&obj, "choices") {
        Some(Value::Object(map)) => {
            for (key, v) in map {
                let letter: Letter = key
                    .parse()
                    .map_err(|_| choice_err(format!("unexpected choice {key}")))?;
                let Value::String(text) = v else {
                    return Err(malformed(line, "choices", format!("choice {key} is not a string")));
                };
                slots[letter.index()] = Some(text.clone());
            }
        }
        Some(Value::Array(items)) => {
            if items.len() > 5 {
                return Err(choice_err(format!("expected 5 choices, found {}", items.len())));
            }
            for (i, v) in items.iter().enumerate() {
                let Value::String(text) = v else {
                    return Err(malformed(line, "choices", format!("choice {i} is not a string")));
                };
                slots[i] = Some(text.clone());
            }
        }
        Some(_) => return Err(malformed(line, "choices", "expected an object keyed A-E")),
        None => return Err(malformed(line, "choices", "missing")),
    }
    let mut choices: [String; 5] = Default::default();
    for letter in Letter::ALL {
        match slots[letter.index()].take() {
            Some(text) if !text.trim().is_empty() => choices[letter.index()] = text,
            Some(_) => return Err(choice_err(format!("empty choice {letter}"))),
            None => return Err(choice_err(format!("missing choice {letter}"))),
        }
    }

    let answer = required_str(&obj, "answer", line)?;
    let correct: Letter = answer
        .trim()
        .parse()
        .map_err(|_| malformed(line, "answer", format!("{answer:?} is not one of A-E")))?;

    let code = required_str(&obj, "category", line)?;
    let category: Category = code
        .trim()
        .parse()
        .map_err(|code| DatasetError::UnknownCategory {
            line,
            id: id.clone(),
            code,
        })?;

    let source = match field(&obj, "source") {
        Some(Value::String(s)) => Some(s.clone()),
        _ => None,
    };

    Ok(Question {
        id,
        body,
        choices,
        correct,
        category,
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub counts: BTreeMap<Category, usize>,
    pub total: usize,
    pub warnings: Vec<String>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (cat, n) in &self.counts {
            writeln!(f, "{cat} ({}): {n}", cat.display_name())?;
        }
        writeln!(f, "total: {}", self.total)?;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

pub fn validate_dataset(set: &QuestionSet) -> ValidationReport {
    let counts = set.category_counts();
    let total = set.len();
    let mut warnings = Vec::new();
    if set.is_empty() {
        warnings.push("empty dataset".to_string());
    }

    // The mock endpoint identifies questions by their body text.
    let mut bodies: HashMap<&str, &str> = HashMap::new();
    for q in set.questions() {
        if let Some(first) = bodies.insert(q.body.as_str(), q.id.as_str()) {
            warnings.push(format!("questions {first} and {} share the same text", q.id));
        }
        let mut texts = HashSet::new();
        for l in Letter::ALL {
            if !texts.insert(q.choice(l).trim()) {
                warnings.push(format!("question {}: duplicate choice text {:?}", q.id, q.choice(l)));
            }
        }
    }
    ValidationReport {
        counts,
        total,
        warnings,
    }
}
