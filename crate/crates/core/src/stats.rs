//! Per-question answer distributions, entropy and accuracy, and the binned
//! summaries built on top of them.
//!
//! Probabilities are plug-in frequencies. By default the denominator is the
//! number of *valid* replies; unparseable replies are tallied separately in
//! `n_invalid` and play no part in any statistic.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::client::store::SampleRecord;
use crate::dataset::{Category, Question, QuestionSet};
use crate::letter::Letter;

/// Maximum entropy over five outcomes, `ln 5`.
pub fn max_entropy() -> f64 {
    5f64.ln()
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("question {0}: no valid samples")]
    NoValidSamples(String),
    #[error("records for more than one question: {0} and {1}")]
    MixedQuestions(String, String),
    #[error("bin edges must be strictly ascending with at least two entries")]
    BadEdges,
}

/// Denominator for answer probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbabilityBase {
    /// `count / n_valid`; unparseable replies are excluded.
    #[default]
    Valid,
    /// `count / N`; unparseable replies still dilute the letter masses.
    Total,
}

impl FromStr for ProbabilityBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "valid" => Ok(Self::Valid),
            "total" => Ok(Self::Total),
            other => Err(format!("unknown probability base {other:?} (expected valid|total)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerDistribution {
    pub question_id: String,
    /// Indexed by [`Letter::index`].
    pub counts: [u32; 5],
    pub n_valid: u32,
    pub n_invalid: u32,
    pub probabilities: [f64; 5],
}

impl AnswerDistribution {
    pub fn from_parsed(
        question_id: impl Into<String>,
        parsed: impl IntoIterator<Item = Option<Letter>>,
        base: ProbabilityBase,
    ) -> Self {
        let mut counts = [0u32; 5];
        let mut n_invalid = 0;
        for p in parsed {
            match p {
                Some(l) => counts[l.index()] += 1,
                None => n_invalid += 1,
            }
        }
        let n_valid: u32 = counts.iter().sum();
        let denom = match base {
            ProbabilityBase::Valid => n_valid,
            ProbabilityBase::Total => n_valid + n_invalid,
        };
        let mut probabilities = [0.0; 5];
        if n_valid > 0 {
            for (p, &c) in probabilities.iter_mut().zip(&counts) {
                *p = c as f64 / denom as f64;
            }
        }
        Self {
            question_id: question_id.into(),
            counts,
            n_valid,
            n_invalid,
            probabilities,
        }
    }

    /// No valid replies: excluded from every aggregate.
    pub fn is_flagged(&self) -> bool {
        self.n_valid == 0
    }

    pub fn count(&self, letter: Letter) -> u32 {
        self.counts[letter.index()]
    }

    pub fn probability(&self, letter: Letter) -> f64 {
        self.probabilities[letter.index()]
    }

    /// Most frequent letter, ties broken alphabetically; the flag is set on a
    /// tie. For display only.
    pub fn majority(&self) -> Option<(Letter, bool)> {
        let max = *self.counts.iter().max()?;
        if max == 0 {
            return None;
        }
        let mut top = Letter::ALL.iter().filter(|l| self.count(**l) == max);
        let first = *top.next()?;
        Some((first, top.next().is_some()))
    }
}

/// Tallies the parsed letters of one question's records.
pub fn estimate_distribution(records: &[SampleRecord]) -> Result<AnswerDistribution, StatsError> {
    estimate_distribution_with(records, ProbabilityBase::Valid)
}

pub fn estimate_distribution_with(
    records: &[SampleRecord],
    base: ProbabilityBase,
) -> Result<AnswerDistribution, StatsError> {
    let id = records.first().map(|r| r.question_id.as_str()).unwrap_or_default();
    if let Some(other) = records.iter().find(|r| r.question_id != id) {
        return Err(StatsError::MixedQuestions(id.to_string(), other.question_id.clone()));
    }
    Ok(AnswerDistribution::from_parsed(
        id,
        records.iter().map(|r| r.parsed),
        base,
    ))
}

/// Plug-in Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn shannon_entropy(d: &AnswerDistribution) -> Result<f64, StatsError> {
    if d.is_flagged() {
        return Err(StatsError::NoValidSamples(d.question_id.clone()));
    }
    let h = d
        .probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .fold(0.0, |acc, &p| acc - p * p.ln());
    // Uniform-over-five can round a hair above ln 5.
    Ok(h.clamp(0.0, max_entropy()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionStats {
    pub question_id: String,
    pub category: Category,
    pub n_valid: u32,
    pub n_invalid: u32,
    pub accuracy: f64,
    pub error_rate: f64,
    pub entropy: f64,
}

pub fn compute_question_stats(
    q: &Question,
    d: &AnswerDistribution,
) -> Result<QuestionStats, StatsError> {
    let entropy = shannon_entropy(d)?;
    let accuracy = d.probability(q.correct);
    Ok(QuestionStats {
        question_id: q.id.clone(),
        category: q.category,
        n_valid: d.n_valid,
        n_invalid: d.n_invalid,
        accuracy,
        error_rate: 1.0 - accuracy,
        entropy,
    })
}

/// Stats for every question of `set` that has at least one valid record,
/// in dataset order, plus the ids of flagged questions.
pub fn summarize(
    set: &QuestionSet,
    records: &[SampleRecord],
    base: ProbabilityBase,
) -> (Vec<QuestionStats>, Vec<String>) {
    let mut by_question: BTreeMap<&str, Vec<Option<Letter>>> = BTreeMap::new();
    for r in records {
        by_question.entry(r.question_id.as_str()).or_default().push(r.parsed);
    }
    let mut stats = Vec::new();
    let mut flagged = Vec::new();
    for q in set.questions() {
        let parsed = by_question.remove(q.id.as_str()).unwrap_or_default();
        let d = AnswerDistribution::from_parsed(q.id.clone(), parsed, base);
        match compute_question_stats(q, &d) {
            Ok(s) => stats.push(s),
            Err(_) => flagged.push(q.id.clone()),
        }
    }
    (stats, flagged)
}

/// `bins + 1` evenly spaced edges with both endpoints exact.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    assert!(bins >= 1 && hi > lo, "uniform_edges needs bins >= 1 and hi > lo");
    let mut edges: Vec<f64> = (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect();
    edges[bins] = hi;
    edges
}

pub const DEFAULT_BINS: usize = 20;

pub fn default_entropy_edges(bins: usize) -> Vec<f64> {
    uniform_edges(0.0, max_entropy(), bins)
}

pub fn default_error_edges(bins: usize) -> Vec<f64> {
    uniform_edges(0.0, 1.0, bins)
}

fn check_edges(edges: &[f64]) -> Result<(), StatsError> {
    let ascending = edges.windows(2).all(|w| w[0] < w[1]);
    if edges.len() < 2 || !ascending || edges.iter().any(|e| !e.is_finite()) {
        return Err(StatsError::BadEdges);
    }
    Ok(())
}

/// Bins are `[lo, hi)` except the last, which is `[lo, hi]`.
fn bin_index(edges: &[f64], v: f64) -> Option<usize> {
    let last = *edges.last()?;
    if !(v >= edges[0] && v <= last) {
        return None;
    }
    if v == last {
        return Some(edges.len() - 2);
    }
    Some(edges.partition_point(|&e| e <= v) - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram1D {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Values outside `[edges[0], edges[last]]`, including NaN.
    pub out_of_range: u64,
}

impl Histogram1D {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn histogram_1d(values: &[f64], edges: &[f64]) -> Result<Histogram1D, StatsError> {
    check_edges(edges)?;
    let mut counts = vec![0u64; edges.len() - 1];
    let mut out_of_range = 0;
    for &v in values {
        match bin_index(edges, v) {
            Some(i) => counts[i] += 1,
            None => out_of_range += 1,
        }
    }
    Ok(Histogram1D {
        edges: edges.to_vec(),
        counts,
        out_of_range,
    })
}

/// Joint histogram of `(error_rate, entropy)` points.
///
/// `counts[i][j]` holds points with error rate in x-bin `i` and entropy in
/// y-bin `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram2D {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
    pub out_of_range: u64,
}

impl Histogram2D {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().flatten().copied().max().unwrap_or(0)
    }
}

pub fn histogram_2d(
    points: &[(f64, f64)],
    x_edges: &[f64],
    y_edges: &[f64],
) -> Result<Histogram2D, StatsError> {
    check_edges(x_edges)?;
    check_edges(y_edges)?;
    let mut counts = vec![vec![0u64; y_edges.len() - 1]; x_edges.len() - 1];
    let mut out_of_range = 0;
    for &(x, y) in points {
        match (bin_index(x_edges, x), bin_index(y_edges, y)) {
            (Some(i), Some(j)) => counts[i][j] += 1,
            _ => out_of_range += 1,
        }
    }
    Ok(Histogram2D {
        x_edges: x_edges.to_vec(),
        y_edges: y_edges.to_vec(),
        counts,
        out_of_range,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategorySummary {
    pub histogram: Histogram2D,
    pub n: usize,
    pub mean_accuracy: Option<f64>,
    pub mean_entropy: Option<f64>,
}

/// One joint histogram and mean accuracy/entropy per category. All five
/// categories are present in the result.
pub fn aggregate_by_category(
    stats: &[QuestionStats],
    x_edges: &[f64],
    y_edges: &[f64],
) -> Result<BTreeMap<Category, CategorySummary>, StatsError> {
    let mut out = BTreeMap::new();
    for cat in Category::ALL {
        let members: Vec<&QuestionStats> = stats.iter().filter(|s| s.category == cat).collect();
        let points: Vec<(f64, f64)> = members.iter().map(|s| (s.error_rate, s.entropy)).collect();
        let histogram = histogram_2d(&points, x_edges, y_edges)?;
        let n = members.len();
        let mean = |f: fn(&QuestionStats) -> f64| {
            (n > 0).then(|| members.iter().map(|s| f(s)).sum::<f64>() / n as f64)
        };
        out.insert(
            cat,
            CategorySummary {
                histogram,
                n,
                mean_accuracy: mean(|s| s.accuracy),
                mean_entropy: mean(|s| s.entropy),
            },
        );
    }
    Ok(out)
}
