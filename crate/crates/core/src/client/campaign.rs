//! Repeated-sampling campaign: every question asked `N` times.
//!
//! Existing records are reused, so rerunning a campaign only fetches the
//! missing `(question, sample_index)` pairs. Each request is built from
//! scratch with [`build_prompt`], so no request ever carries another
//! question's content.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::store::{SampleRecord, SampleStore, StoreError};
use super::{ClientError, ModelConfig, Responder, SampleRequest};
use crate::dataset::QuestionSet;
use crate::parsing::parse_answer;
use crate::prompting::{build_prompt, prompt_hash, ChatMessage, PromptTemplate};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MissingPair {
    pub question_id: String,
    pub sample_index: u32,
}

impl fmt::Display for MissingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.question_id, self.sample_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub dataset_digest: String,
    pub model: ModelConfig,
    pub repetitions: u32,
    pub prompt_hash_template: String,
    /// Only set for the scripted simulator backend.
    pub seed: Option<u64>,
    pub created_at: DateTime<Utc>,
    pub complete: bool,
    pub new_samples: usize,
    pub total_samples: usize,
    pub missing: Vec<MissingPair>,
    pub halted_by: Option<String>,
}

#[derive(Debug)]
pub struct CampaignOutcome {
    pub manifest: CampaignManifest,
    /// Every record of this model and prompt set now in the store, ordered
    /// by `(question_id, sample_index)`.
    pub records: Vec<SampleRecord>,
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone)]
pub struct CampaignOptions {
    pub seed: Option<u64>,
    pub clock: Clock,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        Self {
            seed: None,
            clock: Arc::new(Utc::now),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("repetitions must be >= 1")]
    Repetitions,
    #[error("cannot write manifest {path}: {source}")]
    Manifest {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Question id, its rendered messages and their hash.
type Prompt<'a> = (&'a str, Arc<Vec<ChatMessage>>, Arc<str>);

struct Job<'a> {
    question_id: &'a str,
    sample_index: u32,
    messages: Arc<Vec<ChatMessage>>,
    prompt_hash: Arc<str>,
}

/// Runs or resumes a campaign and writes its manifest next to the store.
///
/// Transport failures halt the campaign; the returned manifest is then
/// marked incomplete and lists every missing pair.
pub async fn run_campaign<R: Responder>(
    set: &QuestionSet,
    template: &PromptTemplate,
    cfg: &ModelConfig,
    repetitions: u32,
    store: &SampleStore,
    responder: &R,
    options: CampaignOptions,
) -> Result<CampaignOutcome, CampaignError> {
    if repetitions == 0 {
        return Err(CampaignError::Repetitions);
    }
    cfg.validate()?;
    let created_at = (options.clock)();

    let prompts: Vec<Prompt> = set
        .questions()
        .iter()
        .map(|q| {
            let messages = build_prompt(q, template);
            let hash: Arc<str> = prompt_hash(&messages).into();
            (q.id.as_str(), Arc::new(messages), hash)
        })
        .collect();

    let have = present_pairs(&store.load()?, &cfg.model_name, &prompts);
    let jobs: Vec<Job> = prompts
        .iter()
        .flat_map(|(id, messages, hash)| {
            (0..repetitions)
                .filter(|i| !have.contains(&(id.to_string(), *i)))
                .map(|i| Job {
                    question_id: id,
                    sample_index: i,
                    messages: Arc::clone(messages),
                    prompt_hash: Arc::clone(hash),
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut new_samples = 0;
    let mut halted_by = None;
    if !jobs.is_empty() {
        let mut writer = store.writer()?;
        let mut results = stream::iter(jobs)
            .map(|job| async move {
                let request = SampleRequest {
                    question_id: job.question_id,
                    sample_index: job.sample_index,
                    messages: &job.messages,
                };
                let reply = responder.respond(request).await;
                (job, reply)
            })
            .buffer_unordered(cfg.parallelism);
        while let Some((job, reply)) = results.next().await {
            match reply {
                Ok(raw_text) => {
                    let record = SampleRecord {
                        question_id: job.question_id.to_string(),
                        model_name: cfg.model_name.clone(),
                        sample_index: job.sample_index,
                        parsed: parse_answer(&raw_text).value,
                        raw_text,
                        prompt_hash: job.prompt_hash.to_string(),
                        timestamp: (options.clock)(),
                    };
                    writer.append(&record)?;
                    new_samples += 1;
                }
                Err(e) => {
                    tracing::warn!(question = job.question_id, sample = job.sample_index, error = %e, "halting campaign");
                    halted_by = Some(e.to_string());
                    break;
                }
            }
        }
    }

    // Completeness comes from what is on disk, not from what we think we wrote.
    let all = store.load()?;
    let relevant: HashSet<(&str, &str)> = prompts.iter().map(|(id, _, h)| (*id, &**h)).collect();
    let mut records: Vec<SampleRecord> = all
        .into_iter()
        .filter(|r| {
            r.model_name == cfg.model_name
                && r.sample_index < repetitions
                && relevant.contains(&(r.question_id.as_str(), r.prompt_hash.as_str()))
        })
        .collect();
    records.sort_by(|a, b| {
        (&a.question_id, a.sample_index).cmp(&(&b.question_id, b.sample_index))
    });
    let have = present_pairs(&records, &cfg.model_name, &prompts);
    let missing: Vec<MissingPair> = prompts
        .iter()
        .flat_map(|(id, _, _)| (0..repetitions).map(move |i| (*id, i)))
        .filter(|(id, i)| !have.contains(&(id.to_string(), *i)))
        .map(|(id, i)| MissingPair {
            question_id: id.to_string(),
            sample_index: i,
        })
        .collect();

    let manifest = CampaignManifest {
        dataset_digest: set.source_digest().to_string(),
        model: cfg.clone(),
        repetitions,
        prompt_hash_template: template.hash(),
        seed: options.seed,
        created_at,
        complete: missing.is_empty(),
        new_samples,
        total_samples: records.len(),
        missing,
        halted_by,
    };
    write_manifest(store, &manifest)?;
    Ok(CampaignOutcome { manifest, records })
}

fn present_pairs(
    records: &[SampleRecord],
    model: &str,
    prompts: &[Prompt],
) -> HashSet<(String, u32)> {
    let wanted: HashSet<(&str, &str)> = prompts.iter().map(|(id, _, h)| (*id, &**h)).collect();
    records
        .iter()
        .filter(|r| {
            r.model_name == model
                && wanted.contains(&(r.question_id.as_str(), r.prompt_hash.as_str()))
        })
        .map(|r| (r.question_id.clone(), r.sample_index))
        .collect()
}

pub fn write_manifest(store: &SampleStore, manifest: &CampaignManifest) -> Result<(), CampaignError> {
    let path = store.manifest_path();
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    text.push('\n');
    std::fs::write(&path, text).map_err(|source| CampaignError::Manifest { path, source })
}

pub fn read_manifest(store: &SampleStore) -> Option<CampaignManifest> {
    let text = std::fs::read_to_string(store.manifest_path()).ok()?;
    serde_json::from_str(&text).ok()
}
