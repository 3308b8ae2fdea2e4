#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, TimeZone, Utc};
use mcq_entropy::client::{CampaignOptions, ClientError, Responder, SampleRequest};
use mcq_entropy::dataset::{load_dataset, QuestionSet};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn toy_set() -> QuestionSet {
    load_dataset(fixture("toy_mlphys.jsonl")).expect("toy dataset loads")
}

pub fn fixed_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

/// Campaign options whose clock never moves.
pub fn fixed_options(seed: Option<u64>) -> CampaignOptions {
    CampaignOptions {
        seed,
        clock: Arc::new(fixed_time),
    }
}

/// Passes requests through until `limit` of them have succeeded, then fails
/// every later request like a dead connection.
pub struct FailAfter<R> {
    pub inner: R,
    pub limit: usize,
    pub served: AtomicUsize,
}

impl<R> FailAfter<R> {
    pub fn new(inner: R, limit: usize) -> Self {
        Self {
            inner,
            limit,
            served: AtomicUsize::new(0),
        }
    }
}

impl<R: Responder> Responder for FailAfter<R> {
    async fn respond(&self, request: SampleRequest<'_>) -> Result<String, ClientError> {
        if self.served.fetch_add(1, Ordering::SeqCst) >= self.limit {
            return Err(ClientError::Transport {
                status: None,
                attempts: 1,
                message: "connection reset".into(),
            });
        }
        self.inner.respond(request).await
    }
}

/// Records every request's id and message contents before delegating.
pub struct Recording<R> {
    pub inner: R,
    pub seen: Mutex<Vec<(String, Vec<String>)>>,
}

impl<R> Recording<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            seen: Mutex::new(Vec::new()),
        }
    }
}

impl<R: Responder> Responder for Recording<R> {
    async fn respond(&self, request: SampleRequest<'_>) -> Result<String, ClientError> {
        let contents = request.messages.iter().map(|m| m.content.clone()).collect();
        self.seen
            .lock()
            .unwrap()
            .push((request.question_id.to_string(), contents));
        self.inner.respond(request).await
    }
}
