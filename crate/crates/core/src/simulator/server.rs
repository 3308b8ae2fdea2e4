//! Mock chat-completion endpoint backed by a [`ResponderScript`].

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::{scripted_sample, ResponderScript, SimSeed};
use crate::client::SAMPLE_INDEX_HEADER;
use crate::dataset::QuestionSet;
use crate::prompting::render_question;

/// Knobs for exercising client error handling.
#[derive(Debug, Clone, Default)]
pub struct MockOptions {
    /// Status codes returned, in order, for the first requests before any
    /// scripted reply is served.
    pub leading_failures: Vec<u16>,
}

struct MockState {
    script: ResponderScript,
    seed: SimSeed,
    by_text: HashMap<String, String>,
    leading_failures: Vec<u16>,
    requests: AtomicUsize,
    // Fallback indices for clients that do not send the sample-index header.
    arrival: Mutex<HashMap<String, u32>>,
}

/// Running mock endpoint; shuts down when dropped.
pub struct MockHandle {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl MockHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to use as a client's `endpoint_url`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests received so far, including failed ones.
    pub fn request_count(&self) -> usize {
        self.state.requests.load(Ordering::SeqCst)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    /// Serves until the process is interrupted.
    pub async fn wait(mut self) {
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for MockHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Binds `bind_address` and serves `POST /chat/completions`.
///
/// The question is identified by exact match of the final user message
/// against the rendered questions of `set`.
pub async fn serve_mock(
    script: ResponderScript,
    seed: SimSeed,
    set: &QuestionSet,
    bind_address: &str,
    options: MockOptions,
) -> std::io::Result<MockHandle> {
    let mut by_text = HashMap::new();
    for q in set.questions() {
        by_text.insert(render_question(q), q.id.clone());
    }
    let state = Arc::new(MockState {
        script,
        seed,
        by_text,
        leading_failures: options.leading_failures,
        requests: AtomicUsize::new(0),
        arrival: Mutex::new(HashMap::new()),
    });
    let app = Router::new()
        .route("/chat/completions", post(handle))
        .route("/v1/chat/completions", post(handle))
        .with_state(Arc::clone(&state));

    let listener = tokio::net::TcpListener::bind(bind_address).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let serve = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = rx.await;
        });
        if let Err(e) = serve.await {
            tracing::error!(error = %e, "mock endpoint stopped");
        }
    });
    Ok(MockHandle {
        addr,
        state,
        shutdown: Some(tx),
        task: Some(task),
    })
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": {"message": message.into()}}))).into_response()
}

async fn handle(State(state): State<Arc<MockState>>, headers: HeaderMap, body: String) -> Response {
    let n = state.requests.fetch_add(1, Ordering::SeqCst);
    if let Some(&code) = state.leading_failures.get(n) {
        let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return error(status, "injected failure");
    }

    let Ok(body) = serde_json::from_str::<Value>(&body) else {
        return error(StatusCode::BAD_REQUEST, "body is not JSON");
    };
    let Some(messages) = body.get("messages").and_then(Value::as_array) else {
        return error(StatusCode::BAD_REQUEST, "missing messages array");
    };
    let last_user = messages
        .iter()
        .rev()
        .find(|m| m.get("role").and_then(Value::as_str) == Some("user"))
        .and_then(|m| m.get("content").and_then(Value::as_str));
    let Some(text) = last_user else {
        return error(StatusCode::BAD_REQUEST, "no user message");
    };
    let Some(question_id) = state.by_text.get(text) else {
        return error(StatusCode::BAD_REQUEST, "question text does not match the loaded set");
    };

    let header_index = headers
        .get(SAMPLE_INDEX_HEADER)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u32>().ok());
    let sample_index = match header_index {
        Some(i) => i,
        None => {
            let mut arrival = state.arrival.lock().expect("arrival lock");
            let slot = arrival.entry(question_id.clone()).or_insert(0);
            let i = *slot;
            *slot += 1;
            i
        }
    };

    match scripted_sample(&state.script, question_id, sample_index, state.seed) {
        Ok(reply) => {
            let model = body.get("model").cloned().unwrap_or(Value::Null);
            Json(json!({
                "id": format!("mock-{question_id}-{sample_index}"),
                "object": "chat.completion",
                "model": model,
                "choices": [{
                    "index": 0,
                    "message": {"role": "assistant", "content": reply},
                    "finish_reason": "stop"
                }]
            }))
            .into_response()
        }
        Err(e) => error(StatusCode::BAD_REQUEST, e.to_string()),
    }
}
