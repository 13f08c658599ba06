//! Uniform client layer for the three model roles (planner, cover evaluator,
//! re-ranker) over a request/response transport.
//!
//! A [`Backend`] turns a [`BackendRequest`] into raw model text. [`call`] adds
//! request validation, bounded retries with exponential backoff and error
//! classification on top. Implementations: [`StubBackend`] (deterministic
//! rules), [`ReplayBackend`] / [`RecordingBackend`] (digest-keyed cache file),
//! [`HttpBackend`] (live JSON over HTTP) and the fault-injecting wrappers in
//! [`testing`].

mod evaluate;
mod http;
mod replay;
mod stub;
mod templates;
pub mod testing;

pub use evaluate::{evaluate_cover, rerank, CoverOutcome, RerankOutcome};
pub use http::{HttpBackend, HttpEndpoints};
pub use replay::{RecordingBackend, ReplayBackend, ReplayRecord, ReplayStore};
pub use stub::{stub_grade, StubBackend};
pub use templates::{TemplateIds, TemplateRegistry};

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{CandidateSet, Query};
use crate::planner::SubQueryPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Planner,
    VlmRelevance,
    VlmQuality,
    Reranker,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub role: Role,
    pub template_id: String,
    pub payload: Value,
}

impl BackendRequest {
    pub fn new(role: Role, template_id: impl Into<String>, payload: Value) -> Self {
        Self {
            role,
            template_id: template_id.into(),
            payload,
        }
    }

    /// Checks that the payload carries the fields its role needs.
    pub fn validate(&self) -> Result<(), String> {
        let has_str = |k: &str| self.payload.get(k).and_then(Value::as_str).is_some_and(|s| !s.is_empty());
        let required: &[&str] = match self.role {
            Role::Planner => &["query"],
            Role::VlmRelevance => &["query", "image"],
            Role::VlmQuality => &["image"],
            Role::Reranker => &["query"],
        };
        if let Some(missing) = required.iter().find(|k| !has_str(k)) {
            return Err(format!("{} request is missing `{missing}`", self.role));
        }
        if self.role == Role::Reranker && !self.payload.get("candidates").is_some_and(Value::is_array) {
            return Err("Reranker request is missing `candidates`".into());
        }
        if self.template_id.is_empty() {
            return Err("template_id is empty".into());
        }
        Ok(())
    }

    /// Stable hex SHA-256 over role, template id and the canonical payload.
    /// Object keys are serialised in sorted order, so field order never matters.
    pub fn digest(&self) -> String {
        let canonical = json!({
            "role": self.role,
            "template_id": self.template_id,
            "payload": self.payload,
        });
        let bytes = serde_json::to_vec(&canonical).expect("json values always serialise");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendResponse {
    /// Unmodified model output.
    pub raw_text: String,
    pub latency_ms: u64,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransportErrorKind {
    Timeout,
    Transport,
    Status(u16),
    ReplayMiss,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind:?}: {message}")]
pub struct TransportError {
    pub kind: TransportErrorKind,
    pub message: String,
    pub retryable: bool,
}

impl TransportError {
    pub fn timeout(message: impl Into<String>) -> Self {
        Self {
            kind: TransportErrorKind::Timeout,
            message: message.into(),
            retryable: true,
        }
    }

    pub fn transport(message: impl Into<String>) -> Self {
        Self {
            kind: TransportErrorKind::Transport,
            message: message.into(),
            retryable: true,
        }
    }

    /// 5xx and 429 are retried; other statuses are not.
    pub fn status(code: u16, message: impl Into<String>) -> Self {
        Self {
            kind: TransportErrorKind::Status(code),
            message: message.into(),
            retryable: code >= 500 || code == 429,
        }
    }

    pub fn replay_miss(digest: &str) -> Self {
        Self {
            kind: TransportErrorKind::ReplayMiss,
            message: format!("no recorded response for digest {digest}"),
            retryable: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{role} call failed after {attempts} attempt(s): {error}")]
    Transport {
        role: Role,
        attempts: u32,
        error: TransportError,
    },
    #[error("unusable {role} response: {message}")]
    BadResponse { role: Role, message: String },
}

/// A model client. Implementations must be shareable across worker threads.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn send(&self, request: &BackendRequest) -> Result<BackendResponse, TransportError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn send(&self, request: &BackendRequest) -> Result<BackendResponse, TransportError> {
        (**self).send(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn send(&self, request: &BackendRequest) -> Result<BackendResponse, TransportError> {
        (**self).send(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CallPolicy {
    /// Extra attempts after the first.
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for CallPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            backoff_ms: 200,
            timeout_ms: 30_000,
        }
    }
}

impl CallPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

pub fn call(request: &BackendRequest, backend: &dyn Backend, policy: &CallPolicy) -> Result<BackendResponse, GatewayError> {
    request.validate().map_err(GatewayError::InvalidRequest)?;
    let mut attempt = 0u32;
    loop {
        match backend.send(request) {
            Ok(resp) => return Ok(resp),
            Err(error) if error.retryable && attempt < policy.max_retries => {
                std::thread::sleep(policy.backoff(attempt));
                attempt += 1;
            }
            Err(error) => {
                return Err(GatewayError::Transport {
                    role: request.role,
                    attempts: attempt + 1,
                    error,
                })
            }
        }
    }
}

pub fn planner_request(query: &Query, template_id: &str) -> BackendRequest {
    BackendRequest::new(
        Role::Planner,
        template_id,
        json!({ "query": query.text, "session": query.session }),
    )
}

pub fn relevance_request(query: &Query, image: &str, template_id: &str) -> BackendRequest {
    BackendRequest::new(Role::VlmRelevance, template_id, json!({ "query": query.text, "image": image }))
}

pub fn quality_request(image: &str, template_id: &str) -> BackendRequest {
    BackendRequest::new(Role::VlmQuality, template_id, json!({ "image": image }))
}

/// Re-rank payload. Each candidate carries, in order: title, content, side
/// information, intent dimensions, cover relevance and cover quality
/// (grades are `null` when absent).
pub fn rerank_request(set: &CandidateSet, query: &Query, plan: Option<&SubQueryPlan>, template_id: &str) -> BackendRequest {
    let candidates: Vec<Value> = set
        .candidates
        .iter()
        .map(|c| {
            json!({
                "id": c.id,
                "title": c.title,
                "content": c.content,
                "side_info": c.side,
                "intent_dimensions": c.source_subquery_dimensions,
                "cover_relevance": c.relevance_grade.map(|g| g.value()),
                "cover_quality": c.quality_grade.map(|g| g.value()),
            })
        })
        .collect();
    let mut payload = json!({ "query": query.text, "candidates": candidates });
    if let Some(plan) = plan {
        payload["query_type"] = json!(plan.query_type);
        payload["subqueries"] = json!(plan.subqueries);
    }
    BackendRequest::new(Role::Reranker, template_id, payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        error: TransportError,
    }

    impl Backend for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }

        fn send(&self, _: &BackendRequest) -> Result<BackendResponse, TransportError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok(BackendResponse {
                    raw_text: "ok".into(),
                    latency_ms: 0,
                    backend_id: "flaky".into(),
                })
            }
        }
    }

    fn quick() -> CallPolicy {
        CallPolicy {
            max_retries: 2,
            backoff_ms: 1,
            timeout_ms: 100,
        }
    }

    fn req() -> BackendRequest {
        quality_request("img://x", "vlm-quality.v1")
    }

    #[test]
    fn retries_then_succeeds() {
        let b = Flaky {
            failures: 2,
            calls: AtomicU32::new(0),
            error: TransportError::timeout("slow"),
        };
        assert_eq!(call(&req(), &b, &quick()).unwrap().raw_text, "ok");
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_configured_retries() {
        let b = Flaky {
            failures: 10,
            calls: AtomicU32::new(0),
            error: TransportError::status(503, "busy"),
        };
        let err = call(&req(), &b, &quick()).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { attempts: 3, .. }), "{err}");
    }

    #[test]
    fn non_retryable_fails_immediately() {
        let b = Flaky {
            failures: 10,
            calls: AtomicU32::new(0),
            error: TransportError::status(400, "bad"),
        };
        assert!(matches!(
            call(&req(), &b, &quick()),
            Err(GatewayError::Transport { attempts: 1, .. })
        ));
        assert!(!TransportError::replay_miss("x").retryable);
        assert!(TransportError::status(429, "").retryable);
    }

    #[test]
    fn role_payload_requirements() {
        let q = Query::simple("cats").unwrap();
        assert!(relevance_request(&q, "img://a", "t").validate().is_ok());
        let missing_image = BackendRequest::new(Role::VlmRelevance, "t", json!({ "query": "cats" }));
        assert!(missing_image.validate().unwrap_err().contains("image"));
        let quality_only = BackendRequest::new(Role::VlmQuality, "t", json!({ "image": "img://a" }));
        assert!(quality_only.validate().is_ok());
        let no_cands = BackendRequest::new(Role::Reranker, "t", json!({ "query": "cats" }));
        assert!(no_cands.validate().is_err());
        let b = Flaky {
            failures: 0,
            calls: AtomicU32::new(0),
            error: TransportError::timeout(""),
        };
        assert!(matches!(
            call(&missing_image, &b, &quick()),
            Err(GatewayError::InvalidRequest(_))
        ));
    }

    #[test]
    fn digest_ignores_key_order_but_not_content() {
        let a = BackendRequest::new(Role::VlmRelevance, "t", json!({ "query": "q", "image": "i" }));
        let b: BackendRequest = serde_json::from_str(
            r#"{"role":"VlmRelevance","template_id":"t","payload":{"image":"i","query":"q"}}"#,
        )
        .unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
        let c = BackendRequest::new(Role::VlmRelevance, "t2", json!({ "query": "q", "image": "i" }));
        assert_ne!(a.digest(), c.digest());
    }
}
