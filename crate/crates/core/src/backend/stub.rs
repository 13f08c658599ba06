use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{Backend, BackendRequest, BackendResponse, Role, TransportError};
use crate::model::{CandidateId, Query};
use crate::parser::render_id_list;
use crate::planner::rule_stub_plan;

/// Deterministic rule-based backend. Every answer is a pure function of the
/// request payload.
#[derive(Debug, Clone)]
pub struct StubBackend {
    id: String,
}

impl Default for StubBackend {
    fn default() -> Self {
        Self { id: "stub".into() }
    }
}

impl StubBackend {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

/// Grade in 1..=4 from a fixed hash of the given parts.
pub fn stub_grade(parts: &[&str]) -> i64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let d = h.finalize();
    1 + (d[0] % 4) as i64
}

fn str_field<'a>(payload: &'a Value, key: &str) -> Result<&'a str, TransportError> {
    payload
        .get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::status(400, format!("missing `{key}`")))
}

fn stub_plan(payload: &Value) -> Result<String, TransportError> {
    let text = str_field(payload, "query")?;
    let session = payload
        .get("session")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).map(str::to_owned).collect())
        .unwrap_or_default();
    let query = Query::new(text, session).map_err(|e| TransportError::status(400, e.to_string()))?;
    let plan = rule_stub_plan(&query);
    let body = json!({ "query_type": plan.query_type, "subqueries": plan.subqueries });
    Ok(format!("<think>keyword rules</think><answer>{body}</answer>"))
}

/// Orders by (cover relevance, cover quality, click-through rate) descending,
/// then id ascending. Missing grades count as 0.
fn stub_rerank(payload: &Value) -> Result<String, TransportError> {
    let candidates = payload
        .get("candidates")
        .and_then(Value::as_array)
        .ok_or_else(|| TransportError::status(400, "missing `candidates`"))?;
    let mut rows: Vec<(i64, i64, f64, CandidateId)> = candidates
        .iter()
        .map(|c| {
            let id = c.get("id").and_then(Value::as_str).unwrap_or_default();
            (
                c.get("cover_relevance").and_then(Value::as_i64).unwrap_or(0),
                c.get("cover_quality").and_then(Value::as_i64).unwrap_or(0),
                c.pointer("/side_info/click_through_rate").and_then(Value::as_f64).unwrap_or(0.0),
                CandidateId(id.to_owned()),
            )
        })
        .collect();
    rows.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(b.1.cmp(&a.1))
            .then(b.2.total_cmp(&a.2))
            .then_with(|| a.3.cmp(&b.3))
    });
    let list = render_id_list(rows.iter().map(|r| &r.3));
    Ok(format!("<think>sorted by cover grades then click-through rate</think><answer>{list}</answer>"))
}

impl Backend for StubBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, request: &BackendRequest) -> Result<BackendResponse, TransportError> {
        let p = &request.payload;
        let raw_text = match request.role {
            Role::Planner => stub_plan(p)?,
            Role::VlmRelevance => {
                let g = stub_grade(&["relevance", str_field(p, "query")?, str_field(p, "image")?]);
                format!("<think>compared the cover with the query</think><answer>{g}</answer>")
            }
            Role::VlmQuality => {
                let g = stub_grade(&["quality", str_field(p, "image")?]);
                format!("<think>checked sharpness and framing</think><answer>{g}</answer>")
            }
            Role::Reranker => stub_rerank(p)?,
        };
        Ok(BackendResponse {
            raw_text,
            latency_ms: 0,
            backend_id: self.id.clone(),
        })
    }
}
