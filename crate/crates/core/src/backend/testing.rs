//! Backends for exercising failure paths.

use std::sync::Mutex;

use serde_json::Value;

use super::{Backend, BackendRequest, BackendResponse, Role, StubBackend, TransportError};
use crate::model::CandidateId;
use crate::parser::render_id_list;

#[derive(Debug, Default)]
struct FaultState {
    carry: f64,
    seen: u64,
    injected: u64,
}

/// Replaces a fixed fraction of re-ranker answers with malformed ones. Other
/// roles pass through untouched.
///
/// Injection uses an error-diffusion counter, so after `n` re-rank calls
/// exactly `floor(n * rate)` answers have been corrupted (up to float
/// rounding of the running sum). Which calls are hit depends on call order.
pub struct FaultInjectingBackend<B> {
    inner: B,
    rate: f64,
    state: Mutex<FaultState>,
}

impl<B: Backend> FaultInjectingBackend<B> {
    pub fn new(inner: B, rate: f64) -> Self {
        Self {
            inner,
            rate: rate.clamp(0.0, 1.0),
            state: Mutex::new(FaultState::default()),
        }
    }

    /// (re-rank calls seen, answers corrupted)
    pub fn counts(&self) -> (u64, u64) {
        let s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        (s.seen, s.injected)
    }

    fn should_inject(&self) -> Option<u64> {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        s.seen += 1;
        s.carry += self.rate;
        if s.carry >= 1.0 - 1e-9 {
            s.carry -= 1.0;
            s.injected += 1;
            Some(s.injected)
        } else {
            None
        }
    }
}

fn ids_of(request: &BackendRequest) -> Vec<CandidateId> {
    request
        .payload
        .get("candidates")
        .and_then(Value::as_array)
        .map(|cs| {
            cs.iter()
                .filter_map(|c| c.get("id").and_then(Value::as_str))
                .map(|s| CandidateId(s.to_owned()))
                .collect()
        })
        .unwrap_or_default()
}

/// One of several broken answers, chosen by `variant`.
pub fn malformed_answer(ids: &[CandidateId], variant: u64) -> String {
    match variant % 5 {
        0 => "I would put the first note on top.".to_owned(),
        1 => {
            let mut v = ids.to_vec();
            if let Some(first) = v.first().cloned() {
                v.push(first);
            }
            format!("<answer>{}</answer>", render_id_list(&v))
        }
        2 => {
            let v = &ids[..ids.len().saturating_sub(1)];
            format!("<answer>{}</answer>", render_id_list(v))
        }
        3 => {
            let mut v = ids.to_vec();
            v.push(CandidateId("not-a-candidate".into()));
            format!("<answer>{}</answer>", render_id_list(&v))
        }
        _ => "<think>hmm</think><answer>first, second</answer>".to_owned(),
    }
}

impl<B: Backend> Backend for FaultInjectingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn send(&self, request: &BackendRequest) -> Result<BackendResponse, TransportError> {
        let mut resp = self.inner.send(request)?;
        if request.role == Role::Reranker {
            if let Some(n) = self.should_inject() {
                resp.raw_text = malformed_answer(&ids_of(request), n);
            }
        }
        Ok(resp)
    }
}

/// Answers re-rank requests with the candidates in the order given and
/// delegates every other role to [`StubBackend`].
#[derive(Debug, Clone, Default)]
pub struct EchoBackend {
    stub: StubBackend,
}

impl Backend for EchoBackend {
    fn id(&self) -> &str {
        "echo"
    }

    fn send(&self, request: &BackendRequest) -> Result<BackendResponse, TransportError> {
        if request.role != Role::Reranker {
            return self.stub.send(request);
        }
        Ok(BackendResponse {
            raw_text: format!("<answer>{}</answer>", render_id_list(&ids_of(request))),
            latency_ms: 0,
            backend_id: "echo".into(),
        })
    }
}
