use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendRequest, BackendResponse, Role, TemplateRegistry, TransportError};

/// Endpoint URL per role. Both cover-evaluation roles share `vlm`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpEndpoints {
    pub planner: String,
    pub vlm: String,
    pub reranker: String,
}

impl HttpEndpoints {
    pub fn for_role(&self, role: Role) -> &str {
        match role {
            Role::Planner => &self.planner,
            Role::VlmRelevance | Role::VlmQuality => &self.vlm,
            Role::Reranker => &self.reranker,
        }
    }
}

/// Live backend. POSTs `{role, template_id, prompt, payload}` as JSON and
/// reads the model text from a `{"text": ...}` reply; a body that is not such
/// an object is taken verbatim.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoints: HttpEndpoints,
    templates: TemplateRegistry,
    id: String,
}

impl HttpBackend {
    pub fn new(endpoints: HttpEndpoints, templates: TemplateRegistry, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            endpoints,
            templates,
            id: "live".into(),
        }
    }
}

fn classify(err: ureq::Error) -> TransportError {
    match err {
        ureq::Error::Timeout(t) => TransportError::timeout(format!("timed out ({t:?})")),
        ureq::Error::StatusCode(code) => TransportError::status(code, "error status"),
        ureq::Error::BadUri(u) => TransportError {
            retryable: false,
            ..TransportError::transport(format!("bad uri {u}"))
        },
        other => TransportError::transport(other.to_string()),
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, request: &BackendRequest) -> Result<BackendResponse, TransportError> {
        let prompt = self.templates.render(request).ok_or_else(|| TransportError {
            retryable: false,
            ..TransportError::transport(format!("unknown template {}", request.template_id))
        })?;
        let body = json!({
            "role": request.role,
            "template_id": request.template_id,
            "prompt": prompt,
            "payload": request.payload,
        });
        let started = Instant::now();
        let mut resp = self
            .agent
            .post(self.endpoints.for_role(request.role))
            .header("content-type", "application/json")
            .send(body.to_string())
            .map_err(classify)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(classify)?;
        if !(200..300).contains(&status) {
            return Err(TransportError::status(status, text.chars().take(200).collect::<String>()));
        }
        let raw_text = match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(map)) => match map.get("text") {
                Some(Value::String(s)) => s.clone(),
                _ => text,
            },
            _ => text,
        };
        Ok(BackendResponse {
            raw_text,
            latency_ms: started.elapsed().as_millis() as u64,
            backend_id: self.id.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{call, quality_request, CallPolicy, GatewayError, TransportErrorKind};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn endpoints(url: &str) -> HttpEndpoints {
        HttpEndpoints {
            planner: url.into(),
            vlm: url.into(),
            reranker: url.into(),
        }
    }

    /// Serves `replies` to consecutive connections and returns the request bodies.
    fn serve(replies: Vec<(u16, &'static str)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut out = stream;
                write!(
                    out,
                    "HTTP/1.1 {status} X\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    #[test]
    fn posts_json_and_reads_text() {
        let (url, handle) = serve(vec![(503, "busy"), (200, r#"{"text":"<answer>3</answer>"}"#)]);
        let b = HttpBackend::new(endpoints(&url), TemplateRegistry::builtin(), Duration::from_secs(5));
        let policy = CallPolicy {
            max_retries: 1,
            backoff_ms: 1,
            timeout_ms: 5000,
        };
        let resp = call(&quality_request("img://q.jpg", "vlm_quality.v1"), &b, &policy).unwrap();
        assert_eq!(resp.raw_text, "<answer>3</answer>");
        let bodies = handle.join().unwrap();
        let sent: Value = serde_json::from_str(&bodies[1]).unwrap();
        assert_eq!(sent["role"], "VlmQuality");
        assert_eq!(sent["payload"]["image"], "img://q.jpg");
        assert!(sent["prompt"].as_str().unwrap().contains("img://q.jpg"));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, handle) = serve(vec![(404, "nope")]);
        let b = HttpBackend::new(endpoints(&url), TemplateRegistry::builtin(), Duration::from_secs(5));
        let err = call(&quality_request("i", "vlm_quality.v1"), &b, &CallPolicy::default()).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { attempts: 1, error, .. } if error.kind == TransportErrorKind::Status(404)));
        handle.join().unwrap();
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        drop(listener);
        let b = HttpBackend::new(endpoints(&url), TemplateRegistry::builtin(), Duration::from_millis(500));
        let policy = CallPolicy {
            max_retries: 2,
            backoff_ms: 1,
            timeout_ms: 500,
        };
        let err = call(&quality_request("i", "vlm_quality.v1"), &b, &policy).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { attempts: 3, .. }), "{err}");
    }
}
