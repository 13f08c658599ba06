use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendRequest, BackendResponse, TransportError};
use crate::pipeline::{parse_jsonl, DatasetError};

/// One line of a replay store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub digest: String,
    pub request: BackendRequest,
    pub raw_text: String,
    pub backend_id: String,
}

/// Digest-keyed responses loaded from an append-only JSONL file. When a digest
/// appears more than once the first record wins.
#[derive(Debug, Clone, Default)]
pub struct ReplayStore {
    records: HashMap<String, ReplayRecord>,
}

impl ReplayStore {
    /// A missing file is an empty store.
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let io_err = |source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(io_err(e)),
        };
        let mut records = HashMap::new();
        for rec in parse_jsonl::<ReplayRecord>(file)? {
            records.entry(rec.digest.clone()).or_insert(rec);
        }
        Ok(Self { records })
    }

    pub fn get(&self, digest: &str) -> Option<&ReplayRecord> {
        self.records.get(digest)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Answers only from a [`ReplayStore`]; unknown digests are a non-retryable miss.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    store: ReplayStore,
    id: String,
}

impl ReplayBackend {
    pub fn new(store: ReplayStore) -> Self {
        Self {
            store,
            id: "replay".into(),
        }
    }

    pub fn open(path: &Path) -> Result<Self, DatasetError> {
        Ok(Self::new(ReplayStore::load(path)?))
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, request: &BackendRequest) -> Result<BackendResponse, TransportError> {
        let digest = request.digest();
        let rec = self.store.get(&digest).ok_or_else(|| TransportError::replay_miss(&digest))?;
        Ok(BackendResponse {
            raw_text: rec.raw_text.clone(),
            latency_ms: 0,
            backend_id: rec.backend_id.clone(),
        })
    }
}

struct Recorder {
    file: File,
    seen: HashSet<String>,
}

/// Forwards to `inner` and appends each response with a not-yet-recorded
/// digest to the store file.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    state: Mutex<Recorder>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B, path: &Path) -> Result<Self, DatasetError> {
        let io_err = |source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        };
        let existing = ReplayStore::load(path)?;
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        Ok(Self {
            inner,
            path: path.to_owned(),
            state: Mutex::new(Recorder {
                file,
                seen: existing.records.into_keys().collect(),
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn send(&self, request: &BackendRequest) -> Result<BackendResponse, TransportError> {
        let resp = self.inner.send(request)?;
        let digest = request.digest();
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if !state.seen.contains(&digest) {
            let rec = ReplayRecord {
                digest: digest.clone(),
                request: request.clone(),
                raw_text: resp.raw_text.clone(),
                backend_id: resp.backend_id.clone(),
            };
            let mut line = serde_json::to_string(&rec).map_err(|e| TransportError::transport(e.to_string()))?;
            line.push('\n');
            state
                .file
                .write_all(line.as_bytes())
                .and_then(|_| state.file.flush())
                .map_err(|e| TransportError::transport(format!("{}: {e}", self.path.display())))?;
            state.seen.insert(digest);
        }
        Ok(resp)
    }
}
