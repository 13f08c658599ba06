use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    Backend, CallPolicy, HttpBackend, HttpEndpoints, RecordingBackend, ReplayBackend, StubBackend, TemplateIds,
    TemplateRegistry,
};
use crate::exec::Execution;
use crate::grpo::GrpoConfig;
use crate::metrics::DEFAULT_RBO_P;
use crate::reward::GammaWeights;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Stub,
    Replay,
    Live,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stub" => Ok(Self::Stub),
            "replay" => Ok(Self::Replay),
            "live" => Ok(Self::Live),
            other => Err(format!("unknown backend {other:?} (expected stub, replay or live)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Required for `live`.
    pub endpoints: Option<HttpEndpoints>,
    /// Read by `replay`.
    pub replay_store: Option<PathBuf>,
    /// When set, every response is appended to this store.
    pub record: Option<PathBuf>,
    /// Extra prompt templates (`<id>.txt`) that override the built-in ones.
    pub template_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub call: CallPolicy,
}

/// How sample agreement is scored by the consistency filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RboMode {
    /// Divided by the identity value, so identical lists score 1.
    #[default]
    Normalized,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyConfig {
    pub threshold: f64,
    pub mode: RboMode,
    /// Shuffled re-rank calls per set, on top of the unshuffled one.
    pub samples: usize,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            threshold: 0.9,
            mode: RboMode::Normalized,
            samples: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Candidates kept per sub-query.
    pub retrieval_k: usize,
    pub parallel: bool,
    /// Worker threads for parallel mode; `None` uses the global pool.
    pub concurrency: Option<usize>,
    pub rbo_p: f64,
    pub gammas: GammaWeights,
    pub consistency: ConsistencyConfig,
    pub backend: BackendConfig,
    pub templates: TemplateIds,
    pub grpo: GrpoConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            retrieval_k: 10,
            parallel: true,
            concurrency: None,
            rbo_p: DEFAULT_RBO_P,
            gammas: GammaWeights::default(),
            consistency: ConsistencyConfig::default(),
            backend: BackendConfig::default(),
            templates: TemplateIds::default(),
            grpo: GrpoConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config always serialises")
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.retrieval_k == 0 {
            return bad("retrieval_k must be positive".into());
        }
        if self.concurrency == Some(0) {
            return bad("concurrency must be positive".into());
        }
        if !(self.rbo_p > 0.0 && self.rbo_p < 1.0) {
            return bad(format!("rbo_p must lie in (0, 1), got {}", self.rbo_p));
        }
        if let Err(e) = self.gammas.validate() {
            return bad(e.to_string());
        }
        let c = &self.consistency;
        if !(0.0..=1.0).contains(&c.threshold) {
            return bad(format!("consistency.threshold must lie in [0, 1], got {}", c.threshold));
        }
        if c.samples == 0 {
            return bad("consistency.samples must be positive".into());
        }
        if let Err(e) = self.grpo.validate() {
            return bad(e.to_string());
        }
        match self.backend.kind {
            BackendKind::Live if self.backend.endpoints.is_none() => bad("live backend needs [backend.endpoints]".into()),
            BackendKind::Replay if self.backend.replay_store.is_none() => bad("replay backend needs backend.replay_store".into()),
            _ => Ok(()),
        }
    }

    pub fn template_registry(&self) -> Result<TemplateRegistry, ConfigError> {
        let reg = TemplateRegistry::builtin();
        let reg = match &self.backend.template_dir {
            Some(dir) => reg.with_dir(dir).map_err(|source| ConfigError::Io {
                path: dir.display().to_string(),
                source,
            })?,
            None => reg,
        };
        for id in [
            &self.templates.planner,
            &self.templates.vlm_relevance,
            &self.templates.vlm_quality,
            &self.templates.reranker,
        ] {
            if reg.get(id).is_none() {
                return Err(ConfigError::Invalid(format!("unknown template id {id:?}")));
            }
        }
        Ok(reg)
    }

    /// Builds the configured backend, wrapped in a recorder when `record` is set.
    pub fn build_backend(&self) -> Result<Box<dyn Backend>, ConfigError> {
        self.validate()?;
        let registry = self.template_registry()?;
        let store_err = |e: crate::pipeline::DatasetError| ConfigError::Invalid(e.to_string());
        let base: Box<dyn Backend> = match self.backend.kind {
            BackendKind::Stub => Box::new(StubBackend::default()),
            BackendKind::Replay => {
                let path = self.backend.replay_store.as_deref().expect("validated");
                Box::new(ReplayBackend::open(path).map_err(store_err)?)
            }
            BackendKind::Live => Box::new(HttpBackend::new(
                self.backend.endpoints.clone().expect("validated"),
                registry,
                Duration::from_millis(self.backend.call.timeout_ms),
            )),
        };
        match &self.backend.record {
            Some(path) => Ok(Box::new(RecordingBackend::new(base, path).map_err(store_err)?)),
            None => Ok(base),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml_string();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), cfg);
        assert_eq!(PipelineConfig::from_toml_str("").unwrap(), cfg);
    }

    #[test]
    fn partial_files_override_defaults() {
        let cfg = PipelineConfig::from_toml_str(
            r#"
            seed = 11
            retrieval_k = 5
            [consistency]
            threshold = 0.8
            mode = "truncated"
            [backend]
            kind = "live"
            max_retries = 4
            [backend.endpoints]
            planner = "http://localhost:9000/plan"
            vlm = "http://localhost:9000/vlm"
            reranker = "http://localhost:9000/rank"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.consistency.mode, RboMode::Truncated);
        assert_eq!(cfg.consistency.samples, 4);
        assert_eq!(cfg.backend.call.max_retries, 4);
        assert_eq!(cfg.backend.call.backoff_ms, CallPolicy::default().backoff_ms);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "retrieval_k = 0",
            "rbo_p = 1.0",
            "[consistency]\nthreshold = 1.5",
            "[backend]\nkind = \"live\"",
            "[backend]\nkind = \"replay\"",
            "[gammas]\ng1 = -1.0\ng2 = 0.2\ng3 = 0.2\ng4 = 0.2\ng5 = 0.2",
            "[grpo]\ngroup_size = 1",
            "typo_field = 3",
            "[templates]\nreranker = \"missing\"",
        ] {
            let res = PipelineConfig::from_toml_str(text).and_then(|c| c.template_registry().map(|_| ()));
            assert!(res.is_err(), "{text}");
        }
    }

    #[test]
    fn stub_backend_builds() {
        let b = PipelineConfig::default().build_backend().unwrap();
        assert_eq!(b.id(), "stub");
        assert_eq!("replay".parse::<BackendKind>(), Ok(BackendKind::Replay));
        assert!("x".parse::<BackendKind>().is_err());
    }
}
