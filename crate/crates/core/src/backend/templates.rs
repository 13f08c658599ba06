use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BackendRequest, Role};

const BUILTIN: &[(&str, &str)] = &[
    ("planner.v1", include_str!("../../templates/planner.v1.txt")),
    ("vlm_relevance.v1", include_str!("../../templates/vlm_relevance.v1.txt")),
    ("vlm_quality.v1", include_str!("../../templates/vlm_quality.v1.txt")),
    ("reranker.v1", include_str!("../../templates/reranker.v1.txt")),
];

/// Which template each role uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateIds {
    pub planner: String,
    pub vlm_relevance: String,
    pub vlm_quality: String,
    pub reranker: String,
}

impl Default for TemplateIds {
    fn default() -> Self {
        Self {
            planner: "planner.v1".into(),
            vlm_relevance: "vlm_relevance.v1".into(),
            vlm_quality: "vlm_quality.v1".into(),
            reranker: "reranker.v1".into(),
        }
    }
}

impl TemplateIds {
    pub fn for_role(&self, role: Role) -> &str {
        match role {
            Role::Planner => &self.planner,
            Role::VlmRelevance => &self.vlm_relevance,
            Role::VlmQuality => &self.vlm_quality,
            Role::Reranker => &self.reranker,
        }
    }
}

/// Prompt texts keyed by template id. `{field}` placeholders are filled from
/// the request payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRegistry {
    texts: BTreeMap<String, String>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateRegistry {
    pub fn builtin() -> Self {
        Self {
            texts: BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Adds every `*.txt` file in `dir`, keyed by file stem. Files override builtins.
    pub fn with_dir(mut self, dir: &Path) -> std::io::Result<Self> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.path());
        for entry in entries {
            let path = entry.path();
            if path.extension().is_some_and(|e| e == "txt") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    self.texts.insert(stem.to_owned(), std::fs::read_to_string(&path)?);
                }
            }
        }
        Ok(self)
    }

    pub fn insert(&mut self, id: impl Into<String>, text: impl Into<String>) {
        self.texts.insert(id.into(), text.into());
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.texts.get(id).map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.texts.keys().map(String::as_str)
    }

    /// The prompt for `request`, or `None` for an unknown template id.
    pub fn render(&self, request: &BackendRequest) -> Option<String> {
        let mut text = self.get(&request.template_id)?.to_owned();
        if let Value::Object(fields) = &request.payload {
            for (key, value) in fields {
                let rendered = match value {
                    Value::String(s) => s.clone(),
                    Value::Array(items) if items.iter().all(Value::is_string) => items
                        .iter()
                        .filter_map(Value::as_str)
                        .map(|s| format!("- {s}"))
                        .collect::<Vec<_>>()
                        .join("\n"),
                    other => serde_json::to_string_pretty(other).unwrap_or_default(),
                };
                text = text.replace(&format!("{{{key}}}"), &rendered);
            }
        }
        Some(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{planner_request, quality_request};
    use crate::model::Query;

    #[test]
    fn builtins_cover_every_default_id() {
        let reg = TemplateRegistry::builtin();
        let ids = TemplateIds::default();
        for role in [Role::Planner, Role::VlmRelevance, Role::VlmQuality, Role::Reranker] {
            assert!(reg.get(ids.for_role(role)).is_some(), "{role}");
        }
    }

    #[test]
    fn render_fills_placeholders() {
        let reg = TemplateRegistry::builtin();
        let q = Query::new("Yunnan travel", vec!["Lijiang old town".into()]).unwrap();
        let text = reg.render(&planner_request(&q, "planner.v1")).unwrap();
        assert!(text.contains("Current query: Yunnan travel"));
        assert!(text.contains("- Lijiang old town"));
        let text = reg.render(&quality_request("img://a.jpg", "vlm_quality.v1")).unwrap();
        assert!(text.contains("img://a.jpg") && !text.contains("{image}"));
        assert!(reg.render(&quality_request("x", "nope")).is_none());
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("vlm_quality.v1.txt"), "rate {image}").unwrap();
        std::fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        let reg = TemplateRegistry::builtin().with_dir(dir.path()).unwrap();
        assert_eq!(reg.render(&quality_request("i", "vlm_quality.v1")).unwrap(), "rate i");
        assert!(reg.get("notes").is_none());
    }
}
