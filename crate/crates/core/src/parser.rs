//! Extraction of `<think>` / `<answer>` sections from raw model output and
//! classification of the answer into the format tiers the reward functions use.
//!
//! Tags are matched case-sensitively on their literal names. For each tag name
//! the first closed pair wins: the first closing tag that has an opening tag
//! before it, paired with the nearest such opening tag. Tag order between
//! `think` and `answer` does not matter.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::model::{CandidateId, CandidateSet};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSections {
    pub think: Option<String>,
    pub answer: Option<String>,
}

fn first_pair<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    let open = format!("<{name}>");
    let close = format!("</{name}>");
    let first_open = text.find(&open)?;
    let close_at = first_open + text[first_open..].find(&close)?;
    let open_at = text[..close_at].rfind(&open)?;
    Some(&text[open_at + open.len()..close_at])
}

pub fn extract_tagged_sections(text: &str) -> TaggedSections {
    TaggedSections {
        think: first_pair(text, "think").map(str::to_owned),
        answer: first_pair(text, "answer").map(str::to_owned),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GradingFormat {
    NoValidAnswer,
    NonIntegerAnswer,
    ValidAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedGradingResponse {
    pub think_text: Option<String>,
    pub answer_raw: Option<String>,
    pub grade: Option<i64>,
    pub format_class: GradingFormat,
}

/// Bare base-10 integer: optional sign then ASCII digits, nothing else.
fn parse_bare_integer(s: &str) -> Option<i64> {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

pub fn parse_grading(text: &str) -> ParsedGradingResponse {
    let TaggedSections { think, answer } = extract_tagged_sections(text);
    let content = answer.as_deref().map(str::trim).filter(|s| !s.is_empty());
    let (grade, format_class) = match content {
        None => (None, GradingFormat::NoValidAnswer),
        Some(s) => match parse_bare_integer(s) {
            Some(g) => (Some(g), GradingFormat::ValidAnswer),
            None => (None, GradingFormat::NonIntegerAnswer),
        },
    };
    ParsedGradingResponse {
        think_text: think,
        answer_raw: answer,
        grade,
        format_class,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RerankFormat {
    NoValidAnswer,
    DegenerateList,
    ValidAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedRerankResponse {
    pub think_text: Option<String>,
    pub answer_raw: Option<String>,
    pub ids: Option<Vec<CandidateId>>,
    pub format_class: RerankFormat,
}

/// Parses `[a, b, c]` into trimmed id tokens. Anything else, including empty
/// tokens, nested brackets or text outside the brackets, is not a list.
pub fn parse_id_list(answer: &str) -> Option<Vec<CandidateId>> {
    let inner = answer.trim().strip_prefix('[')?.strip_suffix(']')?;
    if inner.contains(['[', ']']) {
        return None;
    }
    if inner.trim().is_empty() {
        return Some(Vec::new());
    }
    inner
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            (!tok.is_empty()).then(|| CandidateId(tok.to_owned()))
        })
        .collect()
}

/// Renders ids in the list syntax [`parse_id_list`] accepts.
pub fn render_id_list<'a>(ids: impl IntoIterator<Item = &'a CandidateId>) -> String {
    let parts: Vec<&str> = ids.into_iter().map(CandidateId::as_str).collect();
    format!("[{}]", parts.join(", "))
}

fn is_complete_permutation(ids: &[CandidateId], set: &CandidateSet) -> bool {
    let allowed: HashSet<&CandidateId> = set.ids().collect();
    let mut seen = HashSet::with_capacity(ids.len());
    ids.len() == allowed.len() && ids.iter().all(|id| allowed.contains(id) && seen.insert(id))
}

pub fn parse_rerank(text: &str, set: &CandidateSet) -> ParsedRerankResponse {
    let TaggedSections { think, answer } = extract_tagged_sections(text);
    let ids = answer.as_deref().and_then(parse_id_list);
    let format_class = match &ids {
        None => RerankFormat::NoValidAnswer,
        Some(ids) if is_complete_permutation(ids, set) => RerankFormat::ValidAnswer,
        Some(_) => RerankFormat::DegenerateList,
    };
    ParsedRerankResponse {
        think_text: think,
        answer_raw: answer,
        ids,
        format_class,
    }
}
