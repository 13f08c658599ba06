//! Session-aware query planning and merging of per-sub-query retrievals.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{call, planner_request, Backend, CallPolicy, GatewayError};
use crate::model::{Candidate, CandidateId, CandidateSet, IntentDimension, Query, QueryType, SubQuery};
use crate::parser::extract_tagged_sections;

use IntentDimension::{Authoritativeness, HighFreshness, PersonalExperience};

/// Most sub-queries the rule planner emits.
pub const MAX_SUBQUERIES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQueryPlan {
    pub original: Query,
    pub query_type: QueryType,
    pub subqueries: Vec<SubQuery>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanViolation {
    #[error("plan has no sub-queries")]
    NoSubqueries,
    #[error("simple query must have exactly one sub-query, got {count}")]
    SimpleNotSingle { count: usize },
    #[error("empty sub-query text")]
    EmptySubquery,
    #[error("duplicate sub-query {text:?}")]
    DuplicateSubquery { text: String },
}

impl SubQueryPlan {
    pub fn violations(&self) -> Vec<PlanViolation> {
        let mut out = Vec::new();
        if self.subqueries.is_empty() {
            out.push(PlanViolation::NoSubqueries);
        }
        if self.query_type == QueryType::Simple && self.subqueries.len() > 1 {
            out.push(PlanViolation::SimpleNotSingle {
                count: self.subqueries.len(),
            });
        }
        let mut seen = HashSet::new();
        for s in &self.subqueries {
            let key = s.text.trim();
            if key.is_empty() {
                out.push(PlanViolation::EmptySubquery);
            } else if !seen.insert(key.to_lowercase()) {
                out.push(PlanViolation::DuplicateSubquery { text: s.text.clone() });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("malformed planner output: {0}")]
    Malformed(String),
    #[error("invalid plan: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<PlanViolation>),
}

const TYPOS: &[(&str, &str)] = &[
    ("tutoral", "tutorial"),
    ("recipie", "recipe"),
    ("wether", "weather"),
    ("resturant", "restaurant"),
    ("itinery", "itinerary"),
    ("accomodation", "accommodation"),
];

const TIME_WORDS: &[&str] = &["today", "now", "latest", "weather", "tonight", "news", "2024", "2025", "2026"];

const BROAD_SUFFIXES: &[&str] = &[" travel guide", " guide", " travel", " tips", " ideas"];

fn words_lower(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Case-insensitive find. Falls back to an exact search when lowercasing
/// changes byte offsets.
fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    let lower = haystack.to_lowercase();
    if lower.len() == haystack.len() {
        lower.find(&needle.to_lowercase())
    } else {
        haystack.find(needle)
    }
}

fn split_any<'a>(text: &'a str, seps: &[&str]) -> Option<Vec<&'a str>> {
    for sep in seps {
        if let Some(pos) = find_ci(text, sep) {
            let (a, b) = (&text[..pos], &text[pos + sep.len()..]);
            return Some(vec![a.trim(), b.trim()]);
        }
    }
    None
}

fn comparison_entities(text: &str) -> Option<(String, String)> {
    let trimmed = text.trim().trim_end_matches(['?', '.', '!']);
    let tail = trimmed.rsplit(',').next().unwrap_or(trimmed).trim();
    let tail = match find_ci(tail, "compare ") {
        Some(0) => &tail["compare ".len()..],
        _ => tail,
    };
    let parts = split_any(tail, &[" vs. ", " vs ", " versus ", " or ", " and "])?;
    let (a, b) = (parts[0], parts[1]);
    (!a.is_empty() && !b.is_empty()).then(|| (a.to_owned(), b.to_owned()))
}

fn looks_comparative(text: &str) -> bool {
    let lower = format!(" {} ", text.to_lowercase());
    [" vs ", " vs. ", " versus ", "which is", "compare "].iter().any(|k| lower.contains(k))
        || (lower.contains(" or ") && lower.contains("better"))
}

fn broad_head(text: &str) -> Option<(String, bool)> {
    let trimmed = text.trim();
    let lower = trimmed.to_lowercase();
    BROAD_SUFFIXES.iter().find_map(|suffix| {
        let cut = trimmed.len().checked_sub(suffix.len())?;
        let tail = trimmed.get(cut..)?;
        tail.eq_ignore_ascii_case(suffix).then(|| {
            let head = trimmed[..cut].trim().to_owned();
            (head, lower.contains("travel"))
        })
    })
}

fn remove_ci(haystack: &str, needle: &str) -> String {
    match find_ci(haystack, needle) {
        Some(pos) => format!("{}{}", &haystack[..pos], &haystack[pos + needle.len()..]),
        None => haystack.to_owned(),
    }
}

fn push_unique(out: &mut Vec<SubQuery>, sub: SubQuery) {
    let key = sub.text.trim().to_lowercase();
    if out.len() < MAX_SUBQUERIES && !key.is_empty() && out.iter().all(|s| s.text.trim().to_lowercase() != key) {
        out.push(sub);
    }
}

fn complex_plan(query: &Query, a: &str, b: &str) -> Vec<SubQuery> {
    let head = format!("{a} vs {b}");
    let mut out = Vec::new();
    for entry in &query.session {
        let facet = remove_ci(&remove_ci(entry, a), b);
        let facet = facet.split_whitespace().collect::<Vec<_>>().join(" ");
        if !facet.is_empty() {
            push_unique(
                &mut out,
                SubQuery::new(format!("{head} {facet} comparison"), [Authoritativeness, PersonalExperience]),
            );
        }
    }
    push_unique(&mut out, SubQuery::new(format!("{head} cost performance"), [PersonalExperience]));
    push_unique(&mut out, SubQuery::new(format!("{head} specifications"), [Authoritativeness]));
    push_unique(&mut out, SubQuery::new(format!("{head} user reviews"), [PersonalExperience]));
    out
}

fn broad_plan(query: &Query, head: &str, travel: bool) -> Vec<SubQuery> {
    let templates: [(String, Vec<IntentDimension>); 4] = if travel {
        [
            (format!("Recommended attractions in {head}"), vec![PersonalExperience]),
            (format!("Latest events in {head}"), vec![Authoritativeness, HighFreshness]),
            (format!("{head} transportation guide"), vec![Authoritativeness]),
            (format!("Budget accommodation guide in {head}"), vec![PersonalExperience]),
        ]
    } else {
        [
            (format!("{head} basics for beginners"), vec![Authoritativeness]),
            (format!("Latest {head} trends"), vec![Authoritativeness, HighFreshness]),
            (format!("{head} lessons learned"), vec![PersonalExperience]),
            (format!("Best {head} recommendations"), vec![PersonalExperience]),
        ]
    };
    let mut out = Vec::new();
    let session_last = query.session.last().map(|s| s.trim()).filter(|s| !s.is_empty());
    let keep = if session_last.is_some() { MAX_SUBQUERIES - 1 } else { MAX_SUBQUERIES };
    for (text, dims) in templates.into_iter().take(keep) {
        push_unique(&mut out, SubQuery::new(text, dims));
    }
    if let Some(last) = session_last {
        push_unique(&mut out, SubQuery::new(last, [PersonalExperience]));
    }
    out
}

fn simple_plan(query: &Query) -> SubQuery {
    let fixed: Vec<String> = query
        .text
        .split_whitespace()
        .map(|w| {
            let lower = w.to_lowercase();
            TYPOS
                .iter()
                .find(|(bad, _)| *bad == lower)
                .map_or_else(|| w.to_owned(), |(_, good)| good.to_string())
        })
        .collect();
    let text = fixed.join(" ");
    let mut dims = vec![Authoritativeness];
    if words_lower(&text).iter().any(|w| TIME_WORDS.contains(&w.as_str())) {
        dims.push(HighFreshness);
    }
    SubQuery::new(text, dims)
}

/// Deterministic keyword planner used by the stub backend and as a reference.
pub fn rule_stub_plan(query: &Query) -> SubQueryPlan {
    let (query_type, subqueries) = match (looks_comparative(&query.text), comparison_entities(&query.text)) {
        (true, Some((a, b))) => (QueryType::Complex, complex_plan(query, &a, &b)),
        _ => match broad_head(&query.text) {
            Some((head, travel)) if !head.is_empty() => (QueryType::BroadNeeds, broad_plan(query, &head, travel)),
            _ => (QueryType::Simple, vec![simple_plan(query)]),
        },
    };
    SubQueryPlan {
        original: query.clone(),
        query_type,
        subqueries,
    }
}

#[derive(Deserialize)]
struct PlanWire {
    query_type: QueryType,
    subqueries: Vec<SubQuery>,
}

/// Parses planner output: a JSON object, optionally inside answer tags.
pub fn parse_plan(query: &Query, raw: &str) -> Result<SubQueryPlan, PlanError> {
    let sections = extract_tagged_sections(raw);
    let body = sections.answer.as_deref().unwrap_or(raw).trim();
    let wire: PlanWire = serde_json::from_str(body).map_err(|e| PlanError::Malformed(e.to_string()))?;
    let plan = SubQueryPlan {
        original: query.clone(),
        query_type: wire.query_type,
        subqueries: wire.subqueries,
    };
    let violations = plan.violations();
    if violations.is_empty() {
        Ok(plan)
    } else {
        Err(PlanError::Invalid(violations))
    }
}

pub fn plan(query: &Query, backend: &dyn Backend, policy: &CallPolicy, template_id: &str) -> Result<SubQueryPlan, PlanError> {
    let response = call(&planner_request(query, template_id), backend, policy)?;
    parse_plan(query, &response.raw_text)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("retrieval for {subquery:?} returned {got} candidates, more than k = {k}")]
    TooMany { subquery: String, got: usize, k: usize },
    #[error("no candidates retrieved")]
    NoCandidates,
}

/// Unions per-sub-query retrievals into one set. The first occurrence of an
/// id keeps its position and fields; intent dimensions accumulate over every
/// sub-query that retrieved it.
pub fn merge_candidates(query: &Query, retrievals: &[(SubQuery, Vec<Candidate>)], k: usize) -> Result<CandidateSet, MergeError> {
    let mut merged: Vec<Candidate> = Vec::new();
    let mut index: HashMap<CandidateId, usize> = HashMap::new();
    for (sub, found) in retrievals {
        if found.len() > k {
            return Err(MergeError::TooMany {
                subquery: sub.text.clone(),
                got: found.len(),
                k,
            });
        }
        for c in found {
            let slot = match index.get(&c.id) {
                Some(&i) => i,
                None => {
                    index.insert(c.id.clone(), merged.len());
                    merged.push(c.clone());
                    merged.len() - 1
                }
            };
            let dims = &mut merged[slot].source_subquery_dimensions;
            dims.extend(c.source_subquery_dimensions.iter().copied());
            dims.extend(sub.dimensions.iter().copied());
        }
    }
    if merged.is_empty() {
        return Err(MergeError::NoCandidates);
    }
    Ok(CandidateSet::new(query.clone(), merged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::side;

    fn q(text: &str, session: &[&str]) -> Query {
        Query::new(text, session.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn comparison_uses_session_facets() {
        let plan = rule_stub_plan(&q(
            "iPhone 15 vs Huawei Mate 60",
            &["iPhone 15 battery life", "Huawei Mate 60 camera quality"],
        ));
        assert_eq!(plan.query_type, QueryType::Complex);
        let texts: Vec<&str> = plan.subqueries.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(
            texts,
            [
                "iPhone 15 vs Huawei Mate 60 battery life comparison",
                "iPhone 15 vs Huawei Mate 60 camera quality comparison",
                "iPhone 15 vs Huawei Mate 60 cost performance",
                "iPhone 15 vs Huawei Mate 60 specifications",
            ]
        );
        assert!(plan.subqueries[0].dimensions.contains(&Authoritativeness));
        assert!(plan.violations().is_empty());
    }

    #[test]
    fn which_is_better_form() {
        let plan = rule_stub_plan(&q("Which is better to buy, Kindle or Kobo?", &[]));
        assert_eq!(plan.query_type, QueryType::Complex);
        assert_eq!(plan.subqueries[0].text, "Kindle vs Kobo cost performance");
    }

    #[test]
    fn broad_travel_templates() {
        let plan = rule_stub_plan(&q("Beijing travel guide", &[]));
        assert_eq!(plan.query_type, QueryType::BroadNeeds);
        assert_eq!(plan.subqueries.len(), 4);
        assert_eq!(plan.subqueries[0].text, "Recommended attractions in Beijing");
        assert!(plan.subqueries[1].dimensions.contains(&HighFreshness));
        let with_session = rule_stub_plan(&q("Beijing travel guide", &["Cheap hostels near Houhai"]));
        assert_eq!(with_session.subqueries.len(), 4);
        assert_eq!(with_session.subqueries[3].text, "Cheap hostels near Houhai");
    }

    #[test]
    fn simple_fixes_typos_and_flags_freshness() {
        let plan = rule_stub_plan(&q("Python tutoral", &[]));
        assert_eq!(plan.query_type, QueryType::Simple);
        assert_eq!(plan.subqueries, vec![SubQuery::new("Python tutorial", [Authoritativeness])]);
        let plan = rule_stub_plan(&q("weather today", &[]));
        assert!(plan.subqueries[0].dimensions.contains(&HighFreshness));
        assert_eq!(plan.subqueries[0].text, "weather today");
    }

    #[test]
    fn parse_plan_validates() {
        let query = q("weather today", &[]);
        let ok = r#"<think>easy</think><answer>{"query_type":"Simple","subqueries":[{"text":"weather today","dimensions":["HighFreshness"]}]}</answer>"#;
        assert_eq!(parse_plan(&query, ok).unwrap().subqueries.len(), 1);
        let two = r#"{"query_type":"Simple","subqueries":[{"text":"a"},{"text":"b"}]}"#;
        assert!(matches!(parse_plan(&query, two), Err(PlanError::Invalid(v)) if v == vec![PlanViolation::SimpleNotSingle { count: 2 }]));
        let dup = r#"{"query_type":"Complex","subqueries":[{"text":"a"},{"text":" A "}]}"#;
        assert!(matches!(parse_plan(&query, dup), Err(PlanError::Invalid(_))));
        let empty = r#"{"query_type":"BroadNeeds","subqueries":[]}"#;
        assert!(matches!(parse_plan(&query, empty), Err(PlanError::Invalid(v)) if v == vec![PlanViolation::NoSubqueries]));
        assert!(matches!(parse_plan(&query, "no json"), Err(PlanError::Malformed(_))));
    }

    fn cand(id: &str, dims: &[IntentDimension]) -> Candidate {
        let mut c = Candidate::new(id, id, "", side());
        c.source_subquery_dimensions.extend(dims.iter().copied());
        c
    }

    #[test]
    fn merge_dedups_and_unions_dimensions() {
        let query = q("x", &[]);
        let r = vec![
            (SubQuery::new("s1", [Authoritativeness]), vec![cand("a", &[]), cand("b", &[])]),
            (SubQuery::new("s2", [PersonalExperience]), vec![cand("b", &[HighFreshness]), cand("c", &[])]),
        ];
        let set = merge_candidates(&query, &r, 2).unwrap();
        let ids: Vec<&str> = set.ids().map(CandidateId::as_str).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(set.candidates[1].source_subquery_dimensions.len(), 3);
        // merging the merged set back in changes nothing
        let again = merge_candidates(&query, &[(SubQuery::new("s3", []), set.candidates.clone())], 3).unwrap();
        assert_eq!(again, set);
        assert!(matches!(merge_candidates(&query, &r, 1), Err(MergeError::TooMany { .. })));
        assert_eq!(
            merge_candidates(&query, &[(SubQuery::new("s", []), vec![])], 2),
            Err(MergeError::NoCandidates)
        );
    }
}
