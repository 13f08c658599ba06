use serde::{Deserialize, Serialize};

use super::{call, quality_request, relevance_request, rerank_request, Backend, BackendResponse, CallPolicy, GatewayError, TemplateIds};
use crate::model::{Candidate, CandidateSet, Grade, Query, Ranking};
use crate::parser::{parse_grading, parse_rerank, RerankFormat};
use crate::planner::SubQueryPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverOutcome {
    pub relevance: Option<Grade>,
    pub quality: Option<Grade>,
    /// Raw answers that could not be turned into an in-range grade.
    pub unparsed: Vec<String>,
    pub backend_ids: Vec<String>,
}

fn grade_from(resp: &BackendResponse, make: fn(i64) -> Result<Grade, crate::model::ModelError>) -> Option<Grade> {
    parse_grading(&resp.raw_text).grade.and_then(|g| make(g).ok())
}

/// Grades a candidate's cover on both scales. A candidate without a cover
/// gets no grades and causes no calls; an unparseable or out-of-range answer
/// leaves that grade absent.
pub fn evaluate_cover(
    candidate: &Candidate,
    query: &Query,
    backend: &dyn Backend,
    policy: &CallPolicy,
    templates: &TemplateIds,
) -> Result<CoverOutcome, GatewayError> {
    let mut out = CoverOutcome {
        relevance: None,
        quality: None,
        unparsed: Vec::new(),
        backend_ids: Vec::new(),
    };
    let Some(image) = candidate.cover_image_ref.as_deref() else {
        return Ok(out);
    };
    let rel = call(&relevance_request(query, image, &templates.vlm_relevance), backend, policy)?;
    let qual = call(&quality_request(image, &templates.vlm_quality), backend, policy)?;
    out.relevance = grade_from(&rel, Grade::relevance);
    out.quality = grade_from(&qual, Grade::quality);
    for (grade, resp) in [(out.relevance.is_none(), &rel), (out.quality.is_none(), &qual)] {
        if grade {
            out.unparsed.push(resp.raw_text.clone());
        }
    }
    out.backend_ids = vec![rel.backend_id, qual.backend_id];
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankOutcome {
    pub ranking: Ranking,
    /// Set when the answer was not a permutation of the set and input order was used.
    pub fallback: bool,
    pub format: RerankFormat,
    pub response: BackendResponse,
}

/// Asks the re-ranker for an ordering of `set`. Anything other than a full
/// permutation falls back to the input order with `fallback` set.
pub fn rerank(
    set: &CandidateSet,
    plan: Option<&SubQueryPlan>,
    backend: &dyn Backend,
    policy: &CallPolicy,
    template_id: &str,
) -> Result<RerankOutcome, GatewayError> {
    let response = call(&rerank_request(set, &set.query, plan, template_id), backend, policy)?;
    let parsed = parse_rerank(&response.raw_text, set);
    let (ranking, fallback) = match (parsed.format_class, parsed.ids) {
        (RerankFormat::ValidAnswer, Some(ids)) => (Ranking::new(ids), false),
        _ => (set.input_order(), true),
    };
    Ok(RerankOutcome {
        ranking,
        fallback,
        format: parsed.format_class,
        response,
    })
}
