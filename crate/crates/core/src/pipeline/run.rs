use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PipelineConfig;
use crate::backend::{evaluate_cover, rerank, Backend, GatewayError};
use crate::model::{CandidateId, CandidateSet, Grade, Query, Ranking};
use crate::parser::{parse_rerank, RerankFormat};
use crate::planner::{merge_candidates, plan, MergeError, PlanError, SubQueryPlan};
use crate::retrieval::Retriever;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("planning: {0}")]
    Plan(#[from] PlanError),
    #[error("merging: {0}")]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl PipelineError {
    /// True when the failure came from a model backend rather than the input.
    pub fn is_backend(&self) -> bool {
        matches!(self, Self::Gateway(_) | Self::Plan(PlanError::Gateway(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverRecord {
    pub id: CandidateId,
    pub relevance: Option<Grade>,
    pub quality: Option<Grade>,
    /// Raw answers that yielded no grade.
    pub unparsed: Vec<String>,
}

/// Everything a run decided, enough to re-derive the final ranking offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub plan: SubQueryPlan,
    /// The merged set as sent to the re-ranker, grades filled in.
    pub candidates: CandidateSet,
    pub covers: Vec<CoverRecord>,
    pub backend_ids: BTreeSet<String>,
    pub rerank_raw: String,
    pub rerank_format: RerankFormat,
    pub fallback: bool,
}

impl Provenance {
    /// Parses the recorded re-rank answer again, falling back to input order
    /// exactly as the run did.
    pub fn rederive_ranking(&self) -> Ranking {
        let parsed = parse_rerank(&self.rerank_raw, &self.candidates);
        match (parsed.format_class, parsed.ids) {
            (RerankFormat::ValidAnswer, Some(ids)) => Ranking::new(ids),
            _ => self.candidates.input_order(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub ranking: Ranking,
    pub provenance: Provenance,
}

/// Plan, retrieve, merge, grade covers, re-rank.
pub fn run_pipeline(
    query: &Query,
    retriever: &dyn Retriever,
    backend: &dyn Backend,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let policy = &config.backend.call;
    let plan = plan(query, backend, policy, &config.templates.planner)?;
    let retrievals: Vec<_> = plan
        .subqueries
        .iter()
        .map(|sub| (sub.clone(), retriever.retrieve(sub, config.retrieval_k)))
        .collect();
    let mut set = merge_candidates(query, &retrievals, config.retrieval_k)?;

    let exec = config.execution();
    let graded = exec.map(&set.candidates, |c| evaluate_cover(c, query, backend, policy, &config.templates));
    let mut covers = Vec::with_capacity(set.len());
    let mut backend_ids = BTreeSet::new();
    for (cand, outcome) in set.candidates.iter_mut().zip(graded) {
        let outcome = outcome?;
        cand.relevance_grade = outcome.relevance;
        cand.quality_grade = outcome.quality;
        backend_ids.extend(outcome.backend_ids);
        covers.push(CoverRecord {
            id: cand.id.clone(),
            relevance: outcome.relevance,
            quality: outcome.quality,
            unparsed: outcome.unparsed,
        });
    }

    let ranked = rerank(&set, Some(&plan), backend, policy, &config.templates.reranker)?;
    backend_ids.insert(ranked.response.backend_id.clone());
    Ok(PipelineOutput {
        ranking: ranked.ranking,
        provenance: Provenance {
            plan,
            candidates: set,
            covers,
            backend_ids,
            rerank_raw: ranked.response.raw_text,
            rerank_format: ranked.format,
            fallback: ranked.fallback,
        },
    })
}
