//! Per-response rewards for the cover-grading tasks and the listwise re-rank task.
//!
//! Every response earns a format reward for structural validity plus a task
//! reward for answer quality; [`overall_reward`] adds them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricError, MetricScores};
use crate::model::{crosses_boundary, CandidateSet, Grade, Ranking};
use crate::parser::{
    parse_grading, parse_rerank, GradingFormat, ParsedGradingResponse, ParsedRerankResponse, RerankFormat,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("predicted and true grades are on different scales")]
    DimensionMismatch,
    #[error("invalid gamma weights: {0}")]
    InvalidGammas(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Relevance,
    Quality,
    Rerank,
}

/// Weights for NDCG@10, Recall@10, RBO, NDCG@4 and Recall@4, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaWeights {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
    pub g5: f64,
}

impl Default for GammaWeights {
    fn default() -> Self {
        Self::uniform(0.2)
    }
}

impl GammaWeights {
    pub fn new(g1: f64, g2: f64, g3: f64, g4: f64, g5: f64) -> Result<Self, RewardError> {
        let g = Self { g1, g2, g3, g4, g5 };
        g.validate()?;
        Ok(g)
    }

    pub fn uniform(w: f64) -> Self {
        Self { g1: w, g2: w, g3: w, g4: w, g5: w }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.g1, self.g2, self.g3, self.g4, self.g5]
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        let w = self.as_array();
        if w.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(RewardError::InvalidGammas("weights must be finite and non-negative".into()));
        }
        if w.iter().all(|g| *g == 0.0) {
            return Err(RewardError::InvalidGammas("at least one weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub task: TaskKind,
    pub format_reward: f64,
    pub task_reward: f64,
    pub total: f64,
}

pub fn overall_reward(kind: TaskKind, format_r: f64, task_r: f64) -> RewardBreakdown {
    RewardBreakdown {
        task: kind,
        format_reward: format_r,
        task_reward: task_r,
        total: format_r + task_r,
    }
}

pub fn grading_format_reward(parse: &ParsedGradingResponse) -> f64 {
    match parse.format_class {
        GradingFormat::NoValidAnswer => 0.0,
        GradingFormat::NonIntegerAnswer => 0.3,
        GradingFormat::ValidAnswer => 0.5,
    }
}

/// Piecewise grade reward: exact 1.0, adjacent within a half 0.7, adjacent
/// across the 2|3 boundary 0.4, otherwise 0.
pub fn grading_task_reward(pred: Grade, truth: Grade) -> Result<f64, RewardError> {
    if pred.dimension() != truth.dimension() {
        return Err(RewardError::DimensionMismatch);
    }
    Ok(grade_value_reward(pred.value(), truth))
}

/// Task reward for a raw parsed integer. Values outside 1..=4 earn nothing.
pub fn grade_value_reward(pred: i64, truth: Grade) -> f64 {
    if !(1..=4).contains(&pred) {
        return 0.0;
    }
    match (pred - truth.value()).abs() {
        0 => 1.0,
        1 if crosses_boundary(pred, truth.value()) => 0.4,
        1 => 0.7,
        _ => 0.0,
    }
}

pub fn rerank_format_reward(parse: &ParsedRerankResponse, set: &CandidateSet) -> f64 {
    // Re-derive the class against `set`; a parse made against another set must not leak credit.
    match (&parse.ids, parse.format_class) {
        (None, _) | (_, RerankFormat::NoValidAnswer) => 0.0,
        (Some(ids), _) => {
            if crate::model::is_permutation(&Ranking::new(ids.clone()), set) {
                0.5
            } else {
                0.2
            }
        }
    }
}

/// Why a re-rank task reward was forced to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPrediction {
    NotAPermutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRewardOutcome {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid: Option<InvalidPrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricScores>,
}

/// Weighted sum of the five list metrics with cutoffs clamped to the list length.
/// A prediction that is not a permutation of the label scores 0 and is flagged.
pub fn rerank_task_reward(
    pred: &Ranking,
    label: &Ranking,
    gammas: &GammaWeights,
    rbo_p: f64,
) -> Result<TaskRewardOutcome, RewardError> {
    gammas.validate()?;
    let scores = match MetricScores::compute(pred, label, rbo_p) {
        Ok(s) => s,
        Err(MetricError::InvalidPersistence(p)) => return Err(MetricError::InvalidPersistence(p).into()),
        Err(_) => {
            return Ok(TaskRewardOutcome {
                value: 0.0,
                invalid: Some(InvalidPrediction::NotAPermutation),
                metrics: None,
            })
        }
    };
    Ok(TaskRewardOutcome {
        value: weighted(&scores, gammas),
        invalid: None,
        metrics: Some(scores),
    })
}

pub(crate) fn weighted(s: &MetricScores, g: &GammaWeights) -> f64 {
    g.g1 * s.ndcg_at_10 + g.g2 * s.recall_at_10 + g.g3 * s.rbo + g.g4 * s.ndcg_at_4 + g.g5 * s.recall_at_4
}

/// Scores a raw grading response against the true grade.
pub fn score_grading_response(text: &str, truth: Grade) -> (ParsedGradingResponse, RewardBreakdown) {
    let parsed = parse_grading(text);
    let format = grading_format_reward(&parsed);
    let task = parsed.grade.map_or(0.0, |g| grade_value_reward(g, truth));
    let kind = match truth.dimension() {
        crate::model::GradeDimension::Relevance => TaskKind::Relevance,
        crate::model::GradeDimension::Quality => TaskKind::Quality,
    };
    (parsed, overall_reward(kind, format, task))
}

/// Scores a raw re-rank response. Task reward is computed only for complete permutations.
pub fn score_rerank_response(
    text: &str,
    set: &CandidateSet,
    label: &Ranking,
    gammas: &GammaWeights,
    rbo_p: f64,
) -> Result<(ParsedRerankResponse, RewardBreakdown), RewardError> {
    let parsed = parse_rerank(text, set);
    let format = rerank_format_reward(&parsed, set);
    let task = match (&parsed.ids, parsed.format_class) {
        (Some(ids), RerankFormat::ValidAnswer) => {
            rerank_task_reward(&Ranking::new(ids.clone()), label, gammas, rbo_p)?.value
        }
        _ => 0.0,
    };
    Ok((parsed, overall_reward(TaskKind::Rerank, format, task)))
}
