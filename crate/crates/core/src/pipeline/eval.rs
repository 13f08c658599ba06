use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::LabeledSet;
use crate::backend::{evaluate_cover, rerank, Backend, CallPolicy, TemplateIds};
use crate::exec::Execution;
use crate::metrics::MetricScores;
use crate::model::{is_permutation, validate_candidate_set, QueryType, Ranking};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("{predictions} predictions for {queries} queries")]
    PredictionCount { predictions: usize, queries: usize },
}

/// Where predicted orderings come from.
pub enum Predictor<'a> {
    /// One ranking per record, aligned by index.
    Stored(&'a [Ranking]),
    /// Re-grade covers and re-rank each labelled set through a backend.
    Backend {
        backend: &'a dyn Backend,
        policy: CallPolicy,
        templates: TemplateIds,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub index: usize,
    pub query: String,
    pub query_type: QueryType,
    pub candidates: usize,
    pub prediction: Option<Ranking>,
    pub scores: Option<MetricScores>,
    pub fallback: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub count: usize,
    pub mean: MetricScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub per_type: BTreeMap<QueryType, TypeSummary>,
    /// Mean over scored records; `None` when every record failed.
    pub overall: Option<MetricScores>,
    pub scored: usize,
    pub errors: usize,
    pub fallbacks: usize,
}

fn score_one(index: usize, rec: &LabeledSet, predictor: &Predictor<'_>, rbo_p: f64) -> EvalRecord {
    let mut out = EvalRecord {
        index,
        query: rec.set.query.text.clone(),
        query_type: rec.query_type,
        candidates: rec.set.len(),
        prediction: None,
        scores: None,
        fallback: false,
        error: None,
    };
    let violations = validate_candidate_set(&rec.set);
    if !violations.is_empty() {
        out.error = Some(violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "));
        return out;
    }
    if !is_permutation(&rec.label, &rec.set) {
        out.error = Some("label is not a permutation of the candidate set".into());
        return out;
    }
    let prediction = match predictor {
        Predictor::Stored(preds) => preds[index].clone(),
        Predictor::Backend {
            backend,
            policy,
            templates,
        } => match predict_with_backend(rec, *backend, policy, templates) {
            Ok((ranking, fallback)) => {
                out.fallback = fallback;
                ranking
            }
            Err(e) => {
                out.error = Some(e);
                return out;
            }
        },
    };
    if !is_permutation(&prediction, &rec.set) {
        out.error = Some("prediction is not a permutation of the candidate set".into());
        out.prediction = Some(prediction);
        return out;
    }
    match MetricScores::compute(&prediction, &rec.label, rbo_p) {
        Ok(s) => out.scores = Some(s),
        Err(e) => out.error = Some(e.to_string()),
    }
    out.prediction = Some(prediction);
    out
}

fn predict_with_backend(
    rec: &LabeledSet,
    backend: &dyn Backend,
    policy: &CallPolicy,
    templates: &TemplateIds,
) -> Result<(Ranking, bool), String> {
    let mut set = rec.set.clone();
    for c in &mut set.candidates {
        if c.cover_image_ref.is_some() {
            let cover = evaluate_cover(c, &set.query, backend, policy, templates).map_err(|e| e.to_string())?;
            c.relevance_grade = cover.relevance;
            c.quality_grade = cover.quality;
        }
    }
    let out = rerank(&set, None, backend, policy, &templates.reranker).map_err(|e| e.to_string())?;
    Ok((out.ranking, out.fallback))
}

/// Scores every record. Records that fail (bad data, bad prediction, backend
/// error) are kept with an error message and left out of every mean.
pub fn evaluate_dataset(
    records: &[LabeledSet],
    predictor: &Predictor<'_>,
    rbo_p: f64,
    exec: Execution,
) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoQueries);
    }
    if let Predictor::Stored(preds) = predictor {
        if preds.len() != records.len() {
            return Err(EvalError::PredictionCount {
                predictions: preds.len(),
                queries: records.len(),
            });
        }
    }
    let scored = exec.map_indexed(records, |i, rec| score_one(i, rec, predictor, rbo_p));

    let mut per_type = BTreeMap::new();
    for qt in QueryType::ALL {
        let of_type: Vec<&MetricScores> = scored
            .iter()
            .filter(|r| r.query_type == qt)
            .filter_map(|r| r.scores.as_ref())
            .collect();
        if let Some(mean) = MetricScores::mean(of_type.iter().copied()) {
            per_type.insert(
                qt,
                TypeSummary {
                    count: of_type.len(),
                    mean,
                },
            );
        }
    }
    let overall = MetricScores::mean(scored.iter().filter_map(|r| r.scores.as_ref()));
    Ok(EvalReport {
        scored: scored.iter().filter(|r| r.scores.is_some()).count(),
        errors: scored.iter().filter(|r| r.error.is_some()).count(),
        fallbacks: scored.iter().filter(|r| r.fallback).count(),
        per_type,
        overall,
        records: scored,
    })
}

impl EvalReport {
    /// Aligned plain-text summary table.
    pub fn to_table(&self) -> String {
        let header = ["group", "n", "NDCG@4", "NDCG@10", "R@4", "R@10", "RBO"];
        let mut rows: Vec<Vec<String>> = Vec::new();
        let fmt_row = |name: String, n: usize, m: &MetricScores| {
            let mut row = vec![name, n.to_string()];
            row.extend(m.values().iter().map(|v| format!("{v:.4}")));
            row
        };
        for (qt, s) in &self.per_type {
            rows.push(fmt_row(qt.to_string(), s.count, &s.mean));
        }
        if let Some(m) = &self.overall {
            rows.push(fmt_row("Overall".into(), self.scored, m));
        }
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let line = |cells: Vec<String>, out: &mut String| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(padded.join("  ").trim_end());
            out.push('\n');
        };
        line(header.iter().map(|s| s.to_string()).collect(), &mut out);
        for row in rows {
            line(row, &mut out);
        }
        let _ = writeln!(out, "errors: {}  fallbacks: {}", self.errors, self.fallbacks);
        out
    }
}
