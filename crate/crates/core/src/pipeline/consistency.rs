use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RboMode;
use crate::metrics::{rbo, rbo_normalized, MetricError};
use crate::model::Ranking;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsistencyError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples {a} and {b}: {source}")]
    Metric {
        a: usize,
        b: usize,
        #[source]
        source: MetricError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    /// Mean RBO over all unordered sample pairs.
    pub score: f64,
    pub keep: bool,
}

/// Mean pairwise RBO of `samples`; they must all rank the same id set.
pub fn consistency_score(samples: &[Ranking], rbo_p: f64, mode: RboMode) -> Result<f64, ConsistencyError> {
    let m = samples.len();
    if m < 2 {
        return Err(ConsistencyError::TooFewSamples(m));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for a in 0..m {
        for b in a + 1..m {
            let s = match mode {
                RboMode::Normalized => rbo_normalized(&samples[a], &samples[b], rbo_p),
                RboMode::Truncated => rbo(&samples[a], &samples[b], rbo_p),
            }
            .map_err(|source| ConsistencyError::Metric { a, b, source })?;
            sum += s;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Keeps the sample group when its consistency reaches `threshold`.
pub fn consistency_filter(
    samples: &[Ranking],
    threshold: f64,
    rbo_p: f64,
    mode: RboMode,
) -> Result<ConsistencyVerdict, ConsistencyError> {
    let score = consistency_score(samples, rbo_p, mode)?;
    Ok(ConsistencyVerdict {
        score,
        keep: score >= threshold,
    })
}
