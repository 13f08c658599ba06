//! Offline ranking metrics: NDCG@K, Recall@K and truncated rank-biased overlap.
//!
//! All metrics compare a predicted ordering against a ground-truth ordering of
//! the same items. The ground truth doubles as the graded judgement: the item
//! at 1-indexed label position `j` carries gain `n - j` when it lies inside the
//! label's top `k`, and zero otherwise.
//!
//! RBO is the finite sum `(1-p) * sum_{d=1..n} p^(d-1) * A_d` with no residual
//! or extrapolation, so two identical lists score `1 - p^n` rather than 1.
//! [`rbo_normalized`] divides that ceiling out.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_RBO_P: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("id not in label ranking")]
    UnknownId,
    #[error("prediction and label do not cover the same ids")]
    MismatchedIds,
    #[error("rankings have different lengths ({pred} vs {label})")]
    LengthMismatch { pred: usize, label: usize },
    #[error("ranking contains duplicate ids")]
    Duplicates,
    #[error("cutoff k = {k} is outside 1..={n}")]
    InvalidCutoff { k: usize, n: usize },
    #[error("persistence p = {0} is outside (0,1)")]
    InvalidPersistence(f64),
    #[error("rankings are empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub k: usize,
    #[serde(default = "default_rbo_p")]
    pub rbo_p: f64,
}

fn default_rbo_p() -> f64 {
    DEFAULT_RBO_P
}

impl MetricConfig {
    pub fn new(k: usize, rbo_p: f64) -> Result<Self, MetricError> {
        if k == 0 {
            return Err(MetricError::InvalidCutoff { k, n: 0 });
        }
        check_p(rbo_p)?;
        Ok(Self { k, rbo_p })
    }
}

fn check_p(p: f64) -> Result<(), MetricError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(MetricError::InvalidPersistence(p))
    }
}

fn check_k(k: usize, n: usize) -> Result<(), MetricError> {
    if k == 0 || k > n {
        Err(MetricError::InvalidCutoff { k, n })
    } else {
        Ok(())
    }
}

/// 0-indexed position of every label item.
fn label_positions<T: Eq + Hash>(label: &[T]) -> Result<HashMap<&T, usize>, MetricError> {
    let mut pos = HashMap::with_capacity(label.len());
    for (i, id) in label.iter().enumerate() {
        if pos.insert(id, i).is_some() {
            return Err(MetricError::Duplicates);
        }
    }
    Ok(pos)
}

/// Label positions of each predicted item, after checking that `pred` is a
/// permutation of `label`.
fn aligned_positions<T: Eq + Hash>(pred: &[T], label: &[T]) -> Result<Vec<usize>, MetricError> {
    if pred.len() != label.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            label: label.len(),
        });
    }
    if label.is_empty() {
        return Err(MetricError::Empty);
    }
    let pos = label_positions(label)?;
    let mut seen = vec![false; label.len()];
    pred.iter()
        .map(|id| {
            let &j = pos.get(id).ok_or(MetricError::MismatchedIds)?;
            if std::mem::replace(&mut seen[j], true) {
                return Err(MetricError::Duplicates);
            }
            Ok(j)
        })
        .collect()
}

fn gain_at(label_pos: usize, n: usize, k: usize) -> f64 {
    if label_pos < k {
        (n - (label_pos + 1)) as f64
    } else {
        0.0
    }
}

/// Gain of `doc` under the label ordering: `n - label(doc)` inside the label's top `k`, else 0.
pub fn relevance_gain<T: Eq + Hash>(doc: &T, label: &[T], k: usize) -> Result<u64, MetricError> {
    let n = label.len();
    check_k(k, n)?;
    let j = label.iter().position(|d| d == doc).ok_or(MetricError::UnknownId)?;
    Ok(if j < k { (n - j - 1) as u64 } else { 0 })
}

fn ndcg_from_positions(positions: &[usize], k: usize) -> f64 {
    let n = positions.len();
    if n == 1 {
        return 1.0;
    }
    let mut dcg = 0.0;
    let mut idcg = 0.0;
    for (i, &j) in positions.iter().take(k).enumerate() {
        let discount = ((i + 2) as f64).log2();
        dcg += gain_at(j, n, k) / discount;
        idcg += gain_at(i, n, k) / discount;
    }
    dcg / idcg
}

fn recall_from_positions(positions: &[usize], k: usize) -> f64 {
    positions.iter().take(k).filter(|&&j| j < k).count() as f64 / k as f64
}

fn rbo_from_positions(positions: &[usize], p: f64) -> f64 {
    let n = positions.len();
    // inverse permutation: predicted position of each label slot
    let mut pred_pos = vec![0usize; n];
    for (i, &j) in positions.iter().enumerate() {
        pred_pos[j] = i;
    }
    let mut overlap = 0usize;
    let mut weight = 1.0;
    let mut sum = 0.0;
    for d in 0..n {
        if positions[d] <= d {
            overlap += 1;
        }
        if pred_pos[d] < d {
            overlap += 1;
        }
        sum += weight * overlap as f64 / (d + 1) as f64;
        weight *= p;
    }
    (1.0 - p) * sum
}

pub fn ndcg_at_k<T: Eq + Hash>(pred: &[T], label: &[T], k: usize) -> Result<f64, MetricError> {
    let positions = aligned_positions(pred, label)?;
    check_k(k, label.len())?;
    Ok(ndcg_from_positions(&positions, k))
}

pub fn recall_at_k<T: Eq + Hash>(pred: &[T], label: &[T], k: usize) -> Result<f64, MetricError> {
    let positions = aligned_positions(pred, label)?;
    check_k(k, label.len())?;
    Ok(recall_from_positions(&positions, k))
}

/// Truncated RBO between two orderings of the same item set.
pub fn rbo<T: Eq + Hash>(pred: &[T], label: &[T], p: f64) -> Result<f64, MetricError> {
    check_p(p)?;
    let positions = aligned_positions(pred, label)?;
    Ok(rbo_from_positions(&positions, p))
}

/// Truncated RBO between two equal-length duplicate-free lists whose item sets may differ.
pub fn rbo_lists<T: Eq + Hash>(a: &[T], b: &[T], p: f64) -> Result<f64, MetricError> {
    check_p(p)?;
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch {
            pred: a.len(),
            label: b.len(),
        });
    }
    let mut seen_a = HashSet::with_capacity(a.len());
    let mut seen_b = HashSet::with_capacity(b.len());
    let mut overlap = 0usize;
    let mut weight = 1.0;
    let mut sum = 0.0;
    for (d, (x, y)) in a.iter().zip(b).enumerate() {
        if !seen_a.insert(x) || !seen_b.insert(y) {
            return Err(MetricError::Duplicates);
        }
        if x == y {
            overlap += 1;
        } else {
            overlap += usize::from(seen_b.contains(x)) + usize::from(seen_a.contains(y));
        }
        sum += weight * overlap as f64 / (d + 1) as f64;
        weight *= p;
    }
    Ok((1.0 - p) * sum)
}

/// RBO divided by its identity value `1 - p^n`, so identical lists score 1.
/// Not used for rewards.
pub fn rbo_normalized<T: Eq + Hash>(pred: &[T], label: &[T], p: f64) -> Result<f64, MetricError> {
    let raw = rbo(pred, label, p)?;
    Ok(raw / rbo_identity(label.len(), p))
}

/// Truncated RBO of a length-`n` list with itself.
pub fn rbo_identity(n: usize, p: f64) -> f64 {
    1.0 - p.powi(n as i32)
}

/// The five numbers reported per query, with the 4 and 10 cutoffs clamped to the list length.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricScores {
    pub ndcg_at_4: f64,
    pub ndcg_at_10: f64,
    pub recall_at_4: f64,
    pub recall_at_10: f64,
    pub rbo: f64,
}

impl MetricScores {
    pub fn compute<T: Eq + Hash>(pred: &[T], label: &[T], rbo_p: f64) -> Result<Self, MetricError> {
        check_p(rbo_p)?;
        let positions = aligned_positions(pred, label)?;
        let n = positions.len();
        let (k4, k10) = (4.min(n), 10.min(n));
        Ok(Self {
            ndcg_at_4: ndcg_from_positions(&positions, k4),
            ndcg_at_10: ndcg_from_positions(&positions, k10),
            recall_at_4: recall_from_positions(&positions, k4),
            recall_at_10: recall_from_positions(&positions, k10),
            rbo: rbo_from_positions(&positions, rbo_p),
        })
    }

    pub fn values(&self) -> [f64; 5] {
        [self.ndcg_at_4, self.ndcg_at_10, self.recall_at_4, self.recall_at_10, self.rbo]
    }

    /// Arithmetic mean over `scores`, accumulated in order.
    pub fn mean<'a>(scores: impl IntoIterator<Item = &'a MetricScores>) -> Option<MetricScores> {
        let mut acc = [0.0; 5];
        let mut count = 0usize;
        for s in scores {
            for (a, v) in acc.iter_mut().zip(s.values()) {
                *a += v;
            }
            count += 1;
        }
        (count > 0).then(|| {
            let m = acc.map(|a| a / count as f64);
            MetricScores {
                ndcg_at_4: m[0],
                ndcg_at_10: m[1],
                recall_at_4: m[2],
                recall_at_10: m[3],
                rbo: m[4],
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ABC: [&str; 3] = ["A", "B", "C"];

    #[test]
    fn relevance_gain_examples() {
        assert_eq!(relevance_gain(&"A", &ABC, 2), Ok(2));
        assert_eq!(relevance_gain(&"C", &ABC, 2), Ok(0));
        assert_eq!(relevance_gain(&"C", &ABC, 3), Ok(0));
        let five = ["a", "b", "c", "d", "e"];
        assert_eq!(relevance_gain(&"e", &five, 5), Ok(0));
        assert_eq!(relevance_gain(&"d", &five, 4), Ok(1));
        assert_eq!(relevance_gain(&"Z", &ABC, 2), Err(MetricError::UnknownId));
        assert!(matches!(relevance_gain(&"A", &ABC, 4), Err(MetricError::InvalidCutoff { .. })));
    }

    #[test]
    fn ndcg_worked_example() {
        // (1/log2 2 + 2/log2 3) / (2/log2 2 + 1/log2 3)
        let expected = (1.0 + 2.0 / 3f64.log2()) / (2.0 + 1.0 / 3f64.log2());
        let got = ndcg_at_k(&["B", "A", "C"], &ABC, 2).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.8597).abs() < 5e-5);
    }

    #[test]
    fn ndcg_identity_and_single_item() {
        assert_eq!(ndcg_at_k(&ABC, &ABC, 1).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&ABC, &ABC, 3).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&["x"], &["x"], 1).unwrap(), 1.0);
    }

    #[test]
    fn recall_examples() {
        let label = ["A", "B", "C", "D"];
        assert_eq!(recall_at_k(&["B", "A", "C", "D"], &label, 2).unwrap(), 1.0);
        assert_eq!(recall_at_k(&["C", "D", "A", "B"], &label, 2).unwrap(), 0.0);
        assert_eq!(recall_at_k(&["A", "C", "B", "D"], &label, 2).unwrap(), 0.5);
    }

    #[test]
    fn rbo_examples() {
        let got = rbo(&ABC, &ABC, 0.9).unwrap();
        assert!((got - 0.271).abs() < 1e-12);
        assert!((rbo(&["x"], &["x"], 0.3).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(rbo_lists(&["a", "b", "c"], &["d", "e", "f"], 0.9).unwrap(), 0.0);
        assert!((rbo_normalized(&ABC, &ABC, 0.9).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rbo_lists_agrees_with_rbo_on_shared_sets() {
        let a = ["c", "a", "d", "b"];
        let b = ["a", "b", "c", "d"];
        assert!((rbo_lists(&a, &b, 0.8).unwrap() - rbo(&a, &b, 0.8).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn mismatches_are_errors() {
        assert_eq!(ndcg_at_k(&["A", "B"], &ABC, 1), Err(MetricError::LengthMismatch { pred: 2, label: 3 }));
        assert_eq!(recall_at_k(&["A", "B", "D"], &ABC, 1), Err(MetricError::MismatchedIds));
        assert_eq!(rbo(&["A", "A", "B"], &ABC, 0.9), Err(MetricError::Duplicates));
        assert_eq!(rbo(&ABC, &ABC, 1.0), Err(MetricError::InvalidPersistence(1.0)));
        assert!(matches!(ndcg_at_k(&ABC, &ABC, 0), Err(MetricError::InvalidCutoff { .. })));
        assert_eq!(ndcg_at_k::<&str>(&[], &[], 1), Err(MetricError::Empty));
    }

    #[test]
    fn suite_clamps_cutoffs() {
        let s = MetricScores::compute(&ABC, &ABC, 0.9).unwrap();
        assert_eq!(s.ndcg_at_10, 1.0);
        assert_eq!(s.recall_at_4, 1.0);
        let r = MetricScores::compute(&["C", "B", "A"], &ABC, 0.9).unwrap();
        assert_eq!(r.ndcg_at_4, ndcg_at_k(&["C", "B", "A"], &ABC, 3).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(MetricConfig::new(0, 0.9).is_err());
        assert!(MetricConfig::new(3, 0.0).is_err());
        let c: MetricConfig = serde_json::from_str(r#"{"k": 4}"#).unwrap();
        assert_eq!(c.rbo_p, DEFAULT_RBO_P);
    }
}
