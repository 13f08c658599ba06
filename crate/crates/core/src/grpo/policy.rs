//! Plackett-Luce ranking policy with linear scores `theta . x_j`.
//!
//! A ranking is generated one position at a time: among the candidates not
//! yet placed, `j` is chosen with probability
//! `exp(theta . x_j) / sum_{m remaining} exp(theta . x_m)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GrpoError;
use crate::model::{CandidateId, CandidateSet, Ranking};

/// Relevance grade, quality grade, CTR, completion rate, recency.
pub const FEATURE_DIM: usize = 5;

/// Row-major `n x dim` feature matrix, one row per candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    dim: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == dim), "ragged feature rows");
        Self {
            dim,
            data: rows.concat(),
        }
    }

    /// Grades (0 when absent), the two engagement rates, and publish time
    /// min-max scaled over the set (0 when all times are equal).
    pub fn from_candidates(set: &CandidateSet) -> Self {
        let times = set.candidates.iter().map(|c| c.side.publish_time);
        let lo = times.clone().min().unwrap_or(0);
        let hi = times.max().unwrap_or(0);
        let span = (hi - lo) as f64;
        let mut data = Vec::with_capacity(set.len() * FEATURE_DIM);
        for c in &set.candidates {
            let recency = if span > 0.0 { (c.side.publish_time - lo) as f64 / span } else { 0.0 };
            data.extend([
                c.relevance_grade.map_or(0.0, |g| g.value() as f64),
                c.quality_grade.map_or(0.0, |g| g.value() as f64),
                c.side.click_through_rate,
                c.side.completion_rate,
                recency,
            ]);
        }
        Self { dim: FEATURE_DIM, data }
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRankPolicy {
    pub theta: Vec<f64>,
}

impl ToyRankPolicy {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { theta: vec![0.0; dim] }
    }

    fn check(&self, f: &Features) -> Result<(), GrpoError> {
        if self.theta.len() != f.dim() {
            return Err(GrpoError::DimensionMismatch {
                theta: self.theta.len(),
                features: f.dim(),
            });
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(GrpoError::InvalidConfig("theta is not finite".into()));
        }
        Ok(())
    }

    pub fn scores(&self, f: &Features) -> Vec<f64> {
        (0..f.len())
            .map(|i| f.row(i).iter().zip(&self.theta).map(|(x, t)| x * t).sum())
            .collect()
    }

    /// Log-probability of the ordering `order` (indices into `f`).
    pub fn logprob_indices(&self, f: &Features, order: &[usize]) -> Result<f64, GrpoError> {
        self.check(f)?;
        let scores = self.scores(f);
        let mut lp = 0.0;
        for pos in 0..order.len() {
            let rest = &order[pos..];
            lp += scores[order[pos]] - log_sum_exp(rest.iter().map(|&j| scores[j]));
        }
        Ok(lp)
    }

    /// Log-probability and its gradient with respect to theta.
    pub fn logprob_and_grad(&self, f: &Features, order: &[usize]) -> Result<(f64, Vec<f64>), GrpoError> {
        self.check(f)?;
        let scores = self.scores(f);
        let d = f.dim();
        let mut lp = 0.0;
        let mut grad = vec![0.0; d];
        let mut expected = vec![0.0; d];
        for pos in 0..order.len() {
            let rest = &order[pos..];
            let lse = log_sum_exp(rest.iter().map(|&j| scores[j]));
            lp += scores[order[pos]] - lse;
            expected.iter_mut().for_each(|e| *e = 0.0);
            for &j in rest {
                let w = (scores[j] - lse).exp();
                for (e, x) in expected.iter_mut().zip(f.row(j)) {
                    *e += w * x;
                }
            }
            for ((g, x), e) in grad.iter_mut().zip(f.row(order[pos])).zip(&expected) {
                *g += x - e;
            }
        }
        Ok((lp, grad))
    }

    /// Draws one ordering by sequential choice.
    pub fn sample_order<R: Rng>(&self, f: &Features, rng: &mut R) -> Vec<usize> {
        let scores = self.scores(f);
        let mut remaining: Vec<usize> = (0..f.len()).collect();
        let mut order = Vec::with_capacity(remaining.len());
        while !remaining.is_empty() {
            let max = remaining.iter().map(|&j| scores[j]).fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = remaining.iter().map(|&j| (scores[j] - max).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = remaining.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            order.push(remaining.remove(pick));
        }
        order
    }
}

pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Maps a ranking onto candidate indices, failing unless it is a complete permutation.
pub(crate) fn ranking_indices(set: &CandidateSet, ranking: &Ranking) -> Result<Vec<usize>, GrpoError> {
    if !crate::model::is_permutation(ranking, set) {
        return Err(GrpoError::NotAPermutation);
    }
    let index = set.index();
    Ok(ranking.iter().map(|id| index[id]).collect())
}

pub(crate) fn indices_to_ranking(set: &CandidateSet, order: &[usize]) -> Ranking {
    Ranking::new(order.iter().map(|&i| set.candidates[i].id.clone()).collect::<Vec<CandidateId>>())
}

pub fn policy_logprob(policy: &ToyRankPolicy, set: &CandidateSet, ranking: &Ranking) -> Result<f64, GrpoError> {
    let order = ranking_indices(set, ranking)?;
    policy.logprob_indices(&Features::from_candidates(set), &order)
}

/// `n_samples` independent rankings, reproducible from `seed`.
pub fn sample_rankings(
    policy: &ToyRankPolicy,
    set: &CandidateSet,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Ranking>, GrpoError> {
    if set.is_empty() {
        return Err(GrpoError::EmptySet);
    }
    let f = Features::from_candidates(set);
    policy.check(&f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_samples)
        .map(|_| indices_to_ranking(set, &policy.sample_order(&f, &mut rng)))
        .collect())
}
