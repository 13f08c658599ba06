//! Group-relative policy optimisation over a toy listwise ranking policy.
//!
//! Each input yields a group of `N` sampled rankings. Their rewards are
//! standardised within the group to form advantages, and the policy is moved
//! along the gradient of the clipped importance-ratio surrogate with a KL
//! penalty towards the policy that generated the samples.

mod advantage;
mod loss;
mod policy;
mod train;

pub use advantage::compute_advantages;
pub use loss::{grpo_surrogate_loss, sample_objective, GrpoGroup, GroupRollout, SampleObjective, ScoredSample};
pub use loss::surrogate_loss_and_grad;
pub use policy::{policy_logprob, sample_rankings, Features, ToyRankPolicy, FEATURE_DIM};
pub use train::{train_toy_policy, train_toy_policy_with, TraceEntry, TrainingExample, TrainingOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::DEFAULT_RBO_P;
use crate::reward::RewardError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrpoError {
    #[error("a group needs at least 2 responses, got {0}")]
    GroupTooSmall(usize),
    #[error("non-finite log-probability")]
    NonFiniteLogProb,
    #[error("advantages length {advantages} does not match {responses} responses")]
    AdvantageLength { advantages: usize, responses: usize },
    #[error("ranking is not a complete permutation of the candidate set")]
    NotAPermutation,
    #[error("candidate set is empty")]
    EmptySet,
    #[error("theta has dimension {theta}, features have {features}")]
    DimensionMismatch { theta: usize, features: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    /// Responses sampled per input (N).
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Persistence used by the RBO term of the re-rank reward.
    pub rbo_p: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_epsilon: 0.2,
            kl_beta: 0.04,
            learning_rate: 0.05,
            iterations: 200,
            seed: 7,
            rbo_p: DEFAULT_RBO_P,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |msg: &str| Err(GrpoError::InvalidConfig(msg.to_owned()));
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if !(self.clip_epsilon.is_finite() && self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be finite and positive");
        }
        if !(self.kl_beta.is_finite() && self.kl_beta >= 0.0) {
            return bad("kl_beta must be finite and non-negative");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be finite and positive");
        }
        if !(self.rbo_p > 0.0 && self.rbo_p < 1.0) {
            return bad("rbo_p must lie in (0,1)");
        }
        Ok(())
    }
}

/// SplitMix64 finaliser, used to derive independent stream seeds.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut z = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        z ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(z << 6).wrapping_add(z >> 2);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        assert!(GrpoConfig::default().validate().is_ok());
        let c = GrpoConfig { group_size: 1, ..Default::default() };
        assert!(c.validate().is_err());
        let c = GrpoConfig { kl_beta: -1.0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn seeds_differ_by_part() {
        assert_ne!(mix_seed(&[1, 2]), mix_seed(&[2, 1]));
        assert_eq!(mix_seed(&[5, 9]), mix_seed(&[5, 9]));
    }
}
