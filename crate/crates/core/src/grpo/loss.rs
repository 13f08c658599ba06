use serde::{Deserialize, Serialize};

use super::{compute_advantages, Features, GrpoConfig, GrpoError, ToyRankPolicy};
use crate::reward::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    /// log pi_theta(o | x)
    pub logprob: f64,
    /// log pi_old(o | x)
    pub ref_logprob: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoGroup {
    pub task: TaskKind,
    pub responses: Vec<ScoredSample>,
    pub advantages: Vec<f64>,
}

impl GrpoGroup {
    /// Builds the group and fills in its advantages.
    pub fn new(task: TaskKind, responses: Vec<ScoredSample>) -> Result<Self, GrpoError> {
        let rewards: Vec<f64> = responses.iter().map(|r| r.reward).collect();
        let advantages = compute_advantages(&rewards)?;
        Ok(Self {
            task,
            responses,
            advantages,
        })
    }
}

/// One sample's contribution before the `-1/N` group scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleObjective {
    pub ratio: f64,
    /// `min(ratio * A, clip(ratio) * A)`
    pub surrogate: f64,
    /// `exp(d) - d - 1` with `d = logp_old - logp`
    pub kl: f64,
    /// `surrogate - beta * kl`
    pub objective: f64,
    /// derivative of `objective` with respect to `logp`
    pub d_logprob: f64,
}

pub fn sample_objective(logprob: f64, ref_logprob: f64, advantage: f64, epsilon: f64, beta: f64) -> SampleObjective {
    let ratio = (logprob - ref_logprob).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    let (surrogate, d_surrogate) = if unclipped <= clipped {
        (unclipped, ratio * advantage)
    } else if ratio > 1.0 - epsilon && ratio < 1.0 + epsilon {
        (clipped, ratio * advantage)
    } else {
        (clipped, 0.0)
    };
    let delta = ref_logprob - logprob;
    let kl = delta.exp() - delta - 1.0;
    let d_kl = 1.0 - delta.exp();
    SampleObjective {
        ratio,
        surrogate,
        kl,
        objective: surrogate - beta * kl,
        d_logprob: d_surrogate - beta * d_kl,
    }
}

/// `sum_groups -(1/N) sum_i [min(rho A, clip(rho) A) - beta * KL_i]`.
pub fn grpo_surrogate_loss(groups: &[GrpoGroup], config: &GrpoConfig) -> Result<f64, GrpoError> {
    let mut total = 0.0;
    for g in groups {
        if g.advantages.len() != g.responses.len() {
            return Err(GrpoError::AdvantageLength {
                advantages: g.advantages.len(),
                responses: g.responses.len(),
            });
        }
        let n = g.responses.len();
        if n == 0 {
            continue;
        }
        let mut sum = 0.0;
        for (s, a) in g.responses.iter().zip(&g.advantages) {
            if !(s.logprob.is_finite() && s.ref_logprob.is_finite()) {
                return Err(GrpoError::NonFiniteLogProb);
            }
            sum += sample_objective(s.logprob, s.ref_logprob, *a, config.clip_epsilon, config.kl_beta).objective;
        }
        total += -sum / n as f64;
    }
    Ok(total)
}

/// Sampled orderings for one input together with what the loss needs from the rollout.
#[derive(Debug, Clone)]
pub struct GroupRollout {
    pub task: TaskKind,
    pub features: Features,
    pub orders: Vec<Vec<usize>>,
    pub ref_logprobs: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Surrogate loss over `rollouts` evaluated at `policy`, and its gradient with
/// respect to theta. Per-group gradients are summed in order.
pub fn surrogate_loss_and_grad(
    policy: &ToyRankPolicy,
    rollouts: &[GroupRollout],
    config: &GrpoConfig,
) -> Result<(f64, Vec<f64>), GrpoError> {
    let mut loss = 0.0;
    let mut grad = vec![0.0; policy.theta.len()];
    for r in rollouts {
        let (l, g) = group_loss_and_grad(policy, r, config)?;
        loss += l;
        for (acc, x) in grad.iter_mut().zip(g) {
            *acc += x;
        }
    }
    Ok((loss, grad))
}

pub(crate) fn group_loss_and_grad(
    policy: &ToyRankPolicy,
    rollout: &GroupRollout,
    config: &GrpoConfig,
) -> Result<(f64, Vec<f64>), GrpoError> {
    let n = rollout.orders.len();
    if rollout.advantages.len() != n || rollout.ref_logprobs.len() != n {
        return Err(GrpoError::AdvantageLength {
            advantages: rollout.advantages.len(),
            responses: n,
        });
    }
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; policy.theta.len()];
    for ((order, &ref_lp), &adv) in rollout.orders.iter().zip(&rollout.ref_logprobs).zip(&rollout.advantages) {
        let (lp, dlp) = policy.logprob_and_grad(&rollout.features, order)?;
        if !(lp.is_finite() && ref_lp.is_finite()) {
            return Err(GrpoError::NonFiniteLogProb);
        }
        let obj = sample_objective(lp, ref_lp, adv, config.clip_epsilon, config.kl_beta);
        loss -= scale * obj.objective;
        for (g, d) in grad.iter_mut().zip(dlp) {
            *g -= scale * obj.d_logprob * d;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(eps: f64, beta: f64) -> GrpoConfig {
        GrpoConfig {
            clip_epsilon: eps,
            kl_beta: beta,
            ..Default::default()
        }
    }

    fn sample(lp: f64, ref_lp: f64, reward: f64) -> ScoredSample {
        ScoredSample {
            logprob: lp,
            ref_logprob: ref_lp,
            reward,
        }
    }

    #[test]
    fn identical_policies_give_zero_loss() {
        let g = GrpoGroup::new(
            TaskKind::Rerank,
            vec![sample(-1.0, -1.0, 1.0), sample(-2.0, -2.0, 0.3), sample(-0.5, -0.5, 0.8)],
        )
        .unwrap();
        let loss = grpo_surrogate_loss(&[g], &cfg(0.2, 0.5)).unwrap();
        assert!(loss.abs() < 1e-15);
    }

    #[test]
    fn positive_advantage_is_clipped() {
        let eps: f64 = 0.2;
        let rho: f64 = 1.0 + 2.0 * eps;
        let group = GrpoGroup {
            task: TaskKind::Rerank,
            responses: vec![sample(rho.ln(), 0.0, 0.0), sample(0.0, 0.0, 0.0)],
            advantages: vec![1.0, -1.0],
        };
        // -(1/2) * [min(1.4, 1.2) + min(-1, -1)] = -(1/2) * (1.2 - 1) = -0.1
        let loss = grpo_surrogate_loss(std::slice::from_ref(&group), &cfg(eps, 0.0)).unwrap();
        assert!((loss + 0.1).abs() < 1e-12, "{loss}");
        // with beta the KL of the first sample enters: d = -ln 1.4
        let d = -rho.ln();
        let kl = d.exp() - d - 1.0;
        let loss_b = grpo_surrogate_loss(&[group], &cfg(eps, 0.5)).unwrap();
        assert!((loss_b - (-0.1 + 0.5 * kl / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn clipping_matches_unclipped_inside_the_band() {
        for &(ratio, adv) in &[(0.95, 1.3), (1.1, -0.4), (0.81, 2.0), (1.19, -3.0)] {
            let o = sample_objective(f64::ln(ratio), 0.0, adv, 0.2, 0.0);
            assert!((o.surrogate - ratio * adv).abs() < 1e-12);
        }
        // outside the band the pessimistic branch wins
        let o = sample_objective(f64::ln(1.5), 0.0, 1.0, 0.2, 0.0);
        assert!((o.surrogate - 1.2).abs() < 1e-12);
        assert_eq!(o.d_logprob, 0.0);
        let o = sample_objective(f64::ln(0.5), 0.0, -1.0, 0.2, 0.0);
        assert!((o.surrogate + 0.8).abs() < 1e-12);
        let o = sample_objective(f64::ln(0.5), 0.0, 1.0, 0.2, 0.0);
        assert!((o.surrogate - 0.5).abs() < 1e-12);
        assert!((o.d_logprob - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kl_estimator_is_non_negative() {
        for d in [-3.0, -0.1, 0.0, 0.2, 4.0] {
            let o = sample_objective(0.0, d, 0.0, 0.2, 1.0);
            assert!(o.kl >= 0.0);
        }
        assert_eq!(sample_objective(-1.0, -1.0, 0.0, 0.2, 1.0).kl, 0.0);
    }

    #[test]
    fn errors() {
        let bad = GrpoGroup {
            task: TaskKind::Relevance,
            responses: vec![sample(f64::NAN, 0.0, 1.0), sample(0.0, 0.0, 0.0)],
            advantages: vec![1.0, -1.0],
        };
        assert_eq!(grpo_surrogate_loss(&[bad], &cfg(0.2, 0.0)), Err(GrpoError::NonFiniteLogProb));
        let short = GrpoGroup {
            task: TaskKind::Quality,
            responses: vec![sample(0.0, 0.0, 1.0)],
            advantages: vec![],
        };
        assert!(matches!(
            grpo_surrogate_loss(&[short], &cfg(0.2, 0.0)),
            Err(GrpoError::AdvantageLength { .. })
        ));
    }

    #[test]
    fn beta_zero_is_pure_surrogate() {
        let g = GrpoGroup {
            task: TaskKind::Rerank,
            responses: vec![sample(-0.7, -1.0, 0.0), sample(-1.3, -1.0, 0.0)],
            advantages: vec![0.5, -0.5],
        };
        let loss = grpo_surrogate_loss(&[g.clone()], &cfg(0.2, 0.0)).unwrap();
        let expected: f64 = -g
            .responses
            .iter()
            .zip(&g.advantages)
            .map(|(s, a)| {
                let r = (s.logprob - s.ref_logprob).exp();
                (r * a).min(r.clamp(0.8, 1.2) * a)
            })
            .sum::<f64>()
            / 2.0;
        assert!((loss - expected).abs() < 1e-15);
    }
}
