use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::group_loss_and_grad;
use super::policy::{indices_to_ranking, ranking_indices};
use super::{compute_advantages, mix_seed, Features, GroupRollout, GrpoConfig, GrpoError, ToyRankPolicy, FEATURE_DIM};
use crate::exec::Execution;
use crate::model::{CandidateSet, Ranking};
use crate::reward::{rerank_task_reward, GammaWeights, TaskKind};

/// The toy policy only emits permutations, so every sample earns the full format reward.
const VALID_FORMAT_REWARD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub set: CandidateSet,
    pub label: Ranking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub mean_task_reward: f64,
    pub mean_total_reward: f64,
    /// Surrogate loss at the start of the iteration (0 for the final evaluation row).
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingOutcome {
    pub policy: ToyRankPolicy,
    /// One row per iteration, measured on that iteration's rollouts, plus a
    /// final row for the trained policy. Row 0 is the Monte-Carlo estimate
    /// under the initial policy.
    pub trace: Vec<TraceEntry>,
}

impl TrainingOutcome {
    pub fn initial_task_reward(&self) -> f64 {
        self.trace.first().map_or(0.0, |t| t.mean_task_reward)
    }

    pub fn final_task_reward(&self) -> f64 {
        self.trace.last().map_or(0.0, |t| t.mean_task_reward)
    }
}

struct Prepared {
    features: Features,
}

struct Rollout {
    group: GroupRollout,
    task_rewards: Vec<f64>,
}

pub fn train_toy_policy(
    dataset: &[TrainingExample],
    config: &GrpoConfig,
    gammas: &GammaWeights,
) -> Result<TrainingOutcome, GrpoError> {
    train_toy_policy_with(dataset, config, gammas, Execution::default())
}

/// Trains from theta = 0. Rollouts for different inputs run under `exec`;
/// gradients are reduced in dataset order, so the result does not depend on it.
pub fn train_toy_policy_with(
    dataset: &[TrainingExample],
    config: &GrpoConfig,
    gammas: &GammaWeights,
    exec: Execution,
) -> Result<TrainingOutcome, GrpoError> {
    config.validate()?;
    gammas.validate()?;
    let prepared = dataset
        .iter()
        .map(|ex| {
            ranking_indices(&ex.set, &ex.label)?;
            Ok(Prepared {
                features: Features::from_candidates(&ex.set),
            })
        })
        .collect::<Result<Vec<_>, GrpoError>>()?;

    let mut policy = ToyRankPolicy::zeros(FEATURE_DIM);
    let mut trace = Vec::with_capacity(config.iterations + 1);

    for iteration in 0..config.iterations {
        let reference = policy.clone();
        let rollouts = rollout_all(&reference, dataset, &prepared, config, gammas, iteration, exec)?;
        let per_group = exec.map(&rollouts, |r| group_loss_and_grad(&reference, &r.group, config));
        let mut loss = 0.0;
        let mut grad = vec![0.0; FEATURE_DIM];
        for res in per_group {
            let (l, g) = res?;
            loss += l;
            for (acc, x) in grad.iter_mut().zip(g) {
                *acc += x;
            }
        }
        trace.push(summarise(iteration, &rollouts, loss));
        for (t, g) in policy.theta.iter_mut().zip(&grad) {
            *t -= config.learning_rate * g;
        }
    }

    let final_rollouts = rollout_all(&policy, dataset, &prepared, config, gammas, config.iterations, exec)?;
    trace.push(summarise(config.iterations, &final_rollouts, 0.0));
    Ok(TrainingOutcome { policy, trace })
}

fn rollout_all(
    policy: &ToyRankPolicy,
    dataset: &[TrainingExample],
    prepared: &[Prepared],
    config: &GrpoConfig,
    gammas: &GammaWeights,
    iteration: usize,
    exec: Execution,
) -> Result<Vec<Rollout>, GrpoError> {
    exec.map_indexed(prepared, |i, p| {
        let seed = mix_seed(&[config.seed, iteration as u64, i as u64]);
        rollout_one(policy, &dataset[i], p, config, gammas, seed)
    })
    .into_iter()
    .collect()
}

fn rollout_one(
    policy: &ToyRankPolicy,
    example: &TrainingExample,
    prepared: &Prepared,
    config: &GrpoConfig,
    gammas: &GammaWeights,
    seed: u64,
) -> Result<Rollout, GrpoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orders = Vec::with_capacity(config.group_size);
    let mut ref_logprobs = Vec::with_capacity(config.group_size);
    let mut task_rewards = Vec::with_capacity(config.group_size);
    for _ in 0..config.group_size {
        let order = policy.sample_order(&prepared.features, &mut rng);
        let ranking = indices_to_ranking(&example.set, &order);
        let task = rerank_task_reward(&ranking, &example.label, gammas, config.rbo_p)?.value;
        ref_logprobs.push(policy.logprob_indices(&prepared.features, &order)?);
        task_rewards.push(task);
        orders.push(order);
    }
    let totals: Vec<f64> = task_rewards.iter().map(|t| VALID_FORMAT_REWARD + t).collect();
    let advantages = compute_advantages(&totals)?;
    Ok(Rollout {
        group: GroupRollout {
            task: TaskKind::Rerank,
            features: prepared.features.clone(),
            orders,
            ref_logprobs,
            advantages,
        },
        task_rewards,
    })
}

fn summarise(iteration: usize, rollouts: &[Rollout], loss: f64) -> TraceEntry {
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in rollouts {
        for t in &r.task_rewards {
            sum += t;
            count += 1;
        }
    }
    let mean_task = if count == 0 { 0.0 } else { sum / count as f64 };
    TraceEntry {
        iteration,
        mean_task_reward: mean_task,
        mean_total_reward: VALID_FORMAT_REWARD + mean_task,
        loss,
    }
}
