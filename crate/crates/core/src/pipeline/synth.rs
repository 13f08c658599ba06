use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{consistency_score, LabeledSet, PipelineConfig};
use crate::backend::{rerank, Backend};
use crate::exec::Execution;
use crate::grpo::mix_seed;
use crate::model::{CandidateSet, QueryType, Ranking};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSet {
    pub index: usize,
    pub query: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub records: Vec<LabeledSet>,
    /// Consistency score of each kept record, aligned with `records`.
    pub scores: Vec<f64>,
    pub dropped: Vec<DroppedSet>,
}

enum Outcome {
    Kept(LabeledSet, f64),
    Dropped(String),
}

/// Builds labels from a teacher re-ranker. Each set is re-ranked once as given
/// and `config.consistency.samples` more times with the candidates shuffled.
/// Sets with any unusable answer, or whose answers agree less than the
/// configured threshold, are dropped; otherwise the answer to the unshuffled
/// set becomes the label.
pub fn synthesize_teacher_dataset(
    inputs: &[(CandidateSet, QueryType)],
    backend: &dyn Backend,
    config: &PipelineConfig,
    exec: Execution,
) -> SynthOutput {
    let outcomes = exec.map_indexed(inputs, |i, (set, qt)| synth_one(i, set, *qt, backend, config));
    let mut out = SynthOutput {
        records: Vec::new(),
        scores: Vec::new(),
        dropped: Vec::new(),
    };
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Outcome::Kept(rec, score) => {
                out.records.push(rec);
                out.scores.push(score);
            }
            Outcome::Dropped(reason) => out.dropped.push(DroppedSet {
                index: i,
                query: inputs[i].0.query.text.clone(),
                reason,
            }),
        }
    }
    out
}

fn synth_one(index: usize, set: &CandidateSet, query_type: QueryType, backend: &dyn Backend, config: &PipelineConfig) -> Outcome {
    let policy = &config.backend.call;
    let template = &config.templates.reranker;
    let mut samples: Vec<Ranking> = Vec::with_capacity(config.consistency.samples + 1);
    for j in 0..=config.consistency.samples {
        let mut variant = set.clone();
        if j > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, index as u64, j as u64]));
            variant.candidates.shuffle(&mut rng);
        }
        match rerank(&variant, None, backend, policy, template) {
            Ok(r) if !r.fallback => samples.push(r.ranking),
            Ok(r) => return Outcome::Dropped(format!("sample {j}: unusable answer ({:?})", r.format)),
            Err(e) => return Outcome::Dropped(format!("sample {j}: {e}")),
        }
    }
    let score = if samples.len() < 2 {
        1.0
    } else {
        match consistency_score(&samples, config.rbo_p, config.consistency.mode) {
            Ok(s) => s,
            Err(e) => return Outcome::Dropped(e.to_string()),
        }
    };
    if score < config.consistency.threshold {
        return Outcome::Dropped(format!("consistency {score:.4} below {}", config.consistency.threshold));
    }
    Outcome::Kept(
        LabeledSet {
            set: set.clone(),
            label: samples.swap_remove(0),
            query_type,
        },
        score,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::testing::{EchoBackend, FaultInjectingBackend};
    use crate::backend::StubBackend;
    use crate::model::is_permutation;
    use crate::synthetic::eval_dataset;

    fn inputs(n: usize) -> Vec<(CandidateSet, QueryType)> {
        eval_dataset(n, 8).into_iter().map(|r| (r.set, r.query_type)).collect()
    }

    #[test]
    fn order_invariant_teacher_keeps_everything() {
        let data = inputs(5);
        let cfg = PipelineConfig::default();
        let out = synthesize_teacher_dataset(&data, &StubBackend::default(), &cfg, Execution::Parallel);
        assert_eq!(out.records.len(), 5);
        assert!(out.scores.iter().all(|s| (s - 1.0).abs() < 1e-12));
        for r in &out.records {
            assert!(is_permutation(&r.label, &r.set));
        }
        let seq = synthesize_teacher_dataset(&data, &StubBackend::default(), &cfg, Execution::Sequential);
        assert_eq!(seq, out);
    }

    #[test]
    fn position_biased_teacher_is_filtered() {
        let data = inputs(4);
        let out = synthesize_teacher_dataset(&data, &EchoBackend::default(), &PipelineConfig::default(), Execution::Sequential);
        assert!(out.records.is_empty());
        assert_eq!(out.dropped.len(), 4);
        assert!(out.dropped[0].reason.contains("consistency"));
    }

    #[test]
    fn unusable_answers_drop_the_set() {
        let data = inputs(3);
        let faulty = FaultInjectingBackend::new(StubBackend::default(), 1.0);
        let out = synthesize_teacher_dataset(&data, &faulty, &PipelineConfig::default(), Execution::Sequential);
        assert_eq!(out.dropped.len(), 3);
        assert!(out.dropped.iter().all(|d| d.reason.contains("unusable")));
    }
}
