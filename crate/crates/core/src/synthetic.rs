//! Seeded generators for the bundled demo data: candidate sets, a learnable
//! GRPO dataset, a labelled evaluation dataset and a small retrieval corpus.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grpo::{Features, ToyRankPolicy, TrainingExample};
use crate::model::{Candidate, CandidateSet, Grade, IntentDimension, Query, QueryType, Ranking, SideInfo};
use crate::pipeline::LabeledSet;

/// Weights that define the "true" ordering in [`learnable_dataset`]:
/// relevance, quality, CTR, completion, recency.
pub const HIDDEN_THETA: [f64; 5] = [1.0, 0.5, 2.0, 1.5, 0.8];

const BASE_TIME: i64 = 1_700_000_000;

const TOPICS: &[(&str, QueryType, &[&str])] = &[
    ("iPhone 15 vs Huawei Mate 60", QueryType::Complex, &["iPhone 15 battery life", "Huawei Mate 60 camera quality"]),
    ("Which is better to buy, Kindle or Kobo?", QueryType::Complex, &["Kindle screen glare"]),
    ("Rust vs Go", QueryType::Complex, &[]),
    ("Beijing travel guide", QueryType::BroadNeeds, &["Cheap accommodation in Beijing"]),
    ("Yunnan travel", QueryType::BroadNeeds, &[]),
    ("Tokyo food guide", QueryType::BroadNeeds, &["ramen near Shinjuku"]),
    ("weather today", QueryType::Simple, &[]),
    ("Python tutoral", QueryType::Simple, &[]),
    ("sourdough starter", QueryType::Simple, &["bread flour types"]),
    ("marathon training plan", QueryType::Simple, &[]),
];

fn candidate<R: Rng>(rng: &mut R, id: String, topic: &str) -> Candidate {
    let side = SideInfo::new(
        BASE_TIME - rng.random_range(0..90 * 86_400),
        rng.random_range(0.0..0.35),
        rng.random_range(0.05..0.95),
    )
    .expect("generated rates lie in [0,1]");
    let mut c = Candidate::new(
        id.clone(),
        format!("{topic}: note {id}"),
        format!("Notes about {topic}, entry {id}."),
        side,
    );
    if rng.random_bool(0.85) {
        c.cover_image_ref = Some(format!("img://{id}.jpg"));
        c.relevance_grade = Some(Grade::relevance(rng.random_range(1..=4)).unwrap());
        c.quality_grade = Some(Grade::quality(rng.random_range(1..=4)).unwrap());
    }
    let dims = IntentDimension::ALL;
    for d in dims {
        if rng.random_bool(0.4) {
            c.source_subquery_dimensions.insert(d);
        }
    }
    c
}

pub fn candidate_set(seed: u64, query: Query, n: usize, id_prefix: &str) -> CandidateSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topic = query.text.clone();
    let candidates = (0..n)
        .map(|i| candidate(&mut rng, format!("{id_prefix}{i:02}"), &topic))
        .collect();
    CandidateSet::new(query, candidates)
}

/// Ordering by descending `theta . features`, ties broken by id.
pub fn score_order(set: &CandidateSet, theta: &[f64]) -> Ranking {
    let scores = ToyRankPolicy::new(theta.to_vec()).scores(&Features::from_candidates(set));
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| set.candidates[a].id.cmp(&set.candidates[b].id))
    });
    Ranking::new(idx.into_iter().map(|i| set.candidates[i].id.clone()).collect())
}

/// Sets of 12-20 candidates whose labels are exactly the [`HIDDEN_THETA`] score order.
pub fn learnable_dataset(n_queries: usize, seed: u64) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_queries)
        .map(|q| {
            let (topic, _, _) = TOPICS[q % TOPICS.len()];
            let n = rng.random_range(12..=20);
            let set = candidate_set(rng.random(), Query::simple(topic).unwrap(), n, &format!("q{q:02}d"));
            let label = score_order(&set, &HIDDEN_THETA);
            TrainingExample { set, label }
        })
        .collect()
}

/// Labelled sets cycling through the three query types. Labels are the
/// hidden score order with a few adjacent swaps, so they are not trivially
/// recoverable from any single feature.
pub fn eval_dataset(n_queries: usize, seed: u64) -> Vec<LabeledSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_queries)
        .map(|q| {
            let (topic, query_type, session) = TOPICS[q % TOPICS.len()];
            let query = Query::new(topic, session.iter().map(|s| s.to_string()).collect()).unwrap();
            let n = rng.random_range(6..=20);
            let set = candidate_set(rng.random(), query, n, &format!("e{q:02}d"));
            let mut label = score_order(&set, &HIDDEN_THETA).into_inner();
            for _ in 0..3 {
                let i = rng.random_range(0..label.len() - 1);
                label.swap(i, i + 1);
            }
            LabeledSet {
                set,
                label: Ranking::new(label),
                query_type,
            }
        })
        .collect()
}

/// A retrieval corpus: for each topic, a pool of candidates whose titles
/// mention the topic, shuffled together.
pub fn corpus(per_topic: usize, seed: u64) -> Vec<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (t, (topic, _, session)) in TOPICS.iter().enumerate() {
        for i in 0..per_topic {
            let facet = match session.get(i % (session.len() + 1)) {
                Some(s) => *s,
                None => *topic,
            };
            out.push(candidate(&mut rng, format!("t{t}c{i:02}"), facet));
        }
    }
    out.shuffle(&mut rng);
    out
}
