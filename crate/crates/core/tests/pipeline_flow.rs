mod common;

use common::{pairwise_rbo_oracle, Q};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use richrank::backend::testing::FaultInjectingBackend;
use richrank::backend::{CallPolicy, RecordingBackend, ReplayBackend, StubBackend, TemplateIds};
use richrank::metrics::MetricScores;
use richrank::model::{is_permutation, Query, QueryType, Ranking};
use richrank::pipeline::{
    consistency_filter, consistency_score, evaluate_dataset, run_pipeline, PipelineConfig, Predictor, RboMode,
};
use richrank::planner::plan;
use richrank::retrieval::CorpusRetriever;
use richrank::synthetic::{corpus, eval_dataset};
use richrank::Execution;

fn queries() -> Vec<Query> {
    vec![
        Query::new("iPhone 15 vs Huawei Mate 60", vec!["iPhone 15 battery life".into()]).unwrap(),
        Query::new("Yunnan travel", vec![]).unwrap(),
        Query::simple("Python tutoral").unwrap(),
        Query::simple("sourdough starter").unwrap(),
    ]
}

#[test]
fn recorded_runs_replay_identically() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.jsonl");
    let retriever = CorpusRetriever::new(corpus(10, 1));
    let cfg = PipelineConfig::default();
    let recorder = RecordingBackend::new(StubBackend::default(), &store).unwrap();
    let live: Vec<_> = queries()
        .iter()
        .map(|q| run_pipeline(q, &retriever, &recorder, &cfg).unwrap())
        .collect();
    drop(recorder);
    let replay = ReplayBackend::open(&store).unwrap();
    for (q, expected) in queries().iter().zip(&live) {
        let got = run_pipeline(q, &retriever, &replay, &cfg).unwrap();
        assert_eq!(&got, expected);
        assert!(is_permutation(&got.ranking, &got.provenance.candidates));
    }
}

#[test]
fn planner_through_backend_matches_rules() {
    let stub = StubBackend::default();
    for q in queries() {
        let p = plan(&q, &stub, &CallPolicy::default(), "planner.v1").unwrap();
        assert_eq!(p, richrank::planner::rule_stub_plan(&q));
        assert!(p.violations().is_empty());
        if p.query_type == QueryType::Simple {
            assert_eq!(p.subqueries.len(), 1);
        }
    }
}

#[test]
fn eval_means_are_recomputable() {
    let data = eval_dataset(30, 9);
    let stub = StubBackend::default();
    let report = evaluate_dataset(
        &data,
        &Predictor::Backend {
            backend: &stub,
            policy: CallPolicy::default(),
            templates: TemplateIds::default(),
        },
        0.9,
        Execution::Parallel,
    )
    .unwrap();
    assert_eq!(report.scored, 30);
    for qt in QueryType::ALL {
        let of_type: Vec<&MetricScores> = report
            .records
            .iter()
            .filter(|r| r.query_type == qt)
            .map(|r| r.scores.as_ref().unwrap())
            .collect();
        let mean = report.per_type[&qt].mean;
        for m in 0..5 {
            let want: f64 = of_type.iter().map(|s| s.values()[m]).sum::<f64>() / of_type.len() as f64;
            assert!((mean.values()[m] - want).abs() <= 1e-12);
        }
    }
    for r in &report.records {
        let pred = r.prediction.as_ref().unwrap();
        let again = MetricScores::compute(pred, &data[r.index].label, 0.9).unwrap();
        assert_eq!(Some(again), r.scores);
    }
}

#[test]
fn consistency_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [3usize, 5, 7] {
        for m in 2..=5 {
            let samples: Vec<Vec<usize>> = (0..m)
                .map(|_| {
                    let mut p: Vec<usize> = (0..n).collect();
                    p.shuffle(&mut rng);
                    p
                })
                .collect();
            let rankings: Vec<Ranking> = samples
                .iter()
                .map(|p| Ranking::new(common::ids(p).into_iter().map(Into::into).collect()))
                .collect();
            for (mode, normalized) in [(RboMode::Truncated, false), (RboMode::Normalized, true)] {
                let got = consistency_score(&rankings, 0.9, mode).unwrap();
                let want = pairwise_rbo_oracle(&samples, Q::new(9, 10), normalized);
                assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
                let mut kept_before = true;
                for step in 0..=20 {
                    let t = step as f64 / 20.0;
                    let keep = consistency_filter(&rankings, t, 0.9, mode).unwrap().keep;
                    assert!(kept_before || !keep, "keep must be monotone in the threshold");
                    kept_before = keep;
                }
            }
        }
    }
}

#[test]
fn fallback_rate_tracks_injection() {
    let retriever = CorpusRetriever::new(corpus(8, 2));
    let cfg = PipelineConfig {
        parallel: false,
        ..PipelineConfig::default()
    };
    let backend = FaultInjectingBackend::new(StubBackend::default(), 0.5);
    let qs = queries();
    let mut fallbacks = 0;
    for i in 0..40 {
        let out = run_pipeline(&qs[i % qs.len()], &retriever, &backend, &cfg).unwrap();
        assert!(is_permutation(&out.ranking, &out.provenance.candidates));
        fallbacks += usize::from(out.provenance.fallback);
    }
    assert_eq!(fallbacks, 20);
    assert_eq!(backend.counts(), (40, 20));
}
