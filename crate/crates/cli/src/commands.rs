use std::fmt;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use richrank::backend::Backend;
use richrank::exec::with_concurrency_limit;
use richrank::grpo::train_toy_policy_with;
use richrank::metrics::MetricScores;
use richrank::model::{is_permutation, validate_candidate_set, Candidate, CandidateSet, Grade, Query, Ranking, SideInfo};
use richrank::parser::{parse_grading, parse_id_list, parse_rerank};
use richrank::pipeline::{
    evaluate_dataset, parse_jsonl, read_jsonl, run_pipeline, synthesize_teacher_dataset, to_jsonl, write_jsonl,
    DatasetError, LabeledSet, PipelineConfig, Predictor,
};
use richrank::retrieval::CorpusRetriever;
use richrank::reward::{score_grading_response, score_rerank_response};
use richrank::synthetic::{corpus, eval_dataset, learnable_dataset};

use crate::{Cli, Command, ParseKind, TaskArg};

pub const BUNDLED_EVAL: &str = include_str!("../data/eval50.jsonl");
pub const BUNDLED_CORPUS: &str = include_str!("../data/corpus.jsonl");
pub const EVAL_QUERIES: usize = 50;
pub const EVAL_SEED: u64 = 2026;
pub const CORPUS_PER_TOPIC: usize = 12;
pub const CORPUS_SEED: u64 = 2026;

#[derive(Debug)]
pub enum CliError {
    Data(String),
    Backend(String),
    Config(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Data(_) => 1,
            CliError::Backend(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Backend(m) => write!(f, "backend: {m}"),
            CliError::Config(m) => write!(f, "config: {m}"),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.grpo.seed = seed;
    }
    if let Some(kind) = cli.backend {
        cfg.backend.kind = kind.into();
    }
    if let Some(p) = &cli.replay_store {
        cfg.backend.replay_store = Some(p.clone());
    }
    if let Some(p) = &cli.record {
        cfg.backend.record = Some(p.clone());
    }
    if cli.sequential {
        cfg.parallel = false;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn build_backend(cfg: &PipelineConfig) -> Result<Box<dyn Backend>> {
    cfg.build_backend().map_err(|e| CliError::Config(e.to_string()))
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display()))),
        None => {
            stdout(&format!("{}\n", text.trim_end()));
            Ok(())
        }
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn stdout(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn emit_json<T: Serialize>(cli: &Cli, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    emit(cli, &(text + "\n"))
}

fn labeled(path: Option<&Path>) -> Result<Vec<LabeledSet>> {
    match path {
        Some(p) => Ok(read_jsonl(p)?),
        None => Ok(parse_jsonl(BUNDLED_EVAL.as_bytes())?),
    }
}

fn id_list(text: &str, what: &str) -> Result<Ranking> {
    parse_id_list(text)
        .map(Ranking::new)
        .ok_or_else(|| CliError::Data(format!("{what} is not an id list like [a, b, c]: {text:?}")))
}

fn limited<R: Send>(cfg: &PipelineConfig, f: impl FnOnce() -> R + Send) -> R {
    match cfg.concurrency {
        Some(n) if cfg.parallel => with_concurrency_limit(n, f),
        _ => f(),
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Run { query, session, corpus } => {
            let query = Query::new(query.clone(), session.clone()).map_err(|e| CliError::Data(e.to_string()))?;
            let docs: Vec<Candidate> = match corpus {
                Some(p) => read_jsonl(p)?,
                None => parse_jsonl(BUNDLED_CORPUS.as_bytes())?,
            };
            let retriever = CorpusRetriever::new(docs);
            let backend = build_backend(&cfg)?;
            let out = limited(&cfg, || run_pipeline(&query, &retriever, backend.as_ref(), &cfg)).map_err(|e| {
                if e.is_backend() {
                    CliError::Backend(e.to_string())
                } else {
                    CliError::Data(e.to_string())
                }
            })?;
            emit_json(cli, &out)
        }
        Command::Eval { dataset, predictions } => {
            let data = labeled(dataset.as_deref())?;
            let stored: Option<Vec<Ranking>> = predictions.as_deref().map(read_jsonl).transpose()?;
            let backend = match stored {
                Some(_) => None,
                None => Some(build_backend(&cfg)?),
            };
            let predictor = match (&stored, &backend) {
                (Some(p), _) => Predictor::Stored(p),
                (None, Some(b)) => Predictor::Backend {
                    backend: b.as_ref(),
                    policy: cfg.backend.call,
                    templates: cfg.templates.clone(),
                },
                (None, None) => unreachable!("backend is built when no predictions are given"),
            };
            let report = limited(&cfg, || evaluate_dataset(&data, &predictor, cfg.rbo_p, cfg.execution()))
                .map_err(|e| CliError::Data(e.to_string()))?;
            if cli.output.is_some() {
                emit_json(cli, &report)?;
            }
            stdout(&report.to_table());
            for r in report.records.iter().filter(|r| r.error.is_some()) {
                eprintln!("record {}: {}", r.index, r.error.as_deref().unwrap_or_default());
            }
            if report.scored == 0 {
                return Err(CliError::Data("no record could be scored".into()));
            }
            Ok(())
        }
        Command::Reward {
            task,
            response,
            truth,
            dataset,
            index,
        } => match task {
            TaskArg::Relevance | TaskArg::Quality => {
                let t = truth.ok_or_else(|| CliError::Data("--truth is required for grading tasks".into()))?;
                let grade = match task {
                    TaskArg::Relevance => Grade::relevance(t),
                    _ => Grade::quality(t),
                }
                .map_err(|e| CliError::Data(e.to_string()))?;
                let (parsed, breakdown) = score_grading_response(response, grade);
                emit_json(cli, &json!({ "parsed": parsed, "reward": breakdown }))
            }
            TaskArg::Rerank => {
                let data = labeled(dataset.as_deref())?;
                let rec = data
                    .get(*index)
                    .ok_or_else(|| CliError::Data(format!("index {index} out of range ({} records)", data.len())))?;
                let (parsed, breakdown) = score_rerank_response(response, &rec.set, &rec.label, &cfg.gammas, cfg.rbo_p)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                emit_json(cli, &json!({ "parsed": parsed, "reward": breakdown }))
            }
        },
        Command::Parse { kind, text, ids } => match kind {
            ParseKind::Grading => emit_json(cli, &parse_grading(text)),
            ParseKind::Rerank => {
                let ids = ids
                    .as_deref()
                    .ok_or_else(|| CliError::Data("--ids is required for re-rank parsing".into()))?;
                let ids = id_list(ids, "--ids")?;
                let side = SideInfo::new(0, 0.0, 0.0).expect("zero rates are valid");
                let set = CandidateSet::new(
                    Query::simple("cli").expect("non-empty"),
                    ids.iter().map(|id| Candidate::new(id.clone(), "", "", side)).collect(),
                );
                emit_json(cli, &parse_rerank(text, &set))
            }
        },
        Command::Metrics { pred, label } => {
            let pred = id_list(pred, "--pred")?;
            let label = id_list(label, "--label")?;
            let scores = MetricScores::compute(&pred, &label, cfg.rbo_p).map_err(|e| CliError::Data(e.to_string()))?;
            emit_json(cli, &scores)
        }
        Command::GrpoDemo { queries, iterations } => {
            let mut gcfg = cfg.grpo;
            if let Some(it) = iterations {
                gcfg.iterations = *it;
            }
            gcfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let data = learnable_dataset(*queries, cfg.seed);
            let out = limited(&cfg, || train_toy_policy_with(&data, &gcfg, &cfg.gammas, cfg.execution()))
                .map_err(|e| CliError::Data(e.to_string()))?;
            eprintln!(
                "mean task reward {:.4} -> {:.4} over {} iterations",
                out.initial_task_reward(),
                out.final_task_reward(),
                gcfg.iterations
            );
            emit_json(
                cli,
                &json!({
                    "theta": out.policy.theta,
                    "initial_task_reward": out.initial_task_reward(),
                    "final_task_reward": out.final_task_reward(),
                    "trace": out.trace,
                }),
            )
        }
        Command::Synth { dataset } => {
            let inputs: Vec<_> = labeled(dataset.as_deref())?
                .into_iter()
                .map(|r| (r.set, r.query_type))
                .collect();
            let backend = build_backend(&cfg)?;
            let out = limited(&cfg, || synthesize_teacher_dataset(&inputs, backend.as_ref(), &cfg, cfg.execution()));
            for d in &out.dropped {
                eprintln!("dropped {} ({}): {}", d.index, d.query, d.reason);
            }
            eprintln!("kept {} of {}", out.records.len(), inputs.len());
            emit(cli, &to_jsonl(&out.records)?)
        }
        Command::Validate { dataset } => {
            let data: Vec<LabeledSet> = read_jsonl(dataset)?;
            let mut problems = Vec::new();
            for (i, rec) in data.iter().enumerate() {
                let mut msgs: Vec<String> = validate_candidate_set(&rec.set).iter().map(ToString::to_string).collect();
                if !is_permutation(&rec.label, &rec.set) {
                    msgs.push("label is not a permutation of the candidate set".into());
                }
                if !msgs.is_empty() {
                    problems.push(json!({ "record": i, "query": rec.set.query.text, "violations": msgs }));
                }
            }
            emit_json(cli, &json!({ "records": data.len(), "invalid": problems.len(), "problems": problems }))?;
            if problems.is_empty() {
                Ok(())
            } else {
                Err(CliError::Data(format!("{} invalid record(s)", problems.len())))
            }
        }
        Command::DemoData { out_dir } => {
            std::fs::create_dir_all(out_dir).map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;
            write_jsonl(&out_dir.join("eval50.jsonl"), &eval_dataset(EVAL_QUERIES, EVAL_SEED))?;
            write_jsonl(&out_dir.join("corpus.jsonl"), &corpus(CORPUS_PER_TOPIC, CORPUS_SEED))?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_data_matches_generators() {
        assert_eq!(BUNDLED_EVAL, to_jsonl(&eval_dataset(EVAL_QUERIES, EVAL_SEED)).unwrap());
        assert_eq!(BUNDLED_CORPUS, to_jsonl(&corpus(CORPUS_PER_TOPIC, CORPUS_SEED)).unwrap());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Data(String::new()).code(), 1);
        assert_eq!(CliError::Backend(String::new()).code(), 2);
        assert_eq!(CliError::Config(String::new()).code(), 3);
    }
}
