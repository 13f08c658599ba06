//! End-to-end orchestration: configuration, single-query runs, dataset
//! evaluation, the sample-consistency filter and teacher-label synthesis.

mod config;
mod consistency;
mod dataset;
mod eval;
mod run;
mod synth;

pub use config::{BackendConfig, BackendKind, ConfigError, ConsistencyConfig, PipelineConfig, RboMode};
pub use consistency::{consistency_filter, consistency_score, ConsistencyError, ConsistencyVerdict};
pub use dataset::{parse_jsonl, read_jsonl, to_jsonl, write_jsonl, DatasetError, LabeledSet};
pub use eval::{evaluate_dataset, EvalError, EvalRecord, EvalReport, Predictor, TypeSummary};
pub use run::{run_pipeline, CoverRecord, PipelineError, PipelineOutput, Provenance};
pub use synth::{synthesize_teacher_dataset, DroppedSet, SynthOutput};
