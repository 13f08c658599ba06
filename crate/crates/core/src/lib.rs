//! Listwise re-ranking pipeline: session-aware query planning, candidate
//! assembly, cover-image grading and listwise re-ranking through pluggable
//! model backends, together with the ranking metrics, reward functions and
//! group-relative policy optimisation used to train and evaluate re-rankers.

pub mod backend;
pub mod exec;
pub mod grpo;
pub mod metrics;
pub mod model;
pub mod parser;
pub mod planner;
pub mod retrieval;
pub mod reward;

pub use exec::Execution;
pub mod pipeline;
pub mod synthetic;
