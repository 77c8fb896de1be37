//! Stage-token introduction generation toolkit.
//!
//! End-to-end pipeline for staged scientific-introduction generation:
//! building stage-annotated corpora from structured paper records, emitting
//! instruction-tuning datasets with a special-token registry, running
//! single-inference and agentic generation workflows with token accounting,
//! and scoring generated introductions on five evaluation dimensions.

pub mod assets;
pub mod corpus;
pub mod dataset;
pub mod evaluation;
pub mod generation;
pub mod stage;
pub mod text;
