//! Argument analysis engine: structure extraction, per-relation validity
//! checking, quote anchoring, Socratic dialogue and the evaluation harness.

pub mod anchor;
pub mod eval;
pub mod evaluation;
pub mod graph;
pub mod gateway;
pub mod pipeline;
pub mod plan;
pub mod prompts;
pub mod socratic;
