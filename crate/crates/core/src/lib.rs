//! Zero-shot traffic-scene labelling benchmark: prompt, query, parse, score and vote.

pub mod cli;
pub mod dataset;
pub mod diagnostic;
pub mod ensemble;
pub mod metrics;
pub mod parsing;
pub mod predictions;
pub mod prompt;
pub mod providers;
pub mod report;
pub mod schema;

pub use diagnostic::{Diagnostic, DiagnosticKind};
pub use schema::{attribute_registry, AttributeKind, AttributeSchema, AttributeSpec, EvalLabel, SceneLabel};
