//! Staged divergence/convergence thought-tree search for conceptual design.
//!
//! A run walks four design stages (Discovery, Requirement Analysis,
//! Produce/Ideate/Define, Technology Analysis) breadth-first. At each stage
//! the model proposes many ideas, repeats are tallied rather than dropped,
//! and a self-consistency vote converges the pool to an accepted set and a
//! synthesis. Prompts are grounded with function-behaviour-structure facets
//! retrieved from a case store, each stage seeing only the facets relevant
//! to it.
//!
//! Module map:
//! - [`tree`]: thought-tree state, duplicate canonicalization and tallying
//! - [`engine`]: generator, selector, and the level-order search
//! - [`promptkit`]: template registry, parameter router, prompt aggregator
//! - [`backend`]: scripted mock and HTTP chat-completion client
//! - [`casedb`]: case records, BM25 retrieval, stage facet projection
//! - [`pipeline`]: run modes, design documents, trace files
//! - [`evalkit`]: rank conversion, Kendall's W, comparison reports
//! - [`cli`]: the `dot` command

pub mod backend;
pub mod casedb;
pub mod cli;
pub mod engine;
pub mod evalkit;
pub mod pipeline;
pub mod promptkit;
pub mod tree;

pub use backend::{Backend, BackendError, Completion, CompletionRequest, MockBackend, ScriptEntry};
pub use casedb::{CaseDatabase, DesignCase, FacetView};
pub use engine::{DesignSolution, Engine, SearchConfig};
pub use pipeline::{run, DesignDocument, RunMode, Trace};
pub use promptkit::{PromptRouter, TemplateRegistry};
pub use tree::{DesignBrief, StageId, ThoughtNode, TreeState};
