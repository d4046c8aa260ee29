//! End-to-end runs: the staged search and the two single-call baselines.
//!
//! - `io`: one zero-shot call with the brief only.
//! - `cot`: one call whose prompt carries a fixed worked example that walks
//!   through the four stages.
//! - `dot`: the staged search of [`crate::engine`].
//!
//! Every mode yields a [`DesignDocument`] and a [`Trace`]; failed runs carry
//! the partial trace.

mod document;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use document::{render_document, DesignDocument, DocFormat, Section};
pub use trace::{export_trace, import_trace, Trace, TraceError, TRACE_VERSION};

use crate::backend::{Backend, BackendError, CompletionRequest, Recording};
use crate::casedb::CaseDatabase;
use crate::engine::{run_id, Engine, EngineError, PromptRecord, SampleRecord, SearchConfig, StepRecord};
use crate::promptkit::{brief_block, PromptRouter, TemplateRegistry};
use crate::tree::{canonicalize, DesignBrief, TreeError, TreeState};

/// Fixed worked example embedded in every cot prompt.
pub const COT_EXEMPLAR: &str = include_str!("../../assets/cot_exemplar.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Io,
    Cot,
    Dot,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Io => "io",
            RunMode::Cot => "cot",
            RunMode::Dot => "dot",
        })
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "io" => Ok(RunMode::Io),
            "cot" => Ok(RunMode::Cot),
            "dot" => Ok(RunMode::Dot),
            other => Err(format!("unknown mode {other:?} (expected io, cot or dot)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub document: DesignDocument,
    pub trace: Trace,
    /// Final tree state (dot mode only).
    pub state: Option<TreeState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: PipelineError,
    /// Everything completed before the failure.
    pub trace: Trace,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {}

pub fn io_prompt(brief: &DesignBrief) -> String {
    format!(
        "You are a product designer. Produce a conceptual design solution for the following design task.\n\n{}\n",
        brief_block(brief)
    )
}

pub fn cot_prompt(brief: &DesignBrief) -> String {
    format!(
        "You are a product designer. Work through the design process stage by stage: Discovery, Requirement Analysis, Produce, Ideate and Define, then Technology Analysis and Definition. Follow the format of the example.\n\n{}\nYour task\n{}\n\nYour answer\n",
        COT_EXEMPLAR,
        brief_block(brief)
    )
}

fn digest(log: &[CompletionRequest]) -> String {
    let joined = log.iter().map(CompletionRequest::fingerprint).collect::<Vec<_>>().join("\n");
    hex::encode(Sha256::digest(joined.as_bytes()))
}

/// Runs one design task in the given mode.
pub fn run(
    brief: &DesignBrief,
    mode: RunMode,
    config: &SearchConfig,
    db: &CaseDatabase,
    backend: &dyn Backend,
    templates: &TemplateRegistry,
) -> Result<RunOutput, RunFailure> {
    let recorder = Recording::new(backend);
    let mut trace = Trace {
        version: TRACE_VERSION.to_owned(),
        run_id: run_id(brief, config, &mode.to_string()),
        mode,
        brief: brief.clone(),
        config: config.clone(),
        ungrounded: false,
        steps: Vec::new(),
        call_count: 0,
        call_log_digest: String::new(),
        error: None,
    };
    let finish = |trace: &mut Trace| {
        let log = recorder.call_log().expect("recording backend");
        trace.call_count = log.len();
        trace.call_log_digest = digest(&log);
        trace.ungrounded = trace.steps.iter().any(|s| s.ungrounded);
    };
    let fail = |mut trace: Trace, error: PipelineError| {
        finish(&mut trace);
        trace.error = Some(error.to_string());
        RunFailure { error, trace }
    };

    if let Err(e) = brief.validate() {
        return Err(fail(trace, e.into()));
    }

    match mode {
        RunMode::Dot => {
            let router = PromptRouter::new(templates.clone(), config.k, config.votes);
            let engine = match Engine::new(&recorder, &router, db, config.clone()) {
                Ok(e) => e,
                Err(e) => return Err(fail(trace, e.into())),
            };
            match engine.dot_bfs(brief) {
                Ok(outcome) => {
                    trace.steps = outcome.steps;
                    finish(&mut trace);
                    Ok(RunOutput {
                        document: DesignDocument::from_solution(brief, &outcome.solution),
                        trace,
                        state: Some(outcome.state),
                    })
                }
                Err(failure) => {
                    trace.steps = failure.completed;
                    Err(fail(trace, failure.error.into()))
                }
            }
        }
        RunMode::Io | RunMode::Cot => {
            let text = if mode == RunMode::Io {
                io_prompt(brief)
            } else {
                cot_prompt(brief)
            };
            let mut request = CompletionRequest::new(text.clone()).with_seed_hint(config.seed);
            if let Some(t) = config.temperature {
                request = request.with_temperature(t);
            }
            let response = match recorder.complete(&request) {
                Ok(c) => c.text.trim().to_owned(),
                Err(e) => return Err(fail(trace, e.into())),
            };
            trace.steps.push(StepRecord {
                step: 1,
                stage: None,
                ungrounded: true,
                prompts: vec![PromptRecord {
                    label: mode.to_string(),
                    text,
                    citations: Vec::new(),
                    ungrounded: true,
                }],
                samples: vec![SampleRecord {
                    index: 0,
                    text: response.clone(),
                    node_id: None,
                }],
                candidates: Vec::new(),
                tally: [(canonicalize(&response), 1)].into_iter().collect(),
                votes: Vec::new(),
                accepted: Vec::new(),
                synthesis: None,
                calls: 1,
            });
            finish(&mut trace);
            Ok(RunOutput {
                document: DesignDocument::single(brief, mode, &response),
                trace,
                state: None,
            })
        }
    }
}

/// Accepted idea texts per staged step, read back from a trace.
pub fn accepted_sets(trace: &Trace) -> Result<Vec<Vec<String>>, TreeError> {
    trace
        .steps
        .iter()
        .filter(|s| s.stage.is_some())
        .map(|s| Ok(s.stage_result()?.accepted.into_iter().map(|n| n.content).collect()))
        .collect()
}
