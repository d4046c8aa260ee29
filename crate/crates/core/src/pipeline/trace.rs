//! Versioned run traces (`dot-trace/1`), stored as pretty-printed JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RunMode;
use crate::engine::{SearchConfig, StepRecord};
use crate::tree::{DesignBrief, TreeError, TreeState};

pub const TRACE_VERSION: &str = "dot-trace/1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported trace version {0:?}")]
    Version(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub version: String,
    pub run_id: String,
    pub mode: RunMode,
    pub brief: DesignBrief,
    pub config: SearchConfig,
    /// Set when any prompt ran without case evidence.
    pub ungrounded: bool,
    pub steps: Vec<StepRecord>,
    pub call_count: usize,
    /// SHA-256 over the newline-joined request fingerprints, in issue order.
    pub call_log_digest: String,
    /// Present when the run stopped early.
    pub error: Option<String>,
}

impl Trace {
    pub fn is_complete(&self) -> bool {
        self.error.is_none()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Trace, TraceError> {
        let trace: Trace = serde_json::from_str(text).map_err(|e| TraceError::Parse {
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        })?;
        if trace.version != TRACE_VERSION {
            return Err(TraceError::Version(trace.version));
        }
        Ok(trace)
    }

    /// Appends every recorded stage result to a fresh tree state.
    pub fn replay(&self) -> Result<TreeState, TreeError> {
        let mut state = TreeState::new(self.brief.clone())?;
        for step in self.steps.iter().filter(|s| s.stage.is_some()) {
            state = state.append_layer(step.stage_result()?)?;
        }
        Ok(state)
    }
}

/// Converts serde_json's 1-based line/column into a byte offset.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

pub fn export_trace(trace: &Trace, path: &Path) -> Result<(), TraceError> {
    std::fs::write(path, trace.to_json()).map_err(|e| TraceError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn import_trace(path: &Path) -> Result<Trace, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|e| TraceError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Trace::from_json(&text)
}
