use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Completion, CompletionRequest};

/// One scripted reply. When `match` is set the prompt must contain it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub match_: Option<String>,
    pub response: String,
}

impl ScriptEntry {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            match_: None,
            response: response.into(),
        }
    }

    pub fn matching(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            match_: Some(pattern.into()),
            response: response.into(),
        }
    }
}

/// Parses a script: one JSON object per non-blank line, `{"match"?, "response"}`.
pub fn parse_script(text: &str) -> Result<Vec<ScriptEntry>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

pub fn load_script(path: &Path) -> Result<Vec<ScriptEntry>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_script(&text)
}

#[derive(Debug, Default)]
struct MockState {
    cursor: usize,
    log: Vec<CompletionRequest>,
}

/// Scripted backend: entries are consumed strictly in order.
#[derive(Debug)]
pub struct MockBackend {
    script: Vec<ScriptEntry>,
    state: Mutex<MockState>,
}

impl MockBackend {
    pub fn new(script: Vec<ScriptEntry>) -> Self {
        Self {
            script,
            state: Mutex::new(MockState::default()),
        }
    }

    /// Script of unconstrained responses.
    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(responses.into_iter().map(ScriptEntry::new).collect())
    }

    pub fn remaining(&self) -> usize {
        self.script.len() - self.state.lock().unwrap().cursor
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let mut state = self.state.lock().unwrap();
        state.log.push(request.clone());
        request.validate()?;
        let index = state.cursor;
        let entry = self
            .script
            .get(index)
            .ok_or(BackendError::ScriptUnderrun { request: state.log.len() })?;
        if let Some(expected) = &entry.match_ {
            if !request.prompt.contains(expected.as_str()) {
                return Err(BackendError::ScriptMismatch {
                    entry: index + 1,
                    expected: expected.clone(),
                });
            }
        }
        state.cursor += 1;
        Ok(Completion {
            text: entry.response.clone(),
            latency: Duration::ZERO,
            provider: "mock".into(),
            request_fingerprint: request.fingerprint(),
        })
    }

    fn call_log(&self) -> Result<Vec<CompletionRequest>, BackendError> {
        Ok(self.state.lock().unwrap().log.clone())
    }

    fn provider(&self) -> &str {
        "mock"
    }
}

#[cfg(test)]
mod tests {
    use sha2::{Digest, Sha256};

    use super::*;

    #[test]
    fn pops_then_underruns() {
        let mock = MockBackend::from_responses(["A"]);
        let req = CompletionRequest::new("q");
        assert_eq!(mock.complete(&req).unwrap().text, "A");
        assert!(matches!(
            mock.complete(&req),
            Err(BackendError::ScriptUnderrun { request: 2 })
        ));
    }

    #[test]
    fn match_constraint() {
        let mock = MockBackend::new(vec![ScriptEntry::matching("stage: discovery", "ok")]);
        let err = mock.complete(&CompletionRequest::new("stage: technology")).unwrap_err();
        match err {
            BackendError::ScriptMismatch { expected, .. } => assert_eq!(expected, "stage: discovery"),
            other => panic!("unexpected {other:?}"),
        }
        // a mismatch does not consume the entry
        assert_eq!(
            mock.complete(&CompletionRequest::new("stage: discovery")).unwrap().text,
            "ok"
        );
    }

    #[test]
    fn call_log_records_in_order() {
        let mock = MockBackend::from_responses(["1", "2"]);
        assert!(mock.call_log().unwrap().is_empty());
        mock.complete(&CompletionRequest::new("first prompt")).unwrap();
        let log = mock.call_log().unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].prompt, "first prompt");
    }

    #[test]
    fn identical_requests_identical_fingerprints() {
        let mock = MockBackend::from_responses(vec!["r"; 5]);
        let req = CompletionRequest::new("same prompt");
        let independent = hex::encode(Sha256::digest(serde_json::to_vec(&req).unwrap()));
        for _ in 0..5 {
            assert_eq!(mock.complete(&req).unwrap().request_fingerprint, independent);
        }
    }

    #[test]
    fn script_file_format() {
        let text = "{\"match\": \"x\", \"response\": \"one\"}\n\n{\"response\": \"two\"}\n";
        let script = parse_script(text).unwrap();
        assert_eq!(script, vec![ScriptEntry::matching("x", "one"), ScriptEntry::new("two")]);
        assert!(parse_script("{\"nope\": 1}").unwrap_err().starts_with("line 1"));
    }
}
