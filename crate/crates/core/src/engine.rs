//! Breadth-first divergence/convergence search over the four design stages.
//!
//! Each step draws `k` generator samples from one rendered prompt, folds
//! them into a [`CandidateSet`], then runs `votes` synthesizer calls that
//! each name the candidates worth keeping and write a synthesis. Candidates
//! kept by a strict majority of valid ballots are accepted, at most
//! `keep_width` of them. A step issues exactly `k + votes` backend requests.

use std::sync::atomic::{AtomicU64, Ordering};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{Backend, BackendError, CompletionRequest};
use crate::casedb::{CaseDatabase, CaseDbError, FacetView, Grounding};
use crate::promptkit::{check_filled, Phase, PromptError, PromptRouter, RenderedPrompt};
use crate::tree::{
    canonicalize, tally, CandidateSet, CaseId, DesignBrief, NodeId, NodeKind, StageId, StageResult,
    ThoughtNode, TreeError, TreeState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend request #{index} failed: {source}")]
    Backend {
        index: usize,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    CaseDb(#[from] CaseDbError),
    #[error("every selector vote failed at stage {stage}: {last}")]
    AllVotesFailed { stage: StageId, last: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Generator samples per expansion.
    pub k: u32,
    /// Maximum accepted nodes per stage.
    pub keep_width: u32,
    /// Selector samples per convergence.
    pub votes: u32,
    /// Number of stages to run, starting from Discovery.
    pub d_max: u32,
    pub seed: u64,
    /// Overrides the backend default temperature when set.
    pub temperature: Option<f64>,
    /// Cases retrieved per stage.
    pub retrieval_top_n: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k: 3,
            keep_width: 3,
            votes: 3,
            d_max: 4,
            seed: 0,
            temperature: None,
            retrieval_top_n: 3,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let fail = |m: &str| Err(EngineError::Config(m.to_owned()));
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.keep_width == 0 || self.keep_width > self.k {
            return fail("keep_width must be in 1..=k");
        }
        if self.votes == 0 {
            return fail("votes must be at least 1");
        }
        if self.d_max == 0 || self.d_max as usize > StageId::ALL.len() {
            return fail("d_max must be in 1..=4");
        }
        if self.retrieval_top_n == 0 {
            return fail("retrieval_top_n must be at least 1");
        }
        if let Some(t) = self.temperature {
            if !(0.0..=2.0).contains(&t) {
                return fail("temperature must be in [0, 2]");
            }
        }
        Ok(())
    }

    pub fn calls_per_step(&self) -> u32 {
        self.k + self.votes
    }
}

/// Accumulated stage results of a completed search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSolution {
    pub results: Vec<StageResult>,
    pub trace_id: String,
}

/// Prompt text as persisted in a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub label: String,
    pub text: String,
    pub citations: Vec<CaseId>,
    pub ungrounded: bool,
}

impl From<&RenderedPrompt> for PromptRecord {
    fn from(p: &RenderedPrompt) -> Self {
        Self {
            label: format!("{}/{}/{}", p.stage, p.phase, p.method),
            text: p.text.clone(),
            citations: p.citations.clone(),
            ungrounded: p.ungrounded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub text: String,
    /// Candidate this sample was folded into.
    pub node_id: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub index: usize,
    pub raw: Option<String>,
    pub keep: Vec<NodeId>,
    pub summary: String,
    pub error: Option<String>,
}

/// Everything one step did, in enough detail to replay it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub stage: Option<StageId>,
    pub ungrounded: bool,
    pub prompts: Vec<PromptRecord>,
    pub samples: Vec<SampleRecord>,
    pub candidates: Vec<ThoughtNode>,
    pub tally: IndexMap<String, u32>,
    pub votes: Vec<VoteRecord>,
    pub accepted: Vec<NodeId>,
    pub synthesis: Option<ThoughtNode>,
    pub calls: u32,
}

impl StepRecord {
    /// Rebuilds the stage result from recorded candidates and synthesis.
    pub fn stage_result(&self) -> Result<StageResult, TreeError> {
        let stage = self
            .stage
            .ok_or_else(|| TreeError::Validation(format!("step {} has no stage", self.step)))?;
        let accepted = self
            .accepted
            .iter()
            .map(|id| {
                let node = self
                    .candidates
                    .iter()
                    .find(|c| &c.id == id)
                    .ok_or_else(|| TreeError::Validation(format!("accepted node {id} is not a candidate")))?;
                if !self.samples.iter().any(|s| s.node_id.as_ref() == Some(id)) {
                    return Err(TreeError::Validation(format!("accepted node {id} has no raw sample")));
                }
                Ok(node.clone())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(StageResult {
            stage,
            accepted,
            summary: self
                .synthesis
                .as_ref()
                .map(|s| s.content.clone())
                .unwrap_or_default(),
        })
    }
}

/// Raw samples of one expansion and the candidate set they fold into.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub set: CandidateSet,
    pub samples: Vec<SampleRecord>,
}

/// A parsed selector response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ballot {
    /// Zero-based candidate indices, ascending, deduplicated.
    pub keep: Vec<usize>,
    pub summary: String,
}

/// Reads the `KEEP:` line (1-based candidate numbers) and treats every other
/// line as the synthesis. Numbers outside `1..=candidates` are ignored.
pub fn parse_ballot(text: &str, candidates: usize) -> Result<Ballot, String> {
    let mut keep = None;
    let mut summary = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        let upper = trimmed.to_uppercase();
        if keep.is_none() && upper.starts_with("KEEP") {
            let rest = &trimmed[4..];
            let mut picks: Vec<usize> = rest
                .split(|c: char| !c.is_ascii_digit())
                .filter_map(|n| n.parse::<usize>().ok())
                .filter(|&n| (1..=candidates).contains(&n))
                .map(|n| n - 1)
                .collect();
            picks.sort_unstable();
            picks.dedup();
            keep = Some(picks);
        } else {
            summary.push(line);
        }
    }
    let keep = keep.ok_or_else(|| "response has no KEEP line".to_owned())?;
    Ok(Ballot {
        keep,
        summary: summary.join("\n").trim().to_owned(),
    })
}

/// Majority acceptance over ballots.
///
/// Candidates are ranked by (votes desc, frequency desc, index asc). Those
/// kept by more than half the ballots are accepted, truncated to
/// `keep_width`. If nothing reaches a majority the top-ranked candidate is
/// accepted alone.
pub fn majority_accept(frequencies: &[u32], ballots: &[Vec<usize>], keep_width: usize) -> Vec<usize> {
    let mut counts = vec![0usize; frequencies.len()];
    for ballot in ballots {
        for &i in ballot {
            if i < counts.len() {
                counts[i] += 1;
            }
        }
    }
    let mut order: Vec<usize> = (0..frequencies.len()).collect();
    order.sort_by(|&a, &b| {
        counts[b]
            .cmp(&counts[a])
            .then(frequencies[b].cmp(&frequencies[a]))
            .then(a.cmp(&b))
    });
    let mut accepted: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| counts[i] * 2 > ballots.len())
        .take(keep_width)
        .collect();
    if accepted.is_empty() {
        accepted.extend(order.first());
    }
    accepted
}

/// Output of one convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub result: StageResult,
    pub synthesis: ThoughtNode,
    pub votes: Vec<VoteRecord>,
    pub prompt: RenderedPrompt,
}

/// Result of a completed search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub solution: DesignSolution,
    pub state: TreeState,
    pub steps: Vec<StepRecord>,
}

/// A search that stopped early, with the steps it completed.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchFailure {
    pub error: EngineError,
    pub completed: Vec<StepRecord>,
}

/// Stable identifier for a run's inputs.
pub fn run_id(brief: &DesignBrief, config: &SearchConfig, mode: &str) -> String {
    let mut h = Sha256::new();
    h.update(mode.as_bytes());
    h.update(serde_json::to_vec(brief).expect("brief serializes"));
    h.update(serde_json::to_vec(config).expect("config serializes"));
    hex::encode(&h.finalize()[..8])
}

pub struct Engine<'a> {
    backend: &'a dyn Backend,
    router: &'a PromptRouter,
    db: &'a CaseDatabase,
    config: SearchConfig,
    issued: AtomicU64,
}

impl<'a> Engine<'a> {
    pub fn new(
        backend: &'a dyn Backend,
        router: &'a PromptRouter,
        db: &'a CaseDatabase,
        config: SearchConfig,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        Ok(Self {
            backend,
            router,
            db,
            config,
            issued: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    fn request(&self, prompt: &str) -> (usize, CompletionRequest) {
        let index = self.issued.fetch_add(1, Ordering::SeqCst);
        let mut req = CompletionRequest::new(prompt).with_seed_hint(self.config.seed.wrapping_add(index));
        if let Some(t) = self.config.temperature {
            req = req.with_temperature(t);
        }
        (index as usize + 1, req)
    }

    /// Draws `k` samples for one rendered prompt and tallies them.
    /// `parents` are the previous layer's accepted nodes; sample `j` hangs
    /// under `parents[j % len]`.
    pub fn generate_candidates(
        &self,
        prompt: &RenderedPrompt,
        parents: &[NodeId],
    ) -> Result<Expansion, EngineError> {
        check_filled(&prompt.text)?;
        let stage = prompt.stage;
        let mut texts = Vec::with_capacity(self.config.k as usize);
        for _ in 0..self.config.k {
            let (index, req) = self.request(&prompt.text);
            let completion = self
                .backend
                .complete(&req)
                .map_err(|source| EngineError::Backend { index, source })?;
            texts.push(completion.text.trim().to_owned());
        }
        let tally = tally(&texts)?;
        let mut samples: Vec<SampleRecord> = texts
            .iter()
            .enumerate()
            .map(|(index, text)| SampleRecord {
                index,
                text: text.clone(),
                node_id: None,
            })
            .collect();
        let mut candidates = Vec::with_capacity(tally.entries.len());
        for (n, entry) in tally.entries.iter().enumerate() {
            let id = NodeId(format!("{}-c{}", stage.slug(), n + 1));
            let first = entry.sample_indices[0];
            for &i in &entry.sample_indices {
                samples[i].node_id = Some(id.clone());
            }
            candidates.push(ThoughtNode {
                id,
                parent_id: (!parents.is_empty()).then(|| parents[first % parents.len()].clone()),
                stage,
                content: entry.representative.clone(),
                kind: NodeKind::Generated,
                frequency: entry.frequency,
                citations: prompt.citations.clone(),
            });
        }
        let set = CandidateSet {
            stage,
            candidates,
            tally: tally.to_map(),
        };
        set.check(texts.len())?;
        Ok(Expansion { set, samples })
    }

    /// Runs `votes` synthesizer calls over the candidate set and accepts the
    /// majority.
    pub fn select(
        &self,
        state: &TreeState,
        set: &CandidateSet,
        facets: &[FacetView],
    ) -> Result<Selection, EngineError> {
        if set.is_empty() {
            return Err(TreeError::Validation("cannot select from an empty candidate set".into()).into());
        }
        let stage = set.stage;
        let params = self.router.route(stage, Phase::Converge)?;
        let prompt = self.router.aggregate(&params, state, Some(set), facets)?;
        check_filled(&prompt.text)?;

        let mut votes = Vec::new();
        let mut ballots = Vec::new();
        let mut last_error = String::new();
        for v in 0..self.config.votes as usize {
            let (index, req) = self.request(&prompt.text);
            let outcome = self
                .backend
                .complete(&req)
                .map_err(|e| format!("request #{index}: {e}"))
                .and_then(|c| parse_ballot(&c.text, set.len()).map(|b| (c.text, b)));
            match outcome {
                Ok((raw, ballot)) => {
                    votes.push(VoteRecord {
                        index: v,
                        raw: Some(raw),
                        keep: ballot.keep.iter().map(|&i| set.candidates[i].id.clone()).collect(),
                        summary: ballot.summary.clone(),
                        error: None,
                    });
                    ballots.push(ballot);
                }
                Err(e) => {
                    last_error = e.clone();
                    votes.push(VoteRecord {
                        index: v,
                        raw: None,
                        keep: Vec::new(),
                        summary: String::new(),
                        error: Some(e),
                    });
                }
            }
        }
        if ballots.is_empty() {
            return Err(EngineError::AllVotesFailed {
                stage,
                last: last_error,
            });
        }

        let frequencies: Vec<u32> = set.candidates.iter().map(|c| c.frequency).collect();
        let keep_sets: Vec<Vec<usize>> = ballots.iter().map(|b| b.keep.clone()).collect();
        let accepted_idx = majority_accept(&frequencies, &keep_sets, self.config.keep_width as usize);
        let summary = ballots
            .iter()
            .enumerate()
            .max_by_key(|(i, b)| {
                let agree = b.keep.iter().filter(|k| accepted_idx.contains(k)).count() as i64;
                let extra = b.keep.len() as i64 - agree;
                (agree - extra, std::cmp::Reverse(*i))
            })
            .map(|(_, b)| b.summary.clone())
            .unwrap_or_default();

        let accepted: Vec<ThoughtNode> = accepted_idx.iter().map(|&i| set.candidates[i].clone()).collect();
        let synthesis = ThoughtNode {
            id: NodeId(format!("{}-syn", stage.slug())),
            parent_id: Some(accepted[0].id.clone()),
            stage,
            content: summary.clone(),
            kind: NodeKind::Synthesized,
            frequency: 1,
            citations: prompt.citations.clone(),
        };
        let result = StageResult {
            stage,
            accepted,
            summary,
        };
        result.validate()?;
        Ok(Selection {
            result,
            synthesis,
            votes,
            prompt,
        })
    }

    /// Case evidence for a stage: benchmark products at Discovery, otherwise
    /// retrieval over the brief and the previous layer.
    pub fn ground(&self, state: &TreeState, stage: StageId) -> Result<Grounding, EngineError> {
        if self.db.is_ungrounded() {
            return Ok(Grounding::ungrounded());
        }
        let top_n = self.config.retrieval_top_n as usize;
        if stage == StageId::Discovery {
            return Ok(self.db.best_products(state.brief(), top_n)?);
        }
        let brief = state.brief();
        let mut query = format!("{} {}", brief.background, brief.target_problems);
        if let Some(layer) = state.layers().last() {
            query.push(' ');
            query.push_str(&layer.summary);
            for node in &layer.accepted {
                query.push(' ');
                query.push_str(&node.content);
            }
        }
        match self.db.retrieve(&query, top_n) {
            Ok(hits) => Ok(Grounding {
                views: self.db.project_hits(&hits, stage),
                ungrounded: false,
            }),
            Err(CaseDbError::EmptyQuery) => Ok(Grounding::ungrounded()),
            Err(e) => Err(e.into()),
        }
    }

    fn step(&self, state: &TreeState, step: u32, stage: StageId) -> Result<(StepRecord, TreeState), EngineError> {
        let grounding = self.ground(state, stage)?;
        let params = self.router.route(stage, Phase::Diverge)?;
        let prompt = self.router.aggregate(&params, state, None, &grounding.views)?;
        let parents: Vec<NodeId> = state
            .layers()
            .last()
            .map(|l| l.accepted.iter().map(|n| n.id.clone()).collect())
            .unwrap_or_default();
        let expansion = self.generate_candidates(&prompt, &parents)?;
        let selection = self.select(state, &expansion.set, &grounding.views)?;
        let next = state.append_layer(selection.result.clone())?;
        let record = StepRecord {
            step,
            stage: Some(stage),
            ungrounded: grounding.ungrounded || grounding.views.is_empty(),
            prompts: vec![PromptRecord::from(&prompt), PromptRecord::from(&selection.prompt)],
            samples: expansion.samples,
            candidates: expansion.set.candidates,
            tally: expansion.set.tally,
            votes: selection.votes,
            accepted: selection.result.accepted.iter().map(|n| n.id.clone()).collect(),
            synthesis: Some(selection.synthesis),
            calls: self.config.calls_per_step(),
        };
        Ok((record, next))
    }

    /// Level-order search over stages `1..=d_max`. Step `i + 1` starts only
    /// after step `i`'s result is appended to the tree state.
    pub fn dot_bfs(&self, brief: &DesignBrief) -> Result<SearchOutcome, SearchFailure> {
        let mut completed = Vec::new();
        let fail = |error: EngineError, completed: Vec<StepRecord>| SearchFailure { error, completed };
        let mut state = match TreeState::new(brief.clone()) {
            Ok(s) => s,
            Err(e) => return Err(fail(e.into(), completed)),
        };
        let mut results = Vec::new();
        for (i, stage) in StageId::ALL.iter().take(self.config.d_max as usize).enumerate() {
            match self.step(&state, i as u32 + 1, *stage) {
                Ok((record, next)) => {
                    results.push(next.layers().last().expect("appended").clone());
                    completed.push(record);
                    state = next;
                }
                Err(e) => return Err(fail(e, completed)),
            }
        }
        Ok(SearchOutcome {
            solution: DesignSolution {
                results,
                trace_id: run_id(brief, &self.config, "dot"),
            },
            state,
            steps: completed,
        })
    }
}

/// Canonical keys of a step's candidates, for subset checks.
pub fn candidate_keys(set: &CandidateSet) -> Vec<String> {
    set.candidates.iter().map(|c| canonicalize(&c.content)).collect()
}
