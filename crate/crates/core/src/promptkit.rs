//! Per-stage prompt templates, the parameter router, and the aggregator that
//! renders a template against the current tree state.
//!
//! A template file starts with a header line
//! `stage=<stage> phase=<diverge|converge> [method=<name>]` followed by the
//! body. Bodies reference data through `{name}` placeholders drawn from a
//! fixed set.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::casedb::FacetView;
use crate::tree::{CandidateSet, CaseId, DesignBrief, StageId, TreeState};

/// Inserted in place of case evidence when retrieval produced nothing.
pub const UNGROUNDED_NOTICE: &str = "[[NO CASE EVIDENCE AVAILABLE]]";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("no template registered for ({stage}, {phase})")]
    Unregistered { stage: StageId, phase: Phase },
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("template {template}: unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template {template}: {message}")]
    Invalid { template: String, message: String },
    #[error("missing data for placeholder {{{0}}}")]
    MissingData(String),
    #[error("unfilled placeholder {{{0}}} in rendered prompt")]
    Unfilled(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Diverge,
    Converge,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Diverge, Phase::Converge];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Diverge => "diverge",
            Phase::Converge => "converge",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Placeholder {
    Brief,
    PriorLayers,
    CandidatesWithFrequencies,
    CaseFacets,
    Examples,
}

impl Placeholder {
    pub const ALL: [Placeholder; 5] = [
        Placeholder::Brief,
        Placeholder::PriorLayers,
        Placeholder::CandidatesWithFrequencies,
        Placeholder::CaseFacets,
        Placeholder::Examples,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Placeholder::Brief => "brief",
            Placeholder::PriorLayers => "prior_layers",
            Placeholder::CandidatesWithFrequencies => "candidates_with_frequencies",
            Placeholder::CaseFacets => "case_facets",
            Placeholder::Examples => "examples",
        }
    }

    fn from_name(name: &str) -> Option<Placeholder> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// A piece of template body: literal text or a placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(Placeholder),
}

/// Finds `{identifier}` tokens. Anything else in braces is literal text.
fn scan_tokens(body: &str) -> Vec<(usize, usize, &str)> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let start = i;
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_lowercase() || bytes[j] == b'_') {
                j += 1;
            }
            if j > start + 1 && j < bytes.len() && bytes[j] == b'}' {
                out.push((start, j + 1, &body[start + 1..j]));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub stage: StageId,
    pub phase: Phase,
    pub method: String,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn new(
        stage: StageId,
        phase: Phase,
        method: impl Into<String>,
        body: &str,
    ) -> Result<Self, PromptError> {
        let method = method.into();
        let name = format!("{stage}/{phase}");
        let mut segments = Vec::new();
        let mut last = 0;
        for (start, end, token) in scan_tokens(body) {
            let slot = Placeholder::from_name(token).ok_or_else(|| PromptError::UnknownPlaceholder {
                template: name.clone(),
                name: token.to_owned(),
            })?;
            if start > last {
                segments.push(Segment::Text(body[last..start].to_owned()));
            }
            segments.push(Segment::Slot(slot));
            last = end;
        }
        if last < body.len() {
            segments.push(Segment::Text(body[last..].to_owned()));
        }
        let template = Self {
            stage,
            phase,
            method,
            segments,
        };
        let has_candidates = template.uses(Placeholder::CandidatesWithFrequencies);
        match phase {
            Phase::Diverge if has_candidates => Err(PromptError::Invalid {
                template: name,
                message: "diverge templates must not use {candidates_with_frequencies}".into(),
            }),
            Phase::Converge if !has_candidates => Err(PromptError::Invalid {
                template: name,
                message: "converge templates require {candidates_with_frequencies}".into(),
            }),
            _ => Ok(template),
        }
    }

    /// Parses a template file: header line, then body.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let (header, body) = text.split_once('\n').unwrap_or((text, ""));
        let mut stage = None;
        let mut phase = None;
        let mut method = None;
        for pair in header.split_whitespace() {
            let invalid = || PromptError::Invalid {
                template: header.to_owned(),
                message: format!("bad header field {pair:?}"),
            };
            let (key, value) = pair.split_once('=').ok_or_else(invalid)?;
            match key {
                "stage" => stage = Some(StageId::from_slug(value).ok_or_else(invalid)?),
                "phase" => {
                    phase = Some(match value {
                        "diverge" => Phase::Diverge,
                        "converge" => Phase::Converge,
                        _ => return Err(invalid()),
                    })
                }
                "method" => method = Some(value.to_owned()),
                _ => return Err(invalid()),
            }
        }
        let (Some(stage), Some(phase)) = (stage, phase) else {
            return Err(PromptError::Invalid {
                template: header.to_owned(),
                message: "header needs stage= and phase=".into(),
            });
        };
        let method = method.unwrap_or_else(|| default_method(stage, phase).to_owned());
        Self::new(stage, phase, method, body)
    }

    pub fn uses(&self, slot: Placeholder) -> bool {
        self.segments.contains(&Segment::Slot(slot))
    }
}

/// Method name used when a template header does not name one.
pub fn default_method(stage: StageId, phase: Phase) -> &'static str {
    match (stage, phase) {
        (StageId::Discovery, Phase::Diverge) => "context-exploration",
        (StageId::Discovery, Phase::Converge) => "benchmark-analysis",
        (StageId::RequirementAnalysis, Phase::Diverge) => "need-identification",
        (StageId::RequirementAnalysis, Phase::Converge) => "need-prioritization",
        (StageId::ProduceIdeateDefine, Phase::Diverge) => "function-ideation",
        (StageId::ProduceIdeateDefine, Phase::Converge) => "concept-definition",
        (StageId::TechnologyAnalysis, Phase::Diverge) => "technology-exploration",
        (StageId::TechnologyAnalysis, Phase::Converge) => "technical-solution",
    }
}

const BUILTIN_TEMPLATES: [&str; 8] = [
    include_str!("../assets/templates/discovery_diverge.txt"),
    include_str!("../assets/templates/discovery_converge.txt"),
    include_str!("../assets/templates/requirement_analysis_diverge.txt"),
    include_str!("../assets/templates/requirement_analysis_converge.txt"),
    include_str!("../assets/templates/produce_ideate_define_diverge.txt"),
    include_str!("../assets/templates/produce_ideate_define_converge.txt"),
    include_str!("../assets/templates/technology_analysis_diverge.txt"),
    include_str!("../assets/templates/technology_analysis_converge.txt"),
];

/// Templates keyed by (stage, phase). Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<(StageId, Phase), PromptTemplate>,
}

impl TemplateRegistry {
    pub fn builtin() -> Self {
        Self::from_templates(
            BUILTIN_TEMPLATES
                .iter()
                .map(|t| PromptTemplate::parse(t).expect("builtin template parses")),
        )
        .expect("builtin templates are consistent")
    }

    pub fn from_templates<I>(templates: I) -> Result<Self, PromptError>
    where
        I: IntoIterator<Item = PromptTemplate>,
    {
        let mut registry = Self::default();
        for t in templates {
            if registry.templates.values().any(|o| o.method == t.method) {
                return Err(PromptError::Invalid {
                    template: format!("{}/{}", t.stage, t.phase),
                    message: format!("method {:?} registered twice", t.method),
                });
            }
            registry.templates.insert((t.stage, t.phase), t);
        }
        Ok(registry)
    }

    /// Loads every `*.txt` file in `dir`. Pairs not present on disk fall back
    /// to the built-in templates.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let io = |e: std::io::Error| PromptError::Io(format!("{}: {e}", dir.display()));
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        let mut loaded = BTreeMap::new();
        for path in paths {
            let text = std::fs::read_to_string(&path).map_err(io)?;
            let t = PromptTemplate::parse(&text)?;
            loaded.insert((t.stage, t.phase), t);
        }
        let mut merged = Self::builtin().templates;
        merged.extend(loaded);
        Self::from_templates(merged.into_values())
    }

    pub fn get(&self, stage: StageId, phase: Phase) -> Option<&PromptTemplate> {
        self.templates.get(&(stage, phase))
    }

    pub fn by_method(&self, method: &str) -> Option<&PromptTemplate> {
        self.templates.values().find(|t| t.method == method)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }
}

/// Method, few-shot examples and sample count routed to one prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptParams {
    pub method: String,
    pub examples: Vec<String>,
    /// Number of samples this prompt is drawn for.
    pub frequency: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub citations: Vec<CaseId>,
    pub stage: StageId,
    pub phase: Phase,
    pub method: String,
    pub ungrounded: bool,
}

/// Maps (stage, phase) to prompt parameters and renders them.
#[derive(Debug, Clone)]
pub struct PromptRouter {
    registry: TemplateRegistry,
    diverge_frequency: u32,
    converge_frequency: u32,
    examples: BTreeMap<(StageId, Phase), Vec<String>>,
}

impl PromptRouter {
    /// `diverge_frequency` is the generator sample count, `converge_frequency`
    /// the number of selector votes.
    pub fn new(registry: TemplateRegistry, diverge_frequency: u32, converge_frequency: u32) -> Self {
        Self {
            registry,
            diverge_frequency: diverge_frequency.max(1),
            converge_frequency: converge_frequency.max(1),
            examples: BTreeMap::new(),
        }
    }

    pub fn with_examples(mut self, stage: StageId, phase: Phase, examples: Vec<String>) -> Self {
        self.examples.insert((stage, phase), examples);
        self
    }

    pub fn registry(&self) -> &TemplateRegistry {
        &self.registry
    }

    pub fn route(&self, stage: StageId, phase: Phase) -> Result<PromptParams, PromptError> {
        let template = self
            .registry
            .get(stage, phase)
            .ok_or(PromptError::Unregistered { stage, phase })?;
        Ok(PromptParams {
            method: template.method.clone(),
            examples: self.examples.get(&(stage, phase)).cloned().unwrap_or_default(),
            frequency: match phase {
                Phase::Diverge => self.diverge_frequency,
                Phase::Converge => self.converge_frequency,
            },
        })
    }

    /// Fills a routed template. Pure: identical inputs give identical text.
    pub fn aggregate(
        &self,
        params: &PromptParams,
        state: &TreeState,
        candidates: Option<&CandidateSet>,
        facets: &[FacetView],
    ) -> Result<RenderedPrompt, PromptError> {
        let template = self
            .registry
            .by_method(&params.method)
            .ok_or_else(|| PromptError::UnknownMethod(params.method.clone()))?;
        match (template.phase, candidates) {
            (Phase::Converge, None) => {
                return Err(PromptError::MissingData(
                    Placeholder::CandidatesWithFrequencies.name().into(),
                ))
            }
            (Phase::Diverge, Some(_)) => {
                return Err(PromptError::Invalid {
                    template: params.method.clone(),
                    message: "diverge prompts take no candidates".into(),
                })
            }
            _ => {}
        }
        if let Some(view) = facets.iter().find(|v| v.stage != template.stage) {
            return Err(PromptError::Invalid {
                template: params.method.clone(),
                message: format!(
                    "facet view of case {} is projected for {}, not {}",
                    view.case_id, view.stage, template.stage
                ),
            });
        }

        let mut text = String::new();
        for segment in &template.segments {
            match segment {
                Segment::Text(t) => text.push_str(t),
                Segment::Slot(slot) => text.push_str(&match slot {
                    Placeholder::Brief => brief_block(state.brief()),
                    Placeholder::PriorLayers => render_layers(state),
                    Placeholder::CandidatesWithFrequencies => {
                        render_candidates(candidates.expect("checked above"))
                    }
                    Placeholder::CaseFacets => render_facets(facets),
                    Placeholder::Examples => params.examples.join("\n\n"),
                }),
            }
        }
        let mut citations: Vec<CaseId> = Vec::new();
        for v in facets {
            if !citations.contains(&v.case_id) {
                citations.push(v.case_id.clone());
            }
        }
        Ok(RenderedPrompt {
            text,
            citations,
            stage: template.stage,
            phase: template.phase,
            method: template.method.clone(),
            ungrounded: facets.is_empty(),
        })
    }
}

/// Rejects text that still contains a declared placeholder token.
pub fn check_filled(text: &str) -> Result<(), PromptError> {
    match scan_tokens(text)
        .into_iter()
        .find(|(_, _, name)| Placeholder::from_name(name).is_some())
    {
        Some((_, _, name)) => Err(PromptError::Unfilled(name.to_owned())),
        None => Ok(()),
    }
}

/// The brief as rendered into every prompt.
pub fn brief_block(b: &DesignBrief) -> String {
    format!(
        "Field: {}\nBackground: {}\nTarget audience: {}\nTarget problems: {}",
        b.field, b.background, b.target_audience, b.target_problems
    )
}

fn render_layers(state: &TreeState) -> String {
    if state.layers().is_empty() {
        return "(no earlier stages)".into();
    }
    let mut out = Vec::new();
    for layer in state.layers() {
        let mut block = format!("[{}]\nSynthesis: {}\nAccepted ideas:", layer.stage.title(), layer.summary);
        for node in &layer.accepted {
            block.push_str(&format!("\n- {}", node.content));
        }
        out.push(block);
    }
    out.join("\n\n")
}

fn render_candidates(set: &CandidateSet) -> String {
    set.candidates
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {} [frequency: {}]", i + 1, c.content, c.frequency))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_facets(facets: &[FacetView]) -> String {
    if facets.is_empty() {
        return UNGROUNDED_NOTICE.to_owned();
    }
    facets.iter().map(FacetView::render).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use indexmap::IndexMap;

    use super::*;
    use crate::casedb::{FacetField, FacetValue};
    use crate::tree::{NodeId, NodeKind, ThoughtNode};

    fn state() -> TreeState {
        TreeState::new(DesignBrief::new(
            "Healthcare",
            "Nursing homes need better monitoring.",
            "Staff",
            "Early warning",
        ))
        .unwrap()
    }

    fn router() -> PromptRouter {
        PromptRouter::new(TemplateRegistry::builtin(), 3, 5)
    }

    fn view(id: &str, stage: StageId) -> FacetView {
        FacetView {
            case_id: CaseId(id.into()),
            stage,
            fields: vec![FacetValue {
                field: FacetField::Name,
                value: format!("device {id}"),
            }],
        }
    }

    fn candidates() -> CandidateSet {
        let node = |id: &str, content: &str, frequency| ThoughtNode {
            id: NodeId(id.into()),
            parent_id: None,
            stage: StageId::Discovery,
            content: content.into(),
            kind: NodeKind::Generated,
            frequency,
            citations: vec![],
        };
        CandidateSet {
            stage: StageId::Discovery,
            candidates: vec![node("c1", "x", 2), node("c2", "y", 1)],
            tally: IndexMap::from([("x".into(), 2), ("y".into(), 1)]),
        }
    }

    #[test]
    fn route_discovery_diverge() {
        let p = router().route(StageId::Discovery, Phase::Diverge).unwrap();
        assert_eq!(p.method, "context-exploration");
        assert_eq!(p.frequency, 3);
        assert!(p.examples.is_empty());
    }

    #[test]
    fn route_technology_converge_needs_candidates() {
        let r = router();
        let p = r.route(StageId::TechnologyAnalysis, Phase::Converge).unwrap();
        assert_eq!(p.frequency, 5);
        assert!(r.registry().by_method(&p.method).unwrap().uses(Placeholder::CandidatesWithFrequencies));
        assert!(matches!(
            r.aggregate(&p, &state(), None, &[]),
            Err(PromptError::MissingData(_))
        ));
    }

    #[test]
    fn all_pairs_route_to_distinct_methods() {
        let r = router();
        let mut methods = BTreeSet::new();
        for stage in StageId::ALL {
            for phase in Phase::ALL {
                methods.insert(r.route(stage, phase).unwrap().method);
            }
        }
        assert_eq!(methods.len(), 8);
    }

    #[test]
    fn unregistered_pair() {
        let only = PromptTemplate::new(StageId::Discovery, Phase::Diverge, "m", "{brief}").unwrap();
        let r = PromptRouter::new(TemplateRegistry::from_templates([only]).unwrap(), 1, 1);
        assert!(matches!(
            r.route(StageId::Discovery, Phase::Converge),
            Err(PromptError::Unregistered { .. })
        ));
    }

    #[test]
    fn diverge_renders_facets_and_background() {
        let r = router();
        let p = r.route(StageId::Discovery, Phase::Diverge).unwrap();
        let facets = [view("w1", StageId::Discovery), view("w2", StageId::Discovery)];
        let out = r.aggregate(&p, &state(), None, &facets).unwrap();
        assert!(out.text.contains("Nursing homes need better monitoring."));
        assert!(out.text.contains(&facets[0].render()));
        assert!(out.text.contains(&facets[1].render()));
        assert_eq!(out.citations, vec![CaseId("w1".into()), CaseId("w2".into())]);
        assert!(!out.ungrounded);
        check_filled(&out.text).unwrap();
    }

    #[test]
    fn converge_annotates_frequencies() {
        let r = router();
        let p = r.route(StageId::Discovery, Phase::Converge).unwrap();
        let out = r.aggregate(&p, &state(), Some(&candidates()), &[]).unwrap();
        assert!(out.text.contains("1. x [frequency: 2]"));
        assert!(out.text.contains("2. y [frequency: 1]"));
    }

    #[test]
    fn empty_facets_give_notice() {
        let r = router();
        let p = r.route(StageId::Discovery, Phase::Diverge).unwrap();
        let out = r.aggregate(&p, &state(), None, &[]).unwrap();
        assert!(out.text.contains(UNGROUNDED_NOTICE));
        assert!(out.ungrounded);
    }

    #[test]
    fn diverge_rejects_candidates() {
        let r = router();
        let p = r.route(StageId::Discovery, Phase::Diverge).unwrap();
        assert!(r.aggregate(&p, &state(), Some(&candidates()), &[]).is_err());
    }

    #[test]
    fn foreign_stage_facets_rejected() {
        let r = router();
        let p = r.route(StageId::Discovery, Phase::Diverge).unwrap();
        let facets = [view("w1", StageId::TechnologyAnalysis)];
        assert!(r.aggregate(&p, &state(), None, &facets).is_err());
    }

    #[test]
    fn aggregate_is_pure() {
        let r = router();
        let p = r.route(StageId::Discovery, Phase::Converge).unwrap();
        let a = r.aggregate(&p, &state(), Some(&candidates()), &[]).unwrap();
        let b = r.aggregate(&p, &state(), Some(&candidates()), &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn template_rules() {
        assert!(matches!(
            PromptTemplate::new(StageId::Discovery, Phase::Diverge, "m", "{bogus}"),
            Err(PromptError::UnknownPlaceholder { .. })
        ));
        assert!(PromptTemplate::new(StageId::Discovery, Phase::Diverge, "m", "{candidates_with_frequencies}").is_err());
        assert!(PromptTemplate::new(StageId::Discovery, Phase::Converge, "m", "{brief}").is_err());
        // braces that are not identifiers are literal
        let t = PromptTemplate::new(StageId::Discovery, Phase::Diverge, "m", "json: { \"a\": 1 } {brief}").unwrap();
        assert!(t.uses(Placeholder::Brief));
    }

    #[test]
    fn header_parsing() {
        let t = PromptTemplate::parse("stage=requirement_analysis phase=converge\nKEEP {candidates_with_frequencies}").unwrap();
        assert_eq!(t.stage, StageId::RequirementAnalysis);
        assert_eq!(t.method, "need-prioritization");
        assert!(PromptTemplate::parse("stage=nowhere phase=diverge\n{brief}").is_err());
        assert!(PromptTemplate::parse("phase=diverge\n{brief}").is_err());
    }

    #[test]
    fn load_dir_overrides_builtin() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("d.txt"),
            "stage=discovery phase=diverge method=custom-context\nCUSTOM {brief}",
        )
        .unwrap();
        let reg = TemplateRegistry::load_dir(dir.path()).unwrap();
        assert_eq!(reg.get(StageId::Discovery, Phase::Diverge).unwrap().method, "custom-context");
        assert_eq!(reg.iter().count(), 8);
    }

    #[test]
    fn unfilled_detection() {
        assert!(check_filled("all good {not a slot}").is_ok());
        assert_eq!(check_filled("oops {brief}"), Err(PromptError::Unfilled("brief".into())));
    }
}
