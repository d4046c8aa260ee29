//! Function-behaviour-structure case store.
//!
//! Cases are read from a line-oriented JSON record file, validated, and
//! indexed with BM25. Prompts never see whole records: [`project`] cuts each
//! case down to the facets a stage is allowed to use.

pub mod bm25;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bm25::{rank, tokenize, Bm25Index, RankedHit, Scorer};

use crate::tree::{CaseId, DesignBrief, StageId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CaseDbError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid records: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidRecords(Vec<RecordIssue>),
    #[error("duplicate case ids: {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("query has no searchable terms")]
    EmptyQuery,
    #[error("top_n must be at least 1")]
    InvalidTopN,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordIssue {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RecordIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Prototype,
    Product,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Prototype => "prototype",
            Category::Product => "product",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FunctionFacet {
    pub tags: Vec<String>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BehaviourFacet {
    pub perception_modes: Vec<String>,
    pub action_modes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StructureFacet {
    pub technical_elements: Vec<String>,
    pub on_body_location: String,
    pub wearing_mode: String,
}

/// One encoded wearable: what it does, how it interacts with the body, and
/// how it is built and worn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignCase {
    pub id: CaseId,
    pub name: String,
    pub category: Category,
    pub function: FunctionFacet,
    pub behaviour: BehaviourFacet,
    pub structure: StructureFacet,
    pub source: String,
}

/// Flat on-disk shape of a [`DesignCase`]. Field order is the export order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CaseRecord {
    id: String,
    name: String,
    category: Category,
    function_tags: Vec<String>,
    function_desc: String,
    perception_modes: Vec<String>,
    action_modes: Vec<String>,
    technical_elements: Vec<String>,
    on_body_location: String,
    wearing_mode: String,
    source: String,
}

impl From<CaseRecord> for DesignCase {
    fn from(r: CaseRecord) -> Self {
        DesignCase {
            id: CaseId(r.id),
            name: r.name,
            category: r.category,
            function: FunctionFacet {
                tags: r.function_tags,
                description: r.function_desc,
            },
            behaviour: BehaviourFacet {
                perception_modes: r.perception_modes,
                action_modes: r.action_modes,
            },
            structure: StructureFacet {
                technical_elements: r.technical_elements,
                on_body_location: r.on_body_location,
                wearing_mode: r.wearing_mode,
            },
            source: r.source,
        }
    }
}

impl From<&DesignCase> for CaseRecord {
    fn from(c: &DesignCase) -> Self {
        CaseRecord {
            id: c.id.0.clone(),
            name: c.name.clone(),
            category: c.category,
            function_tags: c.function.tags.clone(),
            function_desc: c.function.description.clone(),
            perception_modes: c.behaviour.perception_modes.clone(),
            action_modes: c.behaviour.action_modes.clone(),
            technical_elements: c.structure.technical_elements.clone(),
            on_body_location: c.structure.on_body_location.clone(),
            wearing_mode: c.structure.wearing_mode.clone(),
            source: c.source.clone(),
        }
    }
}

impl DesignCase {
    /// Serializes to one record line (no trailing newline).
    pub fn to_record_line(&self) -> String {
        serde_json::to_string(&CaseRecord::from(self)).expect("record serializes")
    }

    pub fn from_record_line(line: &str) -> Result<DesignCase, String> {
        let record: CaseRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let case = DesignCase::from(record);
        if case.id.0.trim().is_empty() {
            return Err("id is empty".into());
        }
        if case.structure.on_body_location.trim().is_empty() {
            return Err("on_body_location is empty".into());
        }
        Ok(case)
    }

    fn index_text(&self) -> String {
        let mut parts = vec![self.name.clone()];
        parts.extend(self.function.tags.iter().cloned());
        parts.push(self.function.description.clone());
        parts.extend(self.behaviour.perception_modes.iter().cloned());
        parts.extend(self.behaviour.action_modes.iter().cloned());
        parts.extend(self.structure.technical_elements.iter().cloned());
        parts.push(self.structure.on_body_location.clone());
        parts.push(self.structure.wearing_mode.clone());
        parts.join(" ")
    }
}

/// Ingested, validated, indexed cases. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct CaseDatabase {
    cases: Vec<DesignCase>,
    all: Bm25Index,
    products: Bm25Index,
}

impl CaseDatabase {
    pub fn from_cases(cases: Vec<DesignCase>) -> Result<Self, CaseDbError> {
        let mut seen = BTreeSet::new();
        let mut dupes = BTreeSet::new();
        for c in &cases {
            if !seen.insert(c.id.0.clone()) {
                dupes.insert(c.id.0.clone());
            }
        }
        if !dupes.is_empty() {
            return Err(CaseDbError::DuplicateIds(dupes.into_iter().collect()));
        }
        let docs = |filter: fn(&DesignCase) -> bool| {
            cases
                .iter()
                .filter(|c| filter(c))
                .map(|c| (c.id.clone(), tokenize(&c.index_text())))
                .collect::<Vec<_>>()
        };
        let all = Bm25Index::build(docs(|_| true));
        let products = Bm25Index::build(docs(|c| c.category == Category::Product));
        Ok(Self {
            cases,
            all,
            products,
        })
    }

    /// Parses and validates a record file's contents. Blank lines are skipped.
    pub fn ingest_str(text: &str) -> Result<Self, CaseDbError> {
        let mut cases = Vec::new();
        let mut issues = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match DesignCase::from_record_line(line) {
                Ok(c) => cases.push(c),
                Err(message) => issues.push(RecordIssue {
                    line: i + 1,
                    message,
                }),
            }
        }
        if !issues.is_empty() {
            return Err(CaseDbError::InvalidRecords(issues));
        }
        Self::from_cases(cases)
    }

    pub fn ingest_path(path: &Path) -> Result<Self, CaseDbError> {
        let text = std::fs::read_to_string(path).map_err(|e| CaseDbError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::ingest_str(&text)
    }

    /// One record line per case, newline-terminated, in ingestion order.
    pub fn export(&self) -> String {
        self.cases
            .iter()
            .map(|c| c.to_record_line() + "\n")
            .collect()
    }

    pub fn cases(&self) -> &[DesignCase] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// True when there is nothing to ground prompts with.
    pub fn is_ungrounded(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, id: &CaseId) -> Option<&DesignCase> {
        self.cases.iter().find(|c| &c.id == id)
    }

    pub fn counts(&self) -> BTreeMap<Category, usize> {
        let mut counts = BTreeMap::from([(Category::Prototype, 0), (Category::Product, 0)]);
        for c in &self.cases {
            *counts.entry(c.category).or_default() += 1;
        }
        counts
    }

    /// BM25 (k1 = 1.2, b = 0.75) over every case.
    pub fn retrieve(&self, query: &str, top_n: usize) -> Result<Vec<RankedHit>, CaseDbError> {
        search(&self.all, query, top_n)
    }

    /// Benchmarks for the Discovery stage: the top products for the brief's
    /// background and target problems, projected to Discovery facets.
    pub fn best_products(&self, brief: &DesignBrief, top_n: usize) -> Result<Grounding, CaseDbError> {
        if top_n == 0 {
            return Err(CaseDbError::InvalidTopN);
        }
        if self.products.is_empty() {
            return Ok(Grounding::ungrounded());
        }
        let query = format!("{} {}", brief.background, brief.target_problems);
        let hits = search(&self.products, &query, top_n)?;
        Ok(Grounding {
            views: self.project_hits(&hits, StageId::Discovery),
            ungrounded: false,
        })
    }

    pub fn project_hits(&self, hits: &[RankedHit], stage: StageId) -> Vec<FacetView> {
        hits.iter()
            .filter_map(|h| self.get(&h.case_id))
            .map(|c| project(c, stage))
            .collect()
    }
}

fn search(index: &Bm25Index, query: &str, top_n: usize) -> Result<Vec<RankedHit>, CaseDbError> {
    if top_n == 0 {
        return Err(CaseDbError::InvalidTopN);
    }
    let terms = tokenize(query);
    if terms.is_empty() {
        return Err(CaseDbError::EmptyQuery);
    }
    Ok(rank(index.score_all(&terms), top_n))
}

/// Facet views selected for one prompt. `ungrounded` is set when the store
/// had nothing to offer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Grounding {
    pub views: Vec<FacetView>,
    pub ungrounded: bool,
}

impl Grounding {
    pub fn ungrounded() -> Self {
        Self {
            views: Vec::new(),
            ungrounded: true,
        }
    }
}

/// Individual case fields that can be shown to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacetField {
    Name,
    Category,
    FunctionTags,
    FunctionDesc,
    PerceptionModes,
    ActionModes,
    TechnicalElements,
    OnBodyLocation,
    WearingMode,
    Source,
}

impl FacetField {
    pub const ALL: [FacetField; 10] = [
        FacetField::Name,
        FacetField::Category,
        FacetField::FunctionTags,
        FacetField::FunctionDesc,
        FacetField::PerceptionModes,
        FacetField::ActionModes,
        FacetField::TechnicalElements,
        FacetField::OnBodyLocation,
        FacetField::WearingMode,
        FacetField::Source,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FacetField::Name => "name",
            FacetField::Category => "category",
            FacetField::FunctionTags => "function_tags",
            FacetField::FunctionDesc => "function_desc",
            FacetField::PerceptionModes => "perception_modes",
            FacetField::ActionModes => "action_modes",
            FacetField::TechnicalElements => "technical_elements",
            FacetField::OnBodyLocation => "on_body_location",
            FacetField::WearingMode => "wearing_mode",
            FacetField::Source => "source",
        }
    }

    pub fn is_behaviour(self) -> bool {
        matches!(self, FacetField::PerceptionModes | FacetField::ActionModes)
    }

    pub fn is_structure(self) -> bool {
        matches!(
            self,
            FacetField::TechnicalElements | FacetField::OnBodyLocation | FacetField::WearingMode
        )
    }

    fn value(self, case: &DesignCase) -> String {
        match self {
            FacetField::Name => case.name.clone(),
            FacetField::Category => case.category.to_string(),
            FacetField::FunctionTags => case.function.tags.join(", "),
            FacetField::FunctionDesc => case.function.description.clone(),
            FacetField::PerceptionModes => case.behaviour.perception_modes.join(", "),
            FacetField::ActionModes => case.behaviour.action_modes.join(", "),
            FacetField::TechnicalElements => case.structure.technical_elements.join(", "),
            FacetField::OnBodyLocation => case.structure.on_body_location.clone(),
            FacetField::WearingMode => case.structure.wearing_mode.clone(),
            FacetField::Source => case.source.clone(),
        }
    }
}

/// Which fields each stage may see.
pub fn permitted_fields(stage: StageId) -> &'static [FacetField] {
    use FacetField::*;
    match stage {
        StageId::Discovery => &[Name, Category, FunctionDesc, Source],
        StageId::RequirementAnalysis => &[FunctionTags, Source],
        StageId::ProduceIdeateDefine => &[FunctionTags, FunctionDesc, PerceptionModes, ActionModes],
        StageId::TechnologyAnalysis => &[TechnicalElements, OnBodyLocation, WearingMode],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetValue {
    pub field: FacetField,
    pub value: String,
}

/// A case restricted to one stage's permitted fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetView {
    pub case_id: CaseId,
    pub stage: StageId,
    pub fields: Vec<FacetValue>,
}

impl FacetView {
    pub fn field_set(&self) -> BTreeSet<FacetField> {
        self.fields.iter().map(|f| f.field).collect()
    }

    /// `[case <id>]` header followed by one `label: value` line per field.
    pub fn render(&self) -> String {
        let mut out = format!("[case {}]", self.case_id);
        for f in &self.fields {
            out.push_str(&format!("\n  {}: {}", f.field.label(), f.value));
        }
        out
    }
}

pub fn project(case: &DesignCase, stage: StageId) -> FacetView {
    FacetView {
        case_id: case.id.clone(),
        stage,
        fields: permitted_fields(stage)
            .iter()
            .map(|&field| FacetValue {
                field,
                value: field.value(case),
            })
            .collect(),
    }
}
