use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::RunMode;
use crate::engine::DesignSolution;
use crate::tree::{CaseId, DesignBrief, StageId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    /// `None` for the single body of an io or cot response.
    pub stage: Option<StageId>,
    pub title: String,
    pub summary: String,
    pub ideas: Vec<String>,
    pub citations: Vec<CaseId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignDocument {
    pub brief: DesignBrief,
    pub mode: RunMode,
    pub sections: Vec<Section>,
}

impl DesignDocument {
    /// One section per stage result, in stage order.
    pub fn from_solution(brief: &DesignBrief, solution: &DesignSolution) -> Self {
        let sections = solution
            .results
            .iter()
            .map(|r| {
                let mut citations: Vec<CaseId> = Vec::new();
                for c in r.accepted.iter().flat_map(|n| &n.citations) {
                    if !citations.contains(c) {
                        citations.push(c.clone());
                    }
                }
                Section {
                    stage: Some(r.stage),
                    title: r.stage.title().to_owned(),
                    summary: r.summary.clone(),
                    ideas: r.accepted.iter().map(|n| n.content.clone()).collect(),
                    citations,
                }
            })
            .collect();
        Self {
            brief: brief.clone(),
            mode: RunMode::Dot,
            sections,
        }
    }

    /// A single-body document for the baseline modes.
    pub fn single(brief: &DesignBrief, mode: RunMode, body: &str) -> Self {
        let title = match mode {
            RunMode::Cot => "Staged design response",
            _ => "Design response",
        };
        Self {
            brief: brief.clone(),
            mode,
            sections: vec![Section {
                stage: None,
                title: title.to_owned(),
                summary: body.to_owned(),
                ideas: Vec::new(),
                citations: Vec::new(),
            }],
        }
    }

    pub fn idea_count(&self) -> usize {
        self.sections.iter().map(|s| s.ideas.len()).sum()
    }

    /// Distinct cited case ids, first-seen order.
    pub fn citations(&self) -> Vec<CaseId> {
        let mut out: Vec<CaseId> = Vec::new();
        for c in self.sections.iter().flat_map(|s| &s.citations) {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocFormat {
    Markdown,
    Plain,
}

/// Lines of model text that would read as markdown headings are escaped so
/// the section structure stays intact.
fn body_text(text: &str, format: DocFormat) -> String {
    text.lines()
        .map(|l| match format {
            DocFormat::Markdown if l.trim_start().starts_with('#') => format!("\\{}", l.trim_start()),
            _ => l.to_owned(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_document(doc: &DesignDocument, format: DocFormat) -> String {
    let mut out = String::new();
    let b = &doc.brief;
    let (strong, bullet) = match format {
        DocFormat::Markdown => ("**", "- "),
        DocFormat::Plain => ("", "* "),
    };
    let _ = writeln!(out, "{strong}Design brief{strong} ({}, mode: {})", b.field, doc.mode);
    let _ = writeln!(out);
    let _ = writeln!(out, "Background: {}", b.background);
    let _ = writeln!(out, "Target audience: {}", b.target_audience);
    let _ = writeln!(out, "Target problems: {}", b.target_problems);
    for (i, section) in doc.sections.iter().enumerate() {
        let _ = writeln!(out);
        match format {
            DocFormat::Markdown => {
                let _ = writeln!(out, "## {}. {}", i + 1, section.title);
            }
            DocFormat::Plain => {
                let heading = format!("{}. {}", i + 1, section.title.to_uppercase());
                let _ = writeln!(out, "{heading}\n{}", "=".repeat(heading.chars().count()));
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{}", body_text(&section.summary, format));
        if !section.ideas.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "Accepted ideas:");
            for idea in &section.ideas {
                let _ = writeln!(out, "{bullet}{}", body_text(idea, format).replace('\n', " "));
            }
        }
        if !section.citations.is_empty() {
            let ids: Vec<&str> = section.citations.iter().map(CaseId::as_str).collect();
            let _ = writeln!(out);
            let _ = writeln!(out, "Cases: {}", ids.join(", "));
        }
    }
    let all = doc.citations();
    let _ = writeln!(out);
    let _ = writeln!(out, "---");
    if all.is_empty() {
        let _ = writeln!(out, "Cited cases: none");
    } else {
        let ids: Vec<&str> = all.iter().map(CaseId::as_str).collect();
        let _ = writeln!(out, "Cited cases: {}", ids.join(", "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{NodeId, NodeKind, StageResult, ThoughtNode};

    fn brief() -> DesignBrief {
        DesignBrief::new("Healthcare", "bg", "aud", "prob")
    }

    fn dot_doc() -> DesignDocument {
        let results = StageId::ALL
            .iter()
            .map(|&stage| StageResult {
                stage,
                accepted: vec![ThoughtNode {
                    id: NodeId(format!("{stage}-c1")),
                    parent_id: None,
                    stage,
                    content: format!("idea for {stage}"),
                    kind: NodeKind::Generated,
                    frequency: 1,
                    citations: vec![CaseId(format!("w-{}", stage.index()))],
                }],
                summary: "# not a heading\nsummary".into(),
            })
            .collect();
        DesignDocument::from_solution(
            &brief(),
            &DesignSolution {
                results,
                trace_id: "t".into(),
            },
        )
    }

    fn headings(text: &str) -> Vec<&str> {
        text.lines().filter(|l| l.starts_with('#')).collect()
    }

    #[test]
    fn io_document_has_one_heading() {
        let doc = DesignDocument::single(&brief(), RunMode::Io, "an answer");
        assert_eq!(headings(&render_document(&doc, DocFormat::Markdown)).len(), 1);
    }

    #[test]
    fn dot_document_headings_in_stage_order() {
        let text = render_document(&dot_doc(), DocFormat::Markdown);
        let h = headings(&text);
        assert_eq!(h.len(), 4);
        for (line, stage) in h.iter().zip(StageId::ALL) {
            assert!(line.ends_with(stage.title()));
        }
        assert!(text.contains("Cited cases: w-0, w-1, w-2, w-3"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let doc = dot_doc();
        for f in [DocFormat::Markdown, DocFormat::Plain] {
            assert_eq!(render_document(&doc, f), render_document(&doc, f));
        }
        assert!(render_document(&doc, DocFormat::Plain).contains("1. DISCOVERY\n============"));
    }
}
