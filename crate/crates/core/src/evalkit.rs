//! Rating aggregation: score-to-rank conversion, Kendall's coefficient of
//! concordance, and a structural comparison report across run modes.
//!
//! Nothing here scores designs. Ratings come from human judges; the kit only
//! converts and aggregates them.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::pipeline::{DesignDocument, RunMode, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid rating table: {0}")]
    Invalid(String),
    #[error("rating file: {0}")]
    Csv(String),
    #[error("comparison needs at least two run modes, got {0}")]
    TooFewModes(usize),
}

/// m judges (rows) scoring n items (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct RatingTable {
    pub judges: Vec<String>,
    pub items: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl RatingTable {
    pub fn new(judges: Vec<String>, items: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self, EvalError> {
        let table = Self { judges, items, scores };
        table.validate()?;
        Ok(table)
    }

    /// Rows labelled `judge1..judgeM`, columns `item1..itemN`.
    pub fn from_rows(scores: Vec<Vec<f64>>) -> Result<Self, EvalError> {
        let n = scores.first().map_or(0, Vec::len);
        Self::new(
            (1..=scores.len()).map(|i| format!("judge{i}")).collect(),
            (1..=n).map(|i| format!("item{i}")).collect(),
            scores,
        )
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let m = self.scores.len();
        let n = self.items.len();
        if m < 2 {
            return Err(EvalError::Invalid(format!("need at least 2 judges, got {m}")));
        }
        if n < 2 {
            return Err(EvalError::Invalid(format!("need at least 2 items, got {n}")));
        }
        if self.judges.len() != m {
            return Err(EvalError::Invalid("judge labels do not match rows".into()));
        }
        for (i, row) in self.scores.iter().enumerate() {
            if row.len() != n {
                return Err(EvalError::Invalid(format!(
                    "row {} has {} scores, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            if row.iter().any(|s| s.is_nan()) {
                return Err(EvalError::Invalid(format!("row {} contains NaN", i + 1)));
            }
        }
        Ok(())
    }

    /// Header row of item labels, then one comma-separated row per judge. If
    /// the first header cell is empty or `judge`, the first column holds
    /// judge labels.
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| EvalError::Csv(e.to_string()))?.clone();
        let labelled = headers
            .get(0)
            .is_some_and(|h| h.is_empty() || h.eq_ignore_ascii_case("judge"));
        let skip = usize::from(labelled);
        let items: Vec<String> = headers.iter().skip(skip).map(str::to_owned).collect();
        let mut judges = Vec::new();
        let mut scores = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| EvalError::Csv(e.to_string()))?;
            judges.push(if labelled {
                record.get(0).unwrap_or_default().to_owned()
            } else {
                format!("judge{}", i + 1)
            });
            let row = record
                .iter()
                .skip(skip)
                .map(|cell| {
                    cell.parse::<f64>()
                        .map_err(|_| EvalError::Csv(format!("row {}: {cell:?} is not a number", i + 2)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            scores.push(row);
        }
        Self::new(judges, items, scores)
    }
}

/// Per-judge rankings, 1 = best, ties averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub ranks: Vec<Vec<f64>>,
}

impl RankTable {
    pub fn judges(&self) -> usize {
        self.ranks.len()
    }

    pub fn items(&self) -> usize {
        self.ranks.first().map_or(0, Vec::len)
    }
}

fn rank_row(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    let mut ranks = vec![0.0; row.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && row[order[end]] == row[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Higher score gets the lower (better) rank number.
pub fn to_ranks(table: &RatingTable) -> Result<RankTable, EvalError> {
    table.validate()?;
    Ok(RankTable {
        ranks: table.scores.iter().map(|r| rank_row(r)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieCorrection {
    #[default]
    Off,
    On,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concordance {
    pub w: f64,
    /// No variation to measure (e.g. every row fully tied); `w` is 0.
    pub degenerate: bool,
}

/// Kendall's W = 12 S / (m^2 (n^3 - n)), S the squared deviation of column
/// rank sums from m (n + 1) / 2. With tie correction the denominator becomes
/// m^2 (n^3 - n) - m * sum(t^3 - t) over tie groups.
pub fn kendalls_w(ranks: &RankTable, correction: TieCorrection) -> Result<Concordance, EvalError> {
    let m = ranks.judges();
    let n = ranks.items();
    if m < 2 || n < 2 || ranks.ranks.iter().any(|r| r.len() != n) {
        return Err(EvalError::Invalid(format!("rank table must be at least 2x2, got {m}x{n}")));
    }
    let (mf, nf) = (m as f64, n as f64);
    let mean = mf * (nf + 1.0) / 2.0;
    let s: f64 = (0..n)
        .map(|j| {
            let r: f64 = ranks.ranks.iter().map(|row| row[j]).sum();
            (r - mean).powi(2)
        })
        .sum();
    let mut denom = mf * mf * (nf.powi(3) - nf);
    if correction == TieCorrection::On {
        let ties: f64 = ranks.ranks.iter().map(|row| tie_term(row)).sum();
        denom -= mf * ties;
    }
    let all_tied = ranks.ranks.iter().all(|row| row.iter().all(|&r| r == row[0]));
    if denom <= 0.0 || all_tied {
        return Ok(Concordance { w: 0.0, degenerate: true });
    }
    Ok(Concordance {
        w: (12.0 * s / denom).clamp(0.0, 1.0),
        degenerate: false,
    })
}

fn tie_term(row: &[f64]) -> f64 {
    let mut sorted = row.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        total += t.powi(3) - t;
        i = j;
    }
    total
}

/// Structural statistics for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeStats {
    pub mode: RunMode,
    pub sections: usize,
    pub ideas: usize,
    pub citations: usize,
    pub calls: usize,
    /// Distinct candidates over raw samples, across all steps.
    pub distinct_ratio: f64,
}

pub fn mode_stats(document: &DesignDocument, trace: &Trace) -> ModeStats {
    let samples: u32 = trace.steps.iter().flat_map(|s| s.tally.values()).sum();
    let distinct: usize = trace.steps.iter().map(|s| s.tally.len()).sum();
    ModeStats {
        mode: document.mode,
        sections: document.sections.len(),
        ideas: document.idea_count(),
        citations: document.citations().len(),
        calls: trace.call_count,
        distinct_ratio: if samples == 0 { 0.0 } else { distinct as f64 / f64::from(samples) },
    }
}

/// Markdown comparison of runs in different modes. The concordance block is
/// included only when rating tables are supplied.
pub fn compare_report(
    runs: &[(&DesignDocument, &Trace)],
    ratings: &[(String, RatingTable)],
) -> Result<String, EvalError> {
    let modes: BTreeSet<RunMode> = runs.iter().map(|(d, _)| d.mode).collect();
    if modes.len() < 2 {
        return Err(EvalError::TooFewModes(modes.len()));
    }
    let mut out = String::from("# Run comparison\n\n");
    out.push_str("| mode | sections | ideas | cited cases | backend calls | distinct-idea ratio |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for (doc, trace) in runs {
        let s = mode_stats(doc, trace);
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {:.2} |",
            s.mode, s.sections, s.ideas, s.citations, s.calls, s.distinct_ratio
        );
    }
    if !ratings.is_empty() {
        out.push_str("\n## Rater concordance (Kendall's W)\n\n| metric | W |\n|---|---|\n");
        for (metric, table) in ratings {
            let c = kendalls_w(&to_ranks(table)?, TieCorrection::Off)?;
            let _ = writeln!(out, "| {metric} | {:.2} |", c.w);
        }
    }
    Ok(out)
}
