#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use dot_core::backend::{load_script, MockBackend};
use dot_core::casedb::{CaseDatabase, DesignCase};
use dot_core::tree::DesignBrief;

pub fn asset(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets").join(rel)
}

pub fn fixture_db() -> CaseDatabase {
    CaseDatabase::ingest_path(&asset("fixtures/cases.jsonl")).unwrap()
}

pub fn brief(rel: &str) -> DesignBrief {
    dot_core::cli::load_brief(&asset(rel)).unwrap()
}

pub fn mask_brief() -> DesignBrief {
    brief("briefs/mask.toml")
}

pub fn mock(script: &str) -> MockBackend {
    MockBackend::new(load_script(&asset(script)).unwrap())
}

/// Straight-line BM25 (k1 = 1.2, b = 0.75, idf = ln(1 + (N - df + 0.5) / (df + 0.5)))
/// over explicit token lists, query terms deduplicated.
/// Per-term contributions are summed smallest first.
pub fn brute_bm25(docs: &[Vec<String>], query: &[String]) -> Vec<f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut seen = Vec::new();
    for q in query {
        if !seen.contains(q) {
            seen.push(q.clone());
        }
    }
    docs.iter()
        .map(|doc| {
            let mut parts = Vec::new();
            for term in &seen {
                let tf = doc.iter().filter(|t| *t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                parts.push(idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * doc.len() as f64 / avg)));
            }
            // order-independent summation, matching the index's tie semantics
            parts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            parts.iter().sum()
        })
        .collect()
}

pub fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Searchable text of a case: everything except id, category and source.
pub fn case_tokens(c: &DesignCase) -> Vec<String> {
    let mut text = vec![c.name.clone()];
    text.extend(c.function.tags.clone());
    text.push(c.function.description.clone());
    text.extend(c.behaviour.perception_modes.clone());
    text.extend(c.behaviour.action_modes.clone());
    text.extend(c.structure.technical_elements.clone());
    text.push(c.structure.on_body_location.clone());
    text.push(c.structure.wearing_mode.clone());
    oracle_tokens(&text.join(" "))
}

/// Oracle ranking: (id, score) by descending score then ascending id.
pub fn brute_rank(cases: &[&DesignCase], query: &str, top_n: usize) -> Vec<(String, f64)> {
    let docs: Vec<Vec<String>> = cases.iter().map(|c| case_tokens(c)).collect();
    let scores = brute_bm25(&docs, &oracle_tokens(query));
    let mut ranked: Vec<(String, f64)> = cases.iter().map(|c| c.id.0.clone()).zip(scores).collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.truncate(top_n);
    ranked
}

pub fn counts<S: AsRef<str>>(items: &[S]) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for i in items {
        *m.entry(i.as_ref().to_owned()).or_default() += 1;
    }
    m
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs())
}
