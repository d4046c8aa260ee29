//! Okapi BM25 over case-folded alphanumeric tokens.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::tree::CaseId;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

/// Lower-cases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedHit {
    pub case_id: CaseId,
    pub score: f64,
}

/// Scores every document in a corpus against a tokenized query.
pub trait Scorer: Send + Sync {
    fn score_all(&self, query_terms: &[String]) -> Vec<RankedHit>;
}

#[derive(Debug, Clone, Default)]
pub struct Bm25Index {
    ids: Vec<CaseId>,
    doc_len: Vec<usize>,
    avg_len: f64,
    /// term -> (document index, term frequency)
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl Bm25Index {
    pub fn build<I>(docs: I) -> Self
    where
        I: IntoIterator<Item = (CaseId, Vec<String>)>,
    {
        let mut index = Bm25Index::default();
        for (doc, (id, tokens)) in docs.into_iter().enumerate() {
            let mut tf: HashMap<&str, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            for (term, count) in tf {
                index.postings.entry(term.to_owned()).or_default().push((doc, count));
            }
            index.ids.push(id);
            index.doc_len.push(tokens.len());
        }
        if !index.ids.is_empty() {
            index.avg_len = index.doc_len.iter().sum::<usize>() as f64 / index.ids.len() as f64;
        }
        index
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn idf(&self, doc_freq: usize) -> f64 {
        let n = self.ids.len() as f64;
        let df = doc_freq as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }
}

impl Scorer for Bm25Index {
    fn score_all(&self, query_terms: &[String]) -> Vec<RankedHit> {
        let mut parts: Vec<Vec<f64>> = vec![Vec::new(); self.ids.len()];
        let unique: BTreeSet<&String> = query_terms.iter().collect();
        for term in unique {
            let Some(postings) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(postings.len());
            for &(doc, tf) in postings {
                let tf = f64::from(tf);
                let norm = K1 * (1.0 - B + B * self.doc_len[doc] as f64 / self.avg_len);
                parts[doc].push(idf * tf * (K1 + 1.0) / (tf + norm));
            }
        }
        // Sum in ascending order so equal term contributions give bit-equal scores.
        let scores = parts.into_iter().map(|mut p| {
            p.sort_by(f64::total_cmp);
            p.into_iter().sum::<f64>()
        });
        self.ids
            .iter()
            .cloned()
            .zip(scores)
            .map(|(case_id, score)| RankedHit { case_id, score })
            .collect()
    }
}

/// Sorts by descending score, ties by ascending id, and keeps `top_n`.
pub fn rank(mut hits: Vec<RankedHit>, top_n: usize) -> Vec<RankedHit> {
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.case_id.cmp(&b.case_id)));
    hits.truncate(top_n);
    hits
}
