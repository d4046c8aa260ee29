//! Load the fixture case store, rank cases for a query and show how each
//! stage sees the same case through its facet projection.
//!
//! cargo run --example ingest_and_retrieve -- "cooling mask filter"

use std::path::Path;

use dot_core::casedb::{project, CaseDatabase};
use dot_core::StageId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "cooling mask filter".into());
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/fixtures/cases.jsonl");
    let db = CaseDatabase::ingest_path(&path)?;
    for (category, n) in db.counts() {
        println!("{category:?}: {n}");
    }

    println!("\ntop 3 for {query:?}:");
    let hits = db.retrieve(&query, 3)?;
    for hit in &hits {
        let case = db.get(&hit.case_id).expect("hit resolves");
        println!("  {:.4}  {}  {}", hit.score, hit.case_id, case.name);
    }

    let best = db.get(&hits[0].case_id).expect("hit resolves");
    for stage in StageId::ALL {
        println!("\n{}:\n{}", stage.title(), project(best, stage).render());
    }
    Ok(())
}
