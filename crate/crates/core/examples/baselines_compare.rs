//! Run the same brief in io, cot and dot mode with scripted backends and
//! print a structural comparison plus rater concordance.

use std::path::Path;

use dot_core::backend::load_script;
use dot_core::evalkit::{compare_report, RatingTable};
use dot_core::{cli, run, CaseDatabase, MockBackend, RunMode, SearchConfig, TemplateRegistry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let brief = cli::load_brief(&assets.join("briefs/mask.toml"))?;
    let db = CaseDatabase::ingest_path(&assets.join("fixtures/cases.jsonl"))?;
    let templates = TemplateRegistry::builtin();

    let mut outputs = Vec::new();
    for (mode, script) in [(RunMode::Io, "mask_io"), (RunMode::Cot, "mask_cot"), (RunMode::Dot, "mask_dot")] {
        let backend = MockBackend::new(load_script(&assets.join(format!("scripts/{script}.jsonl")))?);
        outputs.push(run(&brief, mode, &SearchConfig::default(), &db, &backend, &templates)?);
    }
    let runs: Vec<_> = outputs.iter().map(|o| (&o.document, &o.trace)).collect();

    let mut ratings = Vec::new();
    for metric in ["novelty", "rationality"] {
        let text = std::fs::read_to_string(assets.join(format!("ratings/{metric}.csv")))?;
        ratings.push((metric.to_owned(), RatingTable::from_csv(&text)?));
    }
    print!("{}", compare_report(&runs, &ratings)?);
    Ok(())
}
