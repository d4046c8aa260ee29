//! Run the four-stage search for the mask brief against the shipped mock
//! script and print the resulting design document.

use std::path::Path;

use dot_core::backend::load_script;
use dot_core::pipeline::{render_document, DocFormat};
use dot_core::{cli, run, CaseDatabase, MockBackend, RunMode, SearchConfig, TemplateRegistry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let brief = cli::load_brief(&assets.join("briefs/mask.toml"))?;
    let db = CaseDatabase::ingest_path(&assets.join("fixtures/cases.jsonl"))?;
    let backend = MockBackend::new(load_script(&assets.join("scripts/mask_dot.jsonl"))?);

    let out = run(&brief, RunMode::Dot, &SearchConfig::default(), &db, &backend, &TemplateRegistry::builtin())?;
    for step in &out.trace.steps {
        println!(
            "step {} {}: {} samples -> {} distinct -> {} accepted",
            step.step,
            step.stage.map_or("-", |s| s.slug()),
            step.samples.len(),
            step.tally.len(),
            step.accepted.len()
        );
    }
    println!("backend calls: {}\n", out.trace.call_count);
    print!("{}", render_document(&out.document, DocFormat::Markdown));
    Ok(())
}
