//! Route and render the divergence prompt of every stage for a fresh tree,
//! grounding each with the cases retrieved for the brief.

use std::path::Path;

use dot_core::casedb::project;
use dot_core::promptkit::Phase;
use dot_core::{cli, CaseDatabase, PromptRouter, StageId, TemplateRegistry, TreeState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let brief = cli::load_brief(&assets.join("briefs/task1_fitness.toml"))?;
    let db = CaseDatabase::ingest_path(&assets.join("fixtures/cases.jsonl"))?;
    let router = PromptRouter::new(TemplateRegistry::builtin(), 3, 3);
    let state = TreeState::new(brief.clone())?;
    let hits = db.retrieve(&format!("{} {}", brief.background, brief.target_problems), 2)?;

    for stage in StageId::ALL {
        let params = router.route(stage, Phase::Diverge)?;
        let views: Vec<_> = hits.iter().filter_map(|h| db.get(&h.case_id)).map(|c| project(c, stage)).collect();
        let prompt = router.aggregate(&params, &state, None, &views)?;
        println!("===== {} / {} (x{}) =====\n{}\n", stage.slug(), params.method, params.frequency, prompt.text);
    }
    Ok(())
}
