//! Write a run trace to disk, read it back and rebuild the thought tree
//! from it without calling any backend.

use std::path::Path;

use dot_core::backend::load_script;
use dot_core::pipeline::{accepted_sets, export_trace, import_trace};
use dot_core::{cli, run, CaseDatabase, MockBackend, RunMode, SearchConfig, TemplateRegistry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let brief = cli::load_brief(&assets.join("briefs/mask.toml"))?;
    let db = CaseDatabase::ingest_path(&assets.join("fixtures/cases.jsonl"))?;
    let backend = MockBackend::new(load_script(&assets.join("scripts/mask_dot.jsonl"))?);
    let out = run(&brief, RunMode::Dot, &SearchConfig::default(), &db, &backend, &TemplateRegistry::builtin())?;

    let path = std::env::temp_dir().join("dot_trace_replay.json");
    export_trace(&out.trace, &path)?;
    let trace = import_trace(&path)?;
    println!("{} ({} bytes, run {})", path.display(), std::fs::metadata(&path)?.len(), trace.run_id);

    let state = trace.replay()?;
    assert_eq!(Some(&state), out.state.as_ref());
    for (layer, ideas) in state.layers().iter().zip(accepted_sets(&trace)?) {
        println!("\n{} -> {}", layer.stage.title(), layer.summary);
        for idea in ideas {
            println!("  - {idea}");
        }
    }
    Ok(())
}
