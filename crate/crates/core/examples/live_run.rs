//! One staged run against a live chat-completion endpoint.
//!
//! DOT_API_KEY=... [DOT_API_URL=...] [DOT_MODEL=...] cargo run --example live_run -- [brief.toml]

use std::path::{Path, PathBuf};

use dot_core::backend::ChatClient;
use dot_core::pipeline::{export_trace, render_document, DocFormat};
use dot_core::{cli, run, CaseDatabase, RunMode, SearchConfig, TemplateRegistry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let brief_path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| assets.join("briefs/mask.toml"));
    let client = match ChatClient::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}; set DOT_API_KEY to run this example");
            std::process::exit(2);
        }
    };
    let brief = cli::load_brief(&brief_path)?;
    let db = CaseDatabase::ingest_path(&assets.join("fixtures/cases.jsonl"))?;
    match run(&brief, RunMode::Dot, &SearchConfig::default(), &db, &client, &TemplateRegistry::builtin()) {
        Ok(out) => {
            export_trace(&out.trace, Path::new("live_trace.json"))?;
            print!("{}", render_document(&out.document, DocFormat::Markdown));
            Ok(())
        }
        Err(failure) => {
            export_trace(&failure.trace, Path::new("live_trace.json"))?;
            Err(failure.into())
        }
    }
}
