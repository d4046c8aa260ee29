//! The `dot` command: ingest cases, run a design task, inspect traces, and
//! compute rater concordance.
//!
//! Exit codes: 0 success, 1 domain error (validation, engine, parse), 2 usage
//! or I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backend::{load_script, Backend, ChatClient, MockBackend};
use crate::casedb::{CaseDatabase, CaseDbError, Category};
use crate::engine::SearchConfig;
use crate::evalkit::{kendalls_w, to_ranks, RatingTable, TieCorrection};
use crate::pipeline::{self, export_trace, import_trace, render_document, DocFormat, RunMode, TraceError};
use crate::promptkit::TemplateRegistry;
use crate::tree::DesignBrief;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dot", version, about = "Staged thought-tree search for conceptual design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a case record file and report counts per category.
    Ingest {
        records: PathBuf,
        /// Write the validated records here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one design task and write the document and trace.
    Run(RunArgs),
    /// Inspect a trace file.
    Trace(TraceArgs),
    /// Rank-convert rating tables and report concordance.
    Eval {
        #[arg(required = true)]
        ratings: Vec<PathBuf>,
        /// Report Kendall's W per table.
        #[arg(long)]
        kendall: bool,
        /// Use the tie-corrected denominator.
        #[arg(long)]
        tie_correct: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Io,
    Cot,
    Dot,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Io => RunMode::Io,
            ModeArg::Cot => RunMode::Cot,
            ModeArg::Dot => RunMode::Dot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Live,
    Mock,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Markdown,
    Plain,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Brief file with keys field, background, target_audience, target_problems.
    brief: PathBuf,
    #[arg(long, value_enum, default_value = "dot")]
    mode: ModeArg,
    #[arg(long, default_value_t = 3)]
    k: u32,
    #[arg(long, default_value_t = 3)]
    keep_width: u32,
    #[arg(long, default_value_t = 3)]
    votes: u32,
    #[arg(long, default_value_t = 4)]
    dmax: u32,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    top_n: u32,
    #[arg(long, value_enum, default_value = "live")]
    backend: BackendArg,
    /// Response script for the mock backend.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Case record file.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long, default_value = "design.md")]
    out: PathBuf,
    #[arg(long, default_value = "trace.json")]
    trace_out: PathBuf,
    #[arg(long, value_enum, default_value = "markdown")]
    format: FormatArg,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "view")]
struct TraceView {
    /// Per-step sample, distinct and accepted counts.
    #[arg(long)]
    summary: bool,
    /// Every rendered prompt.
    #[arg(long)]
    prompts: bool,
    /// Backend call count.
    #[arg(long)]
    calls: bool,
}

#[derive(Debug, Args)]
struct TraceArgs {
    path: PathBuf,
    #[command(flatten)]
    view: TraceView,
}

/// Error carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn domain(message: impl Into<String>) -> Self {
        Self { code: EXIT_DOMAIN, message: message.into() }
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Ingest { records, out: db_out } => cmd_ingest(&records, db_out.as_deref(), out),
        Command::Run(args) => cmd_run(&args, out),
        Command::Trace(args) => cmd_trace(&args, out),
        Command::Eval { ratings, kendall, tie_correct } => cmd_eval(&ratings, kendall, tie_correct, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn load_db(path: &Path) -> Result<CaseDatabase, Failure> {
    CaseDatabase::ingest_path(path).map_err(|e| match e {
        CaseDbError::Io { .. } => Failure::usage(e.to_string()),
        other => Failure::domain(other.to_string()),
    })
}

fn cmd_ingest(records: &Path, db_out: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let db = load_db(records)?;
    let counts = db.counts();
    let _ = writeln!(out, "prototype: {}", counts[&Category::Prototype]);
    let _ = writeln!(out, "product: {}", counts[&Category::Product]);
    let _ = writeln!(out, "total: {}", db.len());
    if db.is_ungrounded() {
        let _ = writeln!(out, "warning: no records; runs against this database are ungrounded");
    }
    if let Some(path) = db_out {
        std::fs::write(path, db.export())
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Reads a brief file: TOML with the four brief keys.
pub fn load_brief(path: &Path) -> Result<DesignBrief, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_brief(&text)
}

pub fn parse_brief(text: &str) -> Result<DesignBrief, String> {
    let brief: DesignBrief = toml::from_str(text).map_err(|e| e.to_string())?;
    brief.validate().map_err(|e| e.to_string())?;
    Ok(brief)
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> CmdResult {
    let text = std::fs::read_to_string(&args.brief)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.brief.display())))?;
    let brief = parse_brief(&text).map_err(Failure::domain)?;
    let db = match &args.db {
        Some(path) => load_db(path)?,
        None => CaseDatabase::default(),
    };
    let templates = match &args.templates {
        Some(dir) => TemplateRegistry::load_dir(dir).map_err(|e| Failure::usage(e.to_string()))?,
        None => TemplateRegistry::builtin(),
    };
    let backend: Box<dyn Backend> = match args.backend {
        BackendArg::Mock => {
            let path = args
                .script
                .as_ref()
                .ok_or_else(|| Failure::usage("--backend mock requires --script"))?;
            Box::new(MockBackend::new(load_script(path).map_err(Failure::usage)?))
        }
        BackendArg::Live => Box::new(ChatClient::from_env().map_err(|e| Failure::usage(e.to_string()))?),
    };
    let config = SearchConfig {
        k: args.k,
        keep_width: args.keep_width,
        votes: args.votes,
        d_max: args.dmax,
        seed: args.seed,
        temperature: args.temperature,
        retrieval_top_n: args.top_n,
    };
    let format = match args.format {
        FormatArg::Markdown => DocFormat::Markdown,
        FormatArg::Plain => DocFormat::Plain,
    };
    let write_trace = |trace: &pipeline::Trace| {
        export_trace(trace, &args.trace_out).map_err(|e| Failure::usage(e.to_string()))
    };
    match pipeline::run(&brief, args.mode.into(), &config, &db, backend.as_ref(), &templates) {
        Ok(output) => {
            write_trace(&output.trace)?;
            std::fs::write(&args.out, render_document(&output.document, format))
                .map_err(|e| Failure::usage(format!("{}: {e}", args.out.display())))?;
            let _ = writeln!(out, "{}", args.out.display());
            Ok(())
        }
        Err(failure) => {
            write_trace(&failure.trace)?;
            Err(Failure::domain(format!(
                "{} (partial trace written to {})",
                failure.error,
                args.trace_out.display()
            )))
        }
    }
}

fn cmd_trace(args: &TraceArgs, out: &mut dyn Write) -> CmdResult {
    let trace = import_trace(&args.path).map_err(|e| match e {
        TraceError::Io { .. } => Failure::usage(e.to_string()),
        other => Failure::domain(other.to_string()),
    })?;
    if args.view.calls {
        let _ = writeln!(out, "calls: {}", trace.call_count);
    } else if args.view.prompts {
        for step in &trace.steps {
            for p in &step.prompts {
                let _ = writeln!(out, "=== step {} {} ===\n{}\n", step.step, p.label, p.text);
            }
        }
    } else {
        let _ = writeln!(
            out,
            "run {} mode {} steps {} calls {}{}",
            trace.run_id,
            trace.mode,
            trace.steps.len(),
            trace.call_count,
            if trace.is_complete() { "" } else { " (incomplete)" }
        );
        for step in &trace.steps {
            let _ = writeln!(
                out,
                "step {} {}: samples {}, distinct {}, accepted {}",
                step.step,
                step.stage.map_or("-", |s| s.slug()),
                step.samples.len(),
                step.tally.len(),
                step.accepted.len()
            );
        }
        if let Some(e) = &trace.error {
            let _ = writeln!(out, "error: {e}");
        }
    }
    Ok(())
}

fn cmd_eval(paths: &[PathBuf], kendall: bool, tie_correct: bool, out: &mut dyn Write) -> CmdResult {
    let correction = if tie_correct { TieCorrection::On } else { TieCorrection::Off };
    for path in paths {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let metric = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        let table = RatingTable::from_csv(&text)
            .map_err(|e| Failure::domain(format!("{}: {e}", path.display())))?;
        let ranks = to_ranks(&table).map_err(|e| Failure::domain(e.to_string()))?;
        if kendall {
            let c = kendalls_w(&ranks, correction).map_err(|e| Failure::domain(e.to_string()))?;
            let flag = if c.degenerate { " (degenerate)" } else { "" };
            let _ = writeln!(out, "{metric}: {:.2}{flag}", c.w);
        } else {
            let _ = writeln!(out, "{metric}: ranks ({})", table.items.join(", "));
            for (judge, row) in table.judges.iter().zip(&ranks.ranks) {
                let cells: Vec<String> = row.iter().map(|r| format!("{r}")).collect();
                let _ = writeln!(out, "  {judge}: {}", cells.join(", "));
            }
        }
    }
    Ok(())
}
