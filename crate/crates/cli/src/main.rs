use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use improver_core::augment::{annotate_cos, build_informalization_prompt};
use improver_core::context::{load_index, serialize_slice, slice, touch_set, INDEX_SCHEMA};
use improver_core::eval::{emit_report, summarize, EvalRecord, EvalSummary, ReportFormat, REPORT_SCHEMA};
use improver_core::io::{read_jsonl, to_jsonl, write_atomic};
use improver_core::metrics::{dependency_report, metric_modularity, metric_value, MetricKind};
use improver_core::pipeline::{shape_iteration, BufferConfig, ProblemEntry, Reservoir, RESERVOIR_SCHEMA};
use improver_core::run::{run_iteration, RunConfig, RunContext, RunError, MANIFEST_SCHEMA};
use improver_core::trace::{parse_trace_file, TheoremRecord, TRACE_SCHEMA};
use improver_core::tree::build_tree;

#[derive(Parser)]
#[command(name = "improver", about = "Proof-optimization metrics and expert-iteration data shaping")]
#[command(disable_version_flag = true, arg_required_else_help = true)]
struct Cli {
    /// Print the tool version and the schema version of every file format.
    #[arg(long)]
    version: bool,
    /// Worker threads for generation, verification and scoring.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a metric for every theorem in a trace file.
    Score(ScoreArgs),
    /// Render proof trees in DOT format.
    Tree(TreeArgs),
    /// Write a budgeted library slice per theorem.
    Slice(SliceArgs),
    /// Write chain-of-states annotated proofs and informalization prompts.
    Annotate(AnnotateArgs),
    /// Sample, verify and score candidates for every theorem of a run config.
    Generate(GenerateArgs),
    /// Mark replay entries, filter, and build preference pairs.
    Shape(ShapeArgs),
    /// Summarize scored candidates into a best@n report.
    Eval(EvalArgs),
    /// Render a JSON report as JSON, CSV or markdown.
    Report(ReportArgs),
    /// Run one full iteration from a run config.
    Run(RunArgs),
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    metric: MetricKind,
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TreeArgs {
    #[arg(long)]
    traces: PathBuf,
    /// Only render this theorem.
    #[arg(long)]
    theorem: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SliceArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, default_value_t = improver_core::context::DEFAULT_MAX_DEPTH)]
    depth: usize,
    #[arg(long, default_value_t = improver_core::context::DEFAULT_MAX_ITEMS)]
    max_items: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the informalization prompt of each theorem.
    #[arg(long)]
    informalize: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Trace file overriding the one named in the config.
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ShapeArgs {
    /// Scored entries as written by `generate`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Reservoir file; a missing file is an empty reservoir.
    #[arg(long)]
    reservoir: PathBuf,
    /// Buffer configuration, or a run config whose `buffer` field is used.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_pairs: PathBuf,
    #[arg(long)]
    out_replay: PathBuf,
    /// Updated reservoir; defaults to overwriting `--reservoir`.
    #[arg(long)]
    out_reservoir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    metric: MetricKind,
    /// Comma-separated sample budgets.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    n: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report written by `eval` or `run`.
    #[arg(long)]
    summary: PathBuf,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory overriding the one named in the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<usize>,
}

fn config_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Config(format!("{}: {e}", path.display()))
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Data(format!("{}: {e}", path.display()))
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), RunError> {
    match out {
        Some(p) => write_atomic(p, body.as_bytes()).map_err(RunError::from),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn file_stem(theorem: &str) -> String {
    theorem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

fn read_traces(path: &Path) -> Result<Vec<TheoremRecord>, RunError> {
    parse_trace_file(path).map_err(RunError::from)
}

fn score(args: ScoreArgs) -> Result<(), RunError> {
    let records = read_traces(&args.traces)?;
    let index = args.index.as_ref().map(load_index).transpose()?;
    if args.metric == MetricKind::Dependencies && index.is_none() {
        return Err(RunError::Config("the dependency metric requires --index".into()));
    }
    let mut lines = Vec::with_capacity(records.len());
    for r in &records {
        let value = metric_value(args.metric, r, index.as_ref()).map_err(|e| RunError::Data(format!("{}: {e}", r.theorem_name)))?;
        let report = match args.metric {
            MetricKind::Length => None,
            MetricKind::Dependencies => Some(json!(dependency_report(r, index.as_ref().expect("checked above")))),
            MetricKind::Modularity => {
                let (_, report) = metric_modularity(r).map_err(|e| RunError::Data(format!("{}: {e}", r.theorem_name)))?;
                Some(json!(report))
            }
        };
        let mut line = json!({ "theoremName": r.theorem_name, "metricValue": value });
        if let Some(report) = report {
            line["report"] = report;
        }
        lines.push(line);
    }
    emit(args.out.as_deref(), &to_jsonl(&lines))
}

fn tree(args: TreeArgs) -> Result<(), RunError> {
    let records = read_traces(&args.traces)?;
    let mut out = String::new();
    for r in records.iter().filter(|r| args.theorem.as_ref().is_none_or(|t| t == &r.theorem_name)) {
        let t = build_tree(r).map_err(|e| RunError::Data(format!("{}: {e}", r.theorem_name)))?;
        out.push_str(&t.to_dot(&r.theorem_name, &r.steps));
    }
    if out.is_empty() {
        return Err(RunError::Data(format!("no matching theorem in {}", args.traces.display())));
    }
    emit(args.out.as_deref(), &out)
}

fn slice_cmd(args: SliceArgs) -> Result<(), RunError> {
    let index = load_index(&args.index)?;
    let records = read_traces(&args.traces)?;
    for r in &records {
        let touch = touch_set(r, &index);
        let s = slice(&index, &touch.names, args.depth, args.max_items);
        write_atomic(args.out.join(format!("{}.txt", file_stem(&r.theorem_name))), serialize_slice(&s).as_bytes())?;
    }
    info!("wrote {} slices to {}", records.len(), args.out.display());
    Ok(())
}

fn annotate(args: AnnotateArgs) -> Result<(), RunError> {
    let records = read_traces(&args.traces)?;
    for r in &records {
        let stem = file_stem(&r.theorem_name);
        write_atomic(args.out.join(format!("{stem}.lean")), annotate_cos(r)?.as_bytes())?;
        if args.informalize {
            let prompt = build_informalization_prompt(r)?;
            write_atomic(args.out.join(format!("{stem}.informalize.txt")), prompt.as_bytes())?;
        }
    }
    Ok(())
}

fn generate(args: GenerateArgs, jobs: Option<usize>) -> Result<(), RunError> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(t) = args.traces {
        config.traces = t;
    }
    let ctx = RunContext::open(config)?;
    let records = read_traces(&ctx.config.traces)?;
    let entries = ctx.process_all(&records, jobs)?;
    write_atomic(&args.out, to_jsonl(&entries).as_bytes())?;
    Ok(())
}

fn load_buffer_config(path: &Path) -> Result<BufferConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| config_err(path, e))?;
    let buffer = match value.get("buffer") {
        Some(b) => b.clone(),
        None => value,
    };
    serde_json::from_value(buffer).map_err(|e| config_err(path, e))
}

fn shape(args: ShapeArgs) -> Result<(), RunError> {
    let mut config = load_buffer_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let entries: Vec<ProblemEntry> = read_jsonl(&args.input)?;
    let reservoir = Reservoir::load(&args.reservoir)?;
    let outcome = shape_iteration(entries, &reservoir, &config)?;
    for w in &outcome.report.warnings {
        log::warn!("{w}");
    }
    write_atomic(&args.out_pairs, to_jsonl(&outcome.pairs).as_bytes())?;
    write_atomic(&args.out_replay, to_jsonl(&outcome.replay).as_bytes())?;
    let reservoir_out = args.out_reservoir.as_ref().unwrap_or(&args.reservoir);
    write_atomic(reservoir_out, outcome.reservoir.to_json().as_bytes())?;
    eprintln!("{}", serde_json::to_string(&outcome.report).expect("serializable report"));
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), RunError> {
    let entries: Vec<ProblemEntry> = read_jsonl(&args.input)?;
    let records: Vec<EvalRecord> = entries.iter().map(|e| EvalRecord::from_entry(e, args.metric)).collect();
    let summary = summarize(&records, &args.n)?;
    emit(args.out.as_deref(), &emit_report(&summary, ReportFormat::Json))
}

fn report(args: ReportArgs) -> Result<(), RunError> {
    let text = fs::read_to_string(&args.summary).map_err(|e| config_err(&args.summary, e))?;
    let summary: EvalSummary = serde_json::from_str(&text).map_err(|e| data_err(&args.summary, e))?;
    emit(args.out.as_deref(), &emit_report(&summary, args.format))
}

fn run(args: RunArgs, jobs: Option<usize>) -> Result<(), RunError> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(dir) = args.out_dir {
        config.output_dir = dir;
    }
    if let Some(seed) = args.seed {
        config.buffer.seed = seed;
    }
    if let Some(n) = args.budget {
        config.budget = n;
    }
    let outcome = run_iteration(config, jobs)?;
    println!(
        "{}",
        json!({
            "outputDir": outcome.output_dir,
            "problems": outcome.problems,
            "pairs": outcome.pairs,
            "configDigest": outcome.manifest.config_digest,
        })
    );
    Ok(())
}

fn print_version() {
    println!("improver {}", env!("CARGO_PKG_VERSION"));
    for (format, schema) in [
        ("trace", TRACE_SCHEMA),
        ("index", INDEX_SCHEMA),
        ("reservoir", RESERVOIR_SCHEMA),
        ("report", REPORT_SCHEMA),
        ("manifest", MANIFEST_SCHEMA),
    ] {
        println!("{format} {schema}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.version {
        print_version();
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        print_version();
        return ExitCode::SUCCESS;
    };
    let result = match command {
        Command::Score(a) => score(a),
        Command::Tree(a) => tree(a),
        Command::Slice(a) => slice_cmd(a),
        Command::Annotate(a) => annotate(a),
        Command::Generate(a) => generate(a, cli.jobs),
        Command::Shape(a) => shape(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
        Command::Run(a) => run(a, cli.jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
