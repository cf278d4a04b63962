//! One full expert-iteration round driven by a JSON run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{
    generate, open_generator, open_verifier, verify, AdapterError, BackendDescriptor, Generator, GeneratorRequest,
    VerificationRequest, Verifier,
};
use crate::augment::{build_prompt, parse_candidate_response, AugmentError, AugmentFlags};
use crate::canon::hash_canonical;
use crate::context::{load_index, slice, touch_set, IndexError, LibraryIndex, DEFAULT_MAX_DEPTH, DEFAULT_MAX_ITEMS};
use crate::eval::{emit_report, summarize, EvalError, EvalRecord, EvalSummary, ReportFormat};
use crate::io::{to_jsonl, to_pretty_json, write_atomic, IoError};
use crate::metrics::{improvement_score, MetricKind};
use crate::pipeline::{shape_iteration, BufferConfig, PipelineError, ProblemEntry, ProblemInfo, Reservoir};
use crate::trace::{parse_trace_file, CandidateProof, TheoremRecord, TraceError};

pub const MANIFEST_SCHEMA: &str = "improver2-manifest/1";

pub const SCORED_FILE: &str = "scored.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const REPLAY_FILE: &str = "replay.jsonl";
pub const RESERVOIR_FILE: &str = "reservoir.json";
pub const SHAPE_FILE: &str = "shape.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.md";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("backend error: {0}")]
    Backend(String),
}

impl RunError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Data(_) => 3,
            RunError::Backend(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Data(_) => "data",
            RunError::Backend(_) => "backend",
        }
    }
}

impl From<TraceError> for RunError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Io { .. } => RunError::Config(e.to_string()),
            _ => RunError::Data(e.to_string()),
        }
    }
}

impl From<IndexError> for RunError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Io { .. } => RunError::Config(e.to_string()),
            _ => RunError::Data(e.to_string()),
        }
    }
}

impl From<IoError> for RunError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Parse { .. } => RunError::Data(e.to_string()),
            IoError::Io { .. } => RunError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for RunError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => RunError::Config(e.to_string()),
            _ => RunError::Data(e.to_string()),
        }
    }
}

impl From<AdapterError> for RunError {
    fn from(e: AdapterError) -> Self {
        match e {
            AdapterError::Config(_) => RunError::Config(e.to_string()),
            AdapterError::Io(_) => RunError::Config(e.to_string()),
            _ => RunError::Backend(e.to_string()),
        }
    }
}

impl From<EvalError> for RunError {
    fn from(e: EvalError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<AugmentError> for RunError {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::MissingInput(_) => RunError::Config(e.to_string()),
            _ => RunError::Data(e.to_string()),
        }
    }
}

fn default_budget() -> usize {
    16
}

fn default_temperature() -> f64 {
    1.0
}

fn default_max_tokens() -> usize {
    8192
}

fn default_depth() -> usize {
    DEFAULT_MAX_DEPTH
}

fn default_items() -> usize {
    DEFAULT_MAX_ITEMS
}

/// Paths are relative to the directory holding the configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub metric: MetricKind,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Sample budgets reported by the evaluation; defaults to powers of two
    /// up to `budget`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    pub buffer: BufferConfig,
    #[serde(default)]
    pub augment: AugmentFlags,
    pub generator: BackendDescriptor,
    pub verifier: BackendDescriptor,
    pub traces: PathBuf,
    /// Held-out problems for the evaluation summary. Without it the summary
    /// covers the training problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_traces: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reservoir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples: Option<PathBuf>,
    #[serde(default = "default_depth")]
    pub slice_depth: usize,
    #[serde(default = "default_items")]
    pub slice_items: usize,
    pub output_dir: PathBuf,
    /// Directory relative paths were resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Config(format!("run configuration: {e}")))
    }

    /// Reads a configuration and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, RunError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let mut config = RunConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_against(base);
        Ok(config)
    }

    pub fn resolve_against(&mut self, base: &Path) {
        self.base_dir = Some(base.to_path_buf());
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.traces);
        fix(&mut self.output_dir);
        for p in [&mut self.eval_traces, &mut self.index, &mut self.reservoir, &mut self.examples]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        self.generator.resolve_against(base);
        self.verifier.resolve_against(base);
    }

    pub fn n_grid(&self) -> Vec<usize> {
        match &self.n_grid {
            Some(g) => g.clone(),
            None => {
                let mut g: Vec<usize> = std::iter::successors(Some(1usize), |n| Some(n * 2))
                    .take_while(|n| *n < self.budget)
                    .collect();
                g.push(self.budget);
                g
            }
        }
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<(), RunError> {
        if self.budget == 0 {
            return Err(RunError::Config("budget must be at least 1".into()));
        }
        if self.n_grid().iter().any(|&n| n == 0 || n > self.budget) {
            return Err(RunError::Config("nGrid values must lie in 1..=budget".into()));
        }
        self.buffer.validate()?;
        let must_exist = |what: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(RunError::Config(format!("{what} `{}` does not exist", p.display())))
            }
        };
        must_exist("traces", &self.traces)?;
        if let Some(p) = &self.eval_traces {
            must_exist("evalTraces", p)?;
        }
        match &self.index {
            Some(p) => must_exist("index", p)?,
            None if self.metric == MetricKind::Dependencies => {
                return Err(RunError::Config("the dependency metric requires `index`".into()))
            }
            None if self.augment.context => {
                return Err(RunError::Config("context augmentation requires `index`".into()))
            }
            None => {}
        }
        match &self.examples {
            Some(p) => must_exist("examples", p)?,
            None if self.augment.examples => {
                return Err(RunError::Config("examples augmentation requires `examples`".into()))
            }
            None => {}
        }
        Ok(())
    }

    /// Digest of the configuration with the output directory left out and
    /// paths taken relative to the configuration directory, so that moving
    /// the inputs or the output does not change it.
    pub fn digest(&self) -> String {
        let mut config = self.clone();
        if let Some(base) = &self.base_dir {
            let rel = |p: &mut PathBuf| {
                if let Ok(r) = p.strip_prefix(base) {
                    *p = r.to_path_buf();
                }
            };
            rel(&mut config.traces);
            for p in [&mut config.eval_traces, &mut config.index, &mut config.reservoir, &mut config.examples]
                .into_iter()
                .flatten()
            {
                rel(p);
            }
            for d in [&mut config.generator, &mut config.verifier] {
                let mut p = PathBuf::from(&d.target);
                rel(&mut p);
                d.target = p.display().to_string();
            }
        }
        let mut value = serde_json::to_value(&config).expect("serializable config");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("outputDir");
        }
        hash_canonical(value.to_string().as_bytes()).to_hex()
    }
}

/// Loaded inputs and opened backends for a run.
pub struct RunContext {
    pub config: RunConfig,
    pub index: Option<LibraryIndex>,
    pub examples: Option<String>,
    pub generator: Box<dyn Generator>,
    pub verifier: Box<dyn Verifier>,
}

impl RunContext {
    pub fn open(config: RunConfig) -> Result<RunContext, RunError> {
        config.validate()?;
        let index = config.index.as_ref().map(load_index).transpose()?;
        let examples = match &config.examples {
            Some(p) => Some(fs::read_to_string(p).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))?),
            None => None,
        };
        let generator = open_generator(&config.generator)?;
        let verifier = open_verifier(&config.verifier)?;
        Ok(RunContext {
            config,
            index,
            examples,
            generator,
            verifier,
        })
    }

    fn prompt_for(&self, record: &TheoremRecord) -> Result<String, RunError> {
        let slice = match (&self.index, self.config.augment.context) {
            (Some(index), true) => {
                let touch = touch_set(record, index);
                Some(slice(index, &touch.names, self.config.slice_depth, self.config.slice_items))
            }
            _ => None,
        };
        let bundle = build_prompt(
            self.config.metric,
            record,
            slice.as_ref(),
            self.examples.as_deref(),
            self.config.augment,
        )?;
        Ok(bundle.render())
    }

    /// Processes every record, with at most `jobs` worker threads when given.
    pub fn process_all(&self, records: &[TheoremRecord], jobs: Option<usize>) -> Result<Vec<ProblemEntry>, RunError> {
        in_pool(jobs, || records.par_iter().map(|r| self.process(r)).collect())?
    }

    /// Generates, verifies and scores `budget` candidates for one problem.
    pub fn process(&self, record: &TheoremRecord) -> Result<ProblemEntry, RunError> {
        let request = GeneratorRequest {
            key: record.theorem_name.clone(),
            prompt: self.prompt_for(record)?,
            sample_count: self.config.budget,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };
        let texts = generate(self.generator.as_ref(), &request)?;
        let mut candidates = Vec::with_capacity(texts.len());
        for (i, raw) in texts.iter().enumerate() {
            let proof = match parse_candidate_response(raw) {
                Ok(p) if !p.trim().is_empty() => p,
                _ => {
                    let mut c = CandidateProof::new(i, String::new());
                    c.verified = Some(false);
                    c.unscoreable = true;
                    candidates.push(c);
                    continue;
                }
            };
            let result = verify(
                self.verifier.as_ref(),
                &VerificationRequest {
                    context_id: record.context_id.clone(),
                    statement_text: record.statement_text.clone(),
                    proof_text: proof.clone(),
                },
            )?;
            let mut c = CandidateProof::new(i, proof);
            c.verified = Some(result.compiled);
            c.trace = result.trace;
            score_candidate(self.config.metric, record, &mut c, self.index.as_ref());
            candidates.push(c);
        }
        Ok(ProblemEntry::new(ProblemInfo::from(record), candidates))
    }
}

/// Fills in the metric value and improvement score of a verified candidate,
/// or marks it unscoreable.
pub fn score_candidate(
    metric: MetricKind,
    record: &TheoremRecord,
    candidate: &mut CandidateProof,
    index: Option<&LibraryIndex>,
) {
    candidate.metric_value = None;
    candidate.improvement_score = None;
    candidate.unscoreable = true;
    if !candidate.is_verified() {
        return;
    }
    match improvement_score(metric, record, candidate, index) {
        Ok(s) => {
            candidate.metric_value = Some(s.metric_value);
            candidate.improvement_score = Some(s.improvement);
            candidate.unscoreable = false;
        }
        Err(e) => warn!("{} candidate {}: {e}", record.theorem_name, candidate.candidate_index),
    }
}

fn in_pool<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub schema: String,
    pub tool_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub metric: MetricKind,
    /// Digest of every input file, keyed by its configuration field.
    pub inputs: BTreeMap<String, String>,
    /// Digest of every file written by the run, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub problems: usize,
    pub pairs: usize,
    pub summary: EvalSummary,
    pub manifest: Manifest,
}

fn file_digest(path: &Path) -> Result<String, RunError> {
    let bytes = fs::read(path).map_err(|e| RunError::Data(format!("{}: {e}", path.display())))?;
    Ok(hash_canonical(&bytes).to_hex())
}

/// generate → parse → verify → score → shape → evaluate, writing every
/// artifact atomically into the output directory.
pub fn run_iteration(config: RunConfig, jobs: Option<usize>) -> Result<RunOutcome, RunError> {
    let ctx = RunContext::open(config)?;
    let config = &ctx.config;
    let records = parse_trace_file(&config.traces)?;
    let reservoir = match &config.reservoir {
        Some(p) => Reservoir::load(p)?,
        None => Reservoir::default(),
    };
    info!("processing {} problems with {} samples each", records.len(), config.budget);
    let scored = ctx.process_all(&records, jobs)?;
    let shaped = shape_iteration(scored.clone(), &reservoir, &config.buffer)?;
    for w in &shaped.report.warnings {
        warn!("{w}");
    }

    let eval_entries = match &config.eval_traces {
        Some(p) => {
            let held_out = parse_trace_file(p)?;
            ctx.process_all(&held_out, jobs)?
        }
        None => scored.clone(),
    };
    let eval_records: Vec<EvalRecord> = eval_entries
        .iter()
        .map(|e| EvalRecord::from_entry(e, config.metric))
        .collect();
    let summary = summarize(&eval_records, &config.n_grid())?;

    let out = &config.output_dir;
    let files: Vec<(&str, String)> = vec![
        (SCORED_FILE, to_jsonl(&scored)),
        (PAIRS_FILE, to_jsonl(&shaped.pairs)),
        (REPLAY_FILE, to_jsonl(&shaped.replay)),
        (RESERVOIR_FILE, shaped.reservoir.to_json()),
        (SHAPE_FILE, to_pretty_json(&shaped.report)),
        (SUMMARY_FILE, emit_report(&summary, ReportFormat::Json)),
        (REPORT_FILE, emit_report(&summary, ReportFormat::Markdown)),
    ];

    let mut inputs = BTreeMap::new();
    inputs.insert("traces".to_string(), file_digest(&config.traces)?);
    let optional = [
        ("evalTraces", &config.eval_traces),
        ("index", &config.index),
        ("examples", &config.examples),
    ];
    for (name, path) in optional {
        if let Some(p) = path {
            inputs.insert(name.to_string(), file_digest(p)?);
        }
    }
    if let Some(p) = &config.reservoir {
        if p.exists() {
            inputs.insert("reservoir".to_string(), file_digest(p)?);
        }
    }
    for (name, d) in [("generator", &config.generator), ("verifier", &config.verifier)] {
        let p = Path::new(&d.target);
        if d.kind == crate::adapters::BackendKind::Replay && p.is_file() {
            inputs.insert(name.to_string(), file_digest(p)?);
        }
    }
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: config.digest(),
        seed: config.buffer.seed,
        metric: config.metric,
        inputs,
        outputs: files
            .iter()
            .map(|(name, body)| (name.to_string(), hash_canonical(body.as_bytes()).to_hex()))
            .collect(),
    };
    for (name, body) in &files {
        write_atomic(out.join(name), body.as_bytes())?;
    }
    write_atomic(out.join(MANIFEST_FILE), to_pretty_json(&manifest).as_bytes())?;
    info!("wrote {} pairs to {}", shaped.pairs.len(), out.display());

    Ok(RunOutcome {
        output_dir: out.clone(),
        problems: scored.len(),
        pairs: shaped.pairs.len(),
        summary,
        manifest,
    })
}
