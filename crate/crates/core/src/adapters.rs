//! Generator and verifier backends: subprocess, HTTP, recorded replay files
//! and a local echo generator.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::augment::unescape_payload;
use crate::canon::hash_canonical;
use crate::io::{read_jsonl, IoError};
use crate::pipeline::normalize_proof_text;
use crate::trace::ProofTrace;

pub const DEFAULT_TIMEOUT_SECONDS: u64 = 300;
const EXCERPT_CHARS: usize = 200;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("backend `{backend}` violated the protocol: {message}; payload starts with {excerpt:?}")]
    Protocol {
        backend: String,
        message: String,
        excerpt: String,
    },
    #[error("backend `{backend}` failed: {message}")]
    Unavailable { backend: String, message: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Command,
    Http,
    Replay,
    Echo,
}

/// Where a generator or verifier lives. `target` is an executable path for
/// `command`, a URL for `http` and a recording for `replay`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    #[serde(default)]
    pub target: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
    /// Environment variable holding a bearer token for `http` backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_env: Option<String>,
    #[serde(default)]
    pub retries: u32,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECONDS
}

impl BackendDescriptor {
    pub fn new(kind: BackendKind, target: impl Into<String>) -> Self {
        BackendDescriptor {
            kind,
            target: target.into(),
            args: Vec::new(),
            timeout_seconds: DEFAULT_TIMEOUT_SECONDS,
            token_env: None,
            retries: 0,
        }
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_seconds.max(1))
    }

    /// Resolves a relative `command`/`replay` target against `base`.
    pub fn resolve_against(&mut self, base: &Path) {
        if matches!(self.kind, BackendKind::Command | BackendKind::Replay) {
            let p = Path::new(&self.target);
            if p.is_relative() && (self.kind == BackendKind::Replay || p.components().count() > 1) {
                self.target = base.join(p).display().to_string();
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneratorRequest {
    /// Stable identifier of the problem, used to key recordings.
    pub key: String,
    pub prompt: String,
    pub sample_count: usize,
    pub temperature: f64,
    pub max_tokens: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub responses: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerificationRequest {
    pub context_id: String,
    pub statement_text: String,
    pub proof_text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerificationResult {
    pub compiled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ProofTrace>,
    #[serde(default)]
    pub diagnostic_text: String,
    /// Set when a replay recording had no entry for the request.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unknown: bool,
}

impl VerificationResult {
    pub fn failed(diagnostic: impl Into<String>) -> Self {
        VerificationResult {
            compiled: false,
            trace: None,
            diagnostic_text: diagnostic.into(),
            unknown: false,
        }
    }

    /// A failed compilation never carries a trace.
    fn normalized(mut self) -> Self {
        if !self.compiled {
            self.trace = None;
        }
        self
    }
}

pub trait Generator: Send + Sync {
    /// Raw responses; may return fewer or more than requested.
    fn sample(&self, request: &GeneratorRequest) -> Result<Vec<String>, AdapterError>;
}

pub trait Verifier: Send + Sync {
    fn check(&self, request: &VerificationRequest) -> Result<VerificationResult, AdapterError>;
}

/// Exactly `sampleCount` responses. Timeouts and unreachable backends turn
/// into empty (non-compiling) samples; protocol violations are errors.
pub fn generate(generator: &dyn Generator, request: &GeneratorRequest) -> Result<Vec<String>, AdapterError> {
    let mut texts = match generator.sample(request) {
        Ok(texts) => texts,
        Err(AdapterError::Unavailable { backend, message }) => {
            warn!("{}: generation failed on {backend}: {message}", request.key);
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    texts.resize(request.sample_count, String::new());
    Ok(texts)
}

/// Replay lookups that miss come back `unknown` and non-compiling.
pub fn verify(verifier: &dyn Verifier, request: &VerificationRequest) -> Result<VerificationResult, AdapterError> {
    match verifier.check(request) {
        Ok(r) => Ok(r.normalized()),
        Err(AdapterError::Unavailable { backend, message }) => {
            warn!("{}: verification failed on {backend}: {message}", request.context_id);
            Ok(VerificationResult::failed(format!("verifier unavailable: {message}")))
        }
        Err(e) => Err(e),
    }
}

fn excerpt(text: &str) -> String {
    text.chars().take(EXCERPT_CHARS).collect()
}

fn protocol<T: DeserializeOwned>(backend: &str, payload: &str) -> Result<T, AdapterError> {
    serde_json::from_str(payload).map_err(|e| AdapterError::Protocol {
        backend: backend.to_string(),
        message: e.to_string(),
        excerpt: excerpt(payload),
    })
}

fn with_retries<T>(retries: u32, mut call: impl FnMut() -> Result<T, AdapterError>) -> Result<T, AdapterError> {
    let mut attempt = 0;
    loop {
        match call() {
            Err(AdapterError::Unavailable { backend, message }) if attempt < retries => {
                warn!("{backend}: {message}; retrying");
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Runs `target [args..] <mode>` with the request on standard input and
/// returns standard output.
struct CommandBackend {
    descriptor: BackendDescriptor,
}

impl CommandBackend {
    fn call(&self, mode: &str, input: &str) -> Result<String, AdapterError> {
        let d = &self.descriptor;
        let unavailable = |message: String| AdapterError::Unavailable {
            backend: d.target.clone(),
            message,
        };
        let mut child = Command::new(&d.target)
            .args(&d.args)
            .arg(mode)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| unavailable(format!("cannot start: {e}")))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let input = input.to_string();
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });
        let mut stderr = child.stderr.take().expect("piped stderr");
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        let status = match child.wait_timeout(d.timeout()) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(unavailable(format!("timed out after {}s", d.timeout_seconds)));
            }
            Err(e) => return Err(unavailable(e.to_string())),
        };
        let _ = writer.join();
        let out = reader
            .join()
            .expect("reader thread")
            .map_err(|e| unavailable(format!("reading output: {e}")))?;
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(unavailable(format!("exited with {status}: {}", excerpt(err.trim()))));
        }
        Ok(out)
    }
}

impl Generator for CommandBackend {
    fn sample(&self, request: &GeneratorRequest) -> Result<Vec<String>, AdapterError> {
        let input = serde_json::to_string(request).expect("serializable request");
        let out = with_retries(self.descriptor.retries, || self.call("generate", &input))?;
        Ok(protocol::<GeneratorResponse>(&self.descriptor.target, &out)?.responses)
    }
}

impl Verifier for CommandBackend {
    fn check(&self, request: &VerificationRequest) -> Result<VerificationResult, AdapterError> {
        let input = serde_json::to_string(request).expect("serializable request");
        let out = with_retries(self.descriptor.retries, || self.call("verify", &input))?;
        protocol(&self.descriptor.target, &out)
    }
}

/// Single POST endpoint with JSON in and out.
struct HttpBackend {
    descriptor: BackendDescriptor,
    agent: ureq::Agent,
    token: Option<String>,
}

impl HttpBackend {
    fn new(descriptor: BackendDescriptor) -> Result<Self, AdapterError> {
        let token = match &descriptor.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                AdapterError::Config(format!("token variable `{var}` is not set"))
            })?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(descriptor.timeout()))
            .build()
            .into();
        Ok(HttpBackend {
            descriptor,
            agent,
            token,
        })
    }

    fn post<T: Serialize>(&self, body: &T) -> Result<String, AdapterError> {
        let url = &self.descriptor.target;
        with_retries(self.descriptor.retries, || {
            let mut req = self.agent.post(url).header("Content-Type", "application/json");
            if let Some(t) = &self.token {
                req = req.header("Authorization", &format!("Bearer {t}"));
            }
            let payload = serde_json::to_string(body).expect("serializable request");
            let mut resp = req.send(payload.as_str()).map_err(|e| AdapterError::Unavailable {
                backend: url.clone(),
                message: e.to_string(),
            })?;
            resp.body_mut().read_to_string().map_err(|e| AdapterError::Unavailable {
                backend: url.clone(),
                message: format!("reading body: {e}"),
            })
        })
    }
}

impl Generator for HttpBackend {
    fn sample(&self, request: &GeneratorRequest) -> Result<Vec<String>, AdapterError> {
        let out = self.post(request)?;
        Ok(protocol::<GeneratorResponse>(&self.descriptor.target, &out)?.responses)
    }
}

impl Verifier for HttpBackend {
    fn check(&self, request: &VerificationRequest) -> Result<VerificationResult, AdapterError> {
        let out = self.post(request)?;
        protocol(&self.descriptor.target, &out)
    }
}

/// One recorded generation: the responses for a request key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub key: String,
    pub responses: Vec<String>,
}

pub struct ReplayGenerator {
    responses: HashMap<String, Vec<String>>,
}

impl ReplayGenerator {
    pub fn from_records(records: Vec<GenerationRecord>) -> Self {
        let mut responses = HashMap::new();
        for r in records {
            responses.insert(r.key, r.responses);
        }
        ReplayGenerator { responses }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AdapterError> {
        Ok(Self::from_records(read_jsonl(path)?))
    }
}

impl Generator for ReplayGenerator {
    fn sample(&self, request: &GeneratorRequest) -> Result<Vec<String>, AdapterError> {
        match self.responses.get(&request.key) {
            Some(r) => Ok(r.iter().take(request.sample_count).cloned().collect()),
            None => {
                warn!("{}: no recorded generation; using empty samples", request.key);
                Ok(Vec::new())
            }
        }
    }
}

/// Answers every sample with the prompt's current proof unchanged.
pub struct EchoGenerator;

impl Generator for EchoGenerator {
    fn sample(&self, request: &GeneratorRequest) -> Result<Vec<String>, AdapterError> {
        let open = "<CURRENT>";
        let close = "</CURRENT>";
        let start = request.prompt.rfind(open).map(|i| i + open.len());
        let body = start.and_then(|s| request.prompt[s..].find(close).map(|e| &request.prompt[s..s + e]));
        let Some(body) = body else {
            return Err(AdapterError::Protocol {
                backend: "echo".into(),
                message: "prompt has no <CURRENT> block".into(),
                excerpt: excerpt(&request.prompt),
            });
        };
        let text = format!("<IMPROVED>\n{}\n</IMPROVED>", unescape_payload(body.trim_matches('\n')));
        Ok(vec![text; request.sample_count])
    }
}

/// Appends every generation made through `inner` to a replay file.
pub struct RecordingGenerator<G> {
    inner: G,
    path: PathBuf,
    lock: Mutex<()>,
}

impl<G: Generator> RecordingGenerator<G> {
    pub fn new(inner: G, path: impl Into<PathBuf>) -> Self {
        RecordingGenerator {
            inner,
            path: path.into(),
            lock: Mutex::new(()),
        }
    }
}

impl<G: Generator> Generator for RecordingGenerator<G> {
    fn sample(&self, request: &GeneratorRequest) -> Result<Vec<String>, AdapterError> {
        let responses = self.inner.sample(request)?;
        let line = serde_json::to_string(&GenerationRecord {
            key: request.key.clone(),
            responses: responses.clone(),
        })
        .expect("serializable record");
        let _guard = self.lock.lock().expect("recording lock");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| IoError::io(&self.path, e))?;
        writeln!(f, "{line}").map_err(|e| IoError::io(&self.path, e))?;
        Ok(responses)
    }
}

/// Hash of the whitespace-normalized proof text.
pub fn proof_hash(proof_text: &str) -> String {
    hash_canonical(normalize_proof_text(proof_text).as_bytes()).to_hex()
}

/// One recorded verification. Either `proofHash` or `proofText` identifies
/// the proof.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerificationRecord {
    pub context_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof_text: Option<String>,
    #[serde(flatten)]
    pub result: VerificationResult,
}

pub struct ReplayVerifier {
    results: HashMap<(String, String), VerificationResult>,
}

impl ReplayVerifier {
    pub fn from_records(records: Vec<VerificationRecord>) -> Result<Self, AdapterError> {
        let mut results = HashMap::new();
        for r in records {
            let hash = match (&r.proof_hash, &r.proof_text) {
                (Some(h), _) => h.clone(),
                (None, Some(t)) => proof_hash(t),
                (None, None) => {
                    return Err(AdapterError::Config(format!(
                        "verification record for `{}` has neither proofHash nor proofText",
                        r.context_id
                    )))
                }
            };
            results.insert((r.context_id, hash), r.result);
        }
        Ok(ReplayVerifier { results })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AdapterError> {
        Self::from_records(read_jsonl(path)?)
    }
}

impl Verifier for ReplayVerifier {
    fn check(&self, request: &VerificationRequest) -> Result<VerificationResult, AdapterError> {
        let key = (request.context_id.clone(), proof_hash(&request.proof_text));
        match self.results.get(&key) {
            Some(r) => Ok(r.clone()),
            None => {
                warn!("{}: no recorded verification for proof {}", request.context_id, key.1);
                Ok(VerificationResult {
                    unknown: true,
                    ..VerificationResult::failed("unknown: no recorded verification")
                })
            }
        }
    }
}

pub fn open_generator(descriptor: &BackendDescriptor) -> Result<Box<dyn Generator>, AdapterError> {
    Ok(match descriptor.kind {
        BackendKind::Command => Box::new(CommandBackend {
            descriptor: descriptor.clone(),
        }),
        BackendKind::Http => Box::new(HttpBackend::new(descriptor.clone())?),
        BackendKind::Replay => Box::new(ReplayGenerator::load(&descriptor.target)?),
        BackendKind::Echo => Box::new(EchoGenerator),
    })
}

pub fn open_verifier(descriptor: &BackendDescriptor) -> Result<Box<dyn Verifier>, AdapterError> {
    Ok(match descriptor.kind {
        BackendKind::Command => Box::new(CommandBackend {
            descriptor: descriptor.clone(),
        }),
        BackendKind::Http => Box::new(HttpBackend::new(descriptor.clone())?),
        BackendKind::Replay => Box::new(ReplayVerifier::load(&descriptor.target)?),
        BackendKind::Echo => {
            return Err(AdapterError::Config("echo is a generator-only backend".into()));
        }
    })
}
