//! Shared inputs for the benchmarks.

use std::path::{Path, PathBuf};

use improver_core::eval::Outcome;
use improver_core::pipeline::{BufferConfig, FilteredEntry, ProblemEntry, ProblemInfo, ReplayMode};
use improver_core::trace::{parse_trace_file, CandidateProof, Term, TheoremRecord};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn showcase_originals() -> Vec<TheoremRecord> {
    parse_trace_file(fixtures().join("showcase/originals.jsonl")).expect("showcase fixtures parse")
}

pub fn corpus() -> Vec<TheoremRecord> {
    parse_trace_file(fixtures().join("corpus/traces.jsonl")).expect("corpus parses")
}

/// Right-nested chain of `depth` binders over an application spine.
pub fn nested_term(depth: u32) -> Term {
    let mut t = Term::app(
        Term::constant("Eq"),
        (0..depth).map(|i| Term::app(Term::constant("f"), vec![Term::bvar(i), Term::fvar("x")])).collect(),
    );
    for i in 0..depth {
        t = Term::forall(format!("a{i}"), Term::constant("Nat"), t);
    }
    t
}

/// Deterministic outcome list with a mix of failing, unscoreable and scored entries.
pub fn outcomes(n: usize) -> Vec<Outcome> {
    (0..n)
        .map(|i| Outcome {
            verified: i % 5 != 0,
            score: (i % 7 != 0).then_some((i % 11) as f64 - 4.0),
        })
        .collect()
}

pub fn buffer() -> BufferConfig {
    BufferConfig {
        rho: 0.25,
        mode: ReplayMode::Join,
        pi_max: 0.9,
        gamma: 0.5,
        winners: 4,
        losers: 4,
        seed: 17,
    }
}

fn info(name: &str) -> ProblemInfo {
    ProblemInfo {
        theorem_name: name.into(),
        project_name: "bench".into(),
        context_id: "ctx".into(),
        statement_text: format!("theorem {name} : P"),
        original_proof_text: format!("theorem {name} : P := by\n  rfl"),
    }
}

fn candidate(i: usize, problem: usize) -> CandidateProof {
    let mut c = CandidateProof::new(i, format!("proof {problem} {i}"));
    c.verified = Some(!i.is_multiple_of(3));
    c.improvement_score = Some(((i * 7 + problem) % 9) as f64 - 3.0);
    c.metric_value = c.improvement_score;
    c
}

pub fn entries(problems: usize, candidates: usize) -> Vec<ProblemEntry> {
    (0..problems)
        .map(|p| ProblemEntry::new(info(&format!("p{p}")), (0..candidates).map(|i| candidate(i, p)).collect()))
        .collect()
}

pub fn filtered(problems: usize, candidates: usize) -> Vec<FilteredEntry> {
    entries(problems, candidates)
        .into_iter()
        .map(|e| {
            let (winners, losers) = e
                .candidates
                .iter()
                .cloned()
                .partition(|c| c.is_verified() && c.score().is_some_and(|s| s > 1.0));
            FilteredEntry {
                problem: e.problem,
                winners,
                losers,
                threshold: 1.0,
            }
        })
        .collect()
}
