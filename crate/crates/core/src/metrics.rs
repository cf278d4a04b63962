//! Length, dependency and modularity metrics and the improvement score.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::{canonical_goal, CanonicalGoal, Digest};
use crate::context::LibraryIndex;
use crate::trace::{CandidateProof, TheoremRecord};
use crate::tree::{build_tree, subtree_size, ProofTree, SpawnedRoot, TreeError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("candidate {0} has no trace; only the length metric can be approximated from text")]
    MissingTrace(usize),
    #[error("the dependency metric needs a library index")]
    MissingIndex,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("goal `{0}` referenced by the proof tree is missing from the record")]
    MissingGoal(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "length")]
    Length,
    #[serde(rename = "dep", alias = "dependencies", alias = "dependency")]
    Dependencies,
    #[serde(rename = "mod", alias = "modularity")]
    Modularity,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Length, MetricKind::Dependencies, MetricKind::Modularity];

    pub fn short_name(self) -> &'static str {
        match self {
            MetricKind::Length => "length",
            MetricKind::Dependencies => "dep",
            MetricKind::Modularity => "mod",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "length" | "len" => Ok(MetricKind::Length),
            "dep" | "deps" | "dependency" | "dependencies" => Ok(MetricKind::Dependencies),
            "mod" | "modularity" => Ok(MetricKind::Modularity),
            other => Err(format!("unknown metric `{other}` (expected length|dep|mod)")),
        }
    }
}

/// `-n` without producing negative zero.
fn negated_count(n: usize) -> f64 {
    0.0 - n as f64
}

/// Negative tactic count.
pub fn metric_length(record: &TheoremRecord) -> f64 {
    negated_count(record.steps.len())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DependencyReport {
    pub dependencies: BTreeSet<String>,
    /// Theorem-like names declared in the theorem's own module.
    pub local: BTreeSet<String>,
    /// Names the proof mentions that the index cannot resolve.
    pub unresolved: BTreeSet<String>,
}

/// Theorem-like declarations named in the proof, excluding the theorem itself
/// and, when the theorem is indexed, lemmas from its own module.
pub fn dependency_report(record: &TheoremRecord, index: &LibraryIndex) -> DependencyReport {
    let mut report = DependencyReport::default();
    let home = index.get(&record.theorem_name).map(|d| d.module.as_str());
    for name in record.steps.iter().flat_map(|s| &s.referenced_decl_names) {
        if name == &record.theorem_name {
            continue;
        }
        match index.get(name) {
            Some(d) if d.kind.is_theorem_like() && home == Some(d.module.as_str()) => {
                report.local.insert(name.clone());
            }
            Some(d) if d.kind.is_theorem_like() => {
                report.dependencies.insert(name.clone());
            }
            Some(_) => {}
            None => {
                report.unresolved.insert(name.clone());
            }
        }
    }
    report
}

/// Negative count of distinct theorems/lemmas named in the proof.
pub fn metric_dependencies(record: &TheoremRecord, index: &LibraryIndex) -> f64 {
    negated_count(dependency_report(record, index).dependencies.len())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModularityReport {
    pub spawned_root_count: usize,
    pub after_duplicate_filter: usize,
    pub after_wrapper_filter: usize,
    pub after_triviality_filter: usize,
    pub effective_goals: BTreeSet<String>,
    pub score: usize,
}

impl ModularityReport {
    fn assert_monotone(&self) {
        assert!(
            self.score == self.effective_goals.len()
                && self.score <= self.after_triviality_filter
                && self.after_triviality_filter <= self.after_wrapper_filter
                && self.after_wrapper_filter <= self.after_duplicate_filter
                && self.after_duplicate_filter <= self.spawned_root_count,
            "modularity stage counts must be non-increasing: {self:?}"
        );
    }
}

/// Least fixed point of the effectiveness operator over `candidates`.
///
/// A candidate becomes effective once a hypothesis its spawning step
/// introduced is referenced by a step outside every spawned subtree, or inside
/// the subtree of a different candidate that is already effective.
pub fn effective_spawned(
    tree: &ProofTree,
    record: &TheoremRecord,
    candidates: &[SpawnedRoot],
) -> BTreeSet<String> {
    let subtree_of = |root: &SpawnedRoot| tree.subtree_steps(root.root_step);
    let mut inside_any: BTreeSet<usize> = BTreeSet::new();
    for r in &tree.spawned_roots {
        inside_any.extend(subtree_of(r));
    }
    let step = |i: usize| &record.steps[i - 1];
    let outside_refs: HashSet<&str> = (1..=record.steps.len())
        .filter(|i| !inside_any.contains(i))
        .flat_map(|i| step(i).referenced_hyp_names.iter().map(String::as_str))
        .collect();
    let intro: Vec<&BTreeSet<String>> = candidates
        .iter()
        .map(|c| &step(c.spawning_step).introduced_hyp_names)
        .collect();
    let subtree_refs: Vec<HashSet<&str>> = candidates
        .iter()
        .map(|c| {
            subtree_of(c)
                .into_iter()
                .flat_map(|i| step(i).referenced_hyp_names.iter().map(String::as_str))
                .collect()
        })
        .collect();

    let mut effective = vec![false; candidates.len()];
    loop {
        let mut changed = false;
        for g in 0..candidates.len() {
            if effective[g] {
                continue;
            }
            let used_outside = intro[g].iter().any(|h| outside_refs.contains(h.as_str()));
            let used_in_effective = (0..candidates.len())
                .filter(|&o| o != g && effective[o])
                .any(|o| intro[g].iter().any(|h| subtree_refs[o].contains(h.as_str())));
            if used_outside || used_in_effective {
                effective[g] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    candidates
        .iter()
        .zip(effective)
        .filter(|(_, e)| *e)
        .map(|(c, _)| c.goal_id.clone())
        .collect()
}

fn canonical(record: &TheoremRecord, id: &str) -> Result<CanonicalGoal, MetricError> {
    record
        .goal(id)
        .map(canonical_goal)
        .ok_or_else(|| MetricError::MissingGoal(id.to_string()))
}

#[derive(Default)]
struct SeenGoals {
    ids: HashSet<String>,
    variants: HashSet<Digest>,
}

impl SeenGoals {
    fn note(&mut self, record: &TheoremRecord, id: &str) -> Result<(), MetricError> {
        if self.ids.insert(id.to_string()) {
            self.variants.extend(canonical(record, id)?.sequent_variant_hashes);
        }
        Ok(())
    }
}

/// Counts effective spawned goals after the duplicate, wrapper and
/// triviality filters.
pub fn metric_modularity(record: &TheoremRecord) -> Result<(f64, ModularityReport), MetricError> {
    let tree = build_tree(record)?;
    let roots = &tree.spawned_roots;

    // Duplicate filter: walk the proof in step order, comparing each spawned
    // root against every goal seen before it first appeared.
    let mut seen = SeenGoals::default();
    let mut after_dup: Vec<&SpawnedRoot> = Vec::new();
    for step in &record.steps {
        for g in &step.goals_before {
            seen.note(record, g)?;
        }
        seen.note(record, &step.focused_goal_id)?;
        for root in roots.iter().filter(|r| r.spawning_step == step.index) {
            let cg = canonical(record, &root.goal_id)?;
            if !cg.sequent_variant_hashes.iter().any(|d| seen.variants.contains(d)) {
                after_dup.push(root);
            }
            seen.note(record, &root.goal_id)?;
        }
        for g in &step.new_goal_ids {
            seen.note(record, g)?;
        }
    }

    let mut after_wrapper = Vec::new();
    for root in after_dup.iter().copied() {
        let parent_id = &record.steps[root.spawning_step - 1].focused_goal_id;
        let parent = canonical(record, parent_id)?;
        if !canonical(record, &root.goal_id)?.is_wrapper_of(&parent) {
            after_wrapper.push(root);
        }
    }

    let after_trivial: Vec<SpawnedRoot> = after_wrapper
        .iter()
        .filter(|r| subtree_size(&tree, r.root_step) > 2)
        .map(|r| (*r).clone())
        .collect();

    let effective_goals = effective_spawned(&tree, record, &after_trivial);
    let report = ModularityReport {
        spawned_root_count: roots.len(),
        after_duplicate_filter: after_dup.len(),
        after_wrapper_filter: after_wrapper.len(),
        after_triviality_filter: after_trivial.len(),
        score: effective_goals.len(),
        effective_goals,
    };
    report.assert_monotone();
    Ok((report.score as f64, report))
}

/// Metric value of a fully traced record.
pub fn metric_value(
    kind: MetricKind,
    record: &TheoremRecord,
    index: Option<&LibraryIndex>,
) -> Result<f64, MetricError> {
    match kind {
        MetricKind::Length => Ok(metric_length(record)),
        MetricKind::Dependencies => Ok(metric_dependencies(record, index.ok_or(MetricError::MissingIndex)?)),
        MetricKind::Modularity => metric_modularity(record).map(|(v, _)| v),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredCandidate {
    pub metric_value: f64,
    pub improvement: f64,
    /// Set when the length was estimated from the proof text.
    pub approximate: bool,
}

/// `μ(candidate) − μ(baseline)`.
pub fn improvement_score(
    kind: MetricKind,
    baseline: &TheoremRecord,
    candidate: &CandidateProof,
    index: Option<&LibraryIndex>,
) -> Result<ScoredCandidate, MetricError> {
    let base = metric_value(kind, baseline, index)?;
    let (value, approximate) = match &candidate.trace {
        Some(trace) => {
            let rec = baseline.with_proof(&candidate.proof_text, trace);
            (metric_value(kind, &rec, index)?, false)
        }
        None if kind == MetricKind::Length => {
            (negated_count(approximate_tactic_count(&candidate.proof_text)), true)
        }
        None => return Err(MetricError::MissingTrace(candidate.candidate_index)),
    };
    Ok(ScoredCandidate {
        metric_value: value,
        improvement: value - base,
        approximate,
    })
}

/// Rough tactic count from source text: the body after the first `by`,
/// split at top-level newlines, `;` and `<;>`, ignoring comments, bullets and
/// lines continuing an open bracket.
pub fn approximate_tactic_count(proof_text: &str) -> usize {
    let body = match proof_text.find(":= by") {
        Some(i) => &proof_text[i + 5..],
        None => proof_text,
    };
    let mut count = 0;
    let mut depth: i32 = 0;
    let mut fragment_has_code = false;
    let mut chars = body.chars().peekable();
    let mut in_line_comment = false;
    let mut block_comment = 0;
    let flush = |has: &mut bool, count: &mut usize| {
        if *has {
            *count += 1;
        }
        *has = false;
    };
    while let Some(c) = chars.next() {
        if in_line_comment {
            if c == '\n' {
                in_line_comment = false;
                if depth == 0 {
                    flush(&mut fragment_has_code, &mut count);
                }
            }
            continue;
        }
        if block_comment > 0 {
            if c == '-' && chars.peek() == Some(&'/') {
                chars.next();
                block_comment -= 1;
            } else if c == '/' && chars.peek() == Some(&'-') {
                chars.next();
                block_comment += 1;
            }
            continue;
        }
        match c {
            '-' if chars.peek() == Some(&'-') => in_line_comment = true,
            '/' if chars.peek() == Some(&'-') => {
                chars.next();
                block_comment += 1;
            }
            '(' | '[' | '{' | '⟨' => {
                depth += 1;
                fragment_has_code = true;
            }
            ')' | ']' | '}' | '⟩' => depth = (depth - 1).max(0),
            '\n' | ';' if depth == 0 => flush(&mut fragment_has_code, &mut count),
            '<' if depth == 0 && chars.peek() == Some(&';') => {
                chars.next();
                if chars.peek() == Some(&'>') {
                    chars.next();
                }
                flush(&mut fragment_has_code, &mut count);
            }
            '·' | '.' if !fragment_has_code => {}
            c if c.is_whitespace() => {}
            _ => {
                // a line that only continues the previous tactic's arguments
                fragment_has_code = true;
            }
        }
    }
    flush(&mut fragment_has_code, &mut count);
    count
}
