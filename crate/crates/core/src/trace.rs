//! Proof-trace data model and the line-delimited JSON trace format.
//!
//! A trace file holds one [`TheoremRecord`] per line. Every record carries
//! `"schema": "improver2-trace/1"`. Terms are nested tagged objects, see
//! `docs/trace-format.md`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRACE_SCHEMA: &str = "improver2-trace/1";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: record `{theorem}` is invalid: {violations:?}")]
    Invalid {
        line: usize,
        theorem: String,
        violations: Vec<String>,
    },
    #[error("line {line}: duplicate theorem name `{theorem}` (first seen on line {first})")]
    Duplicate {
        line: usize,
        first: usize,
        theorem: String,
    },
}

/// A pre-normalized term. Bound variables use de Bruijn indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "k")]
pub enum Term {
    #[serde(rename = "const")]
    Const { name: String },
    #[serde(rename = "bvar")]
    BoundVar { idx: u32 },
    #[serde(rename = "fvar")]
    FreeVar { name: String },
    #[serde(rename = "meta")]
    Meta { id: String },
    #[serde(rename = "sort")]
    Sort { level: String },
    #[serde(rename = "app")]
    App {
        #[serde(rename = "fn")]
        func: Box<Term>,
        args: Vec<Term>,
    },
    #[serde(rename = "lam")]
    Lambda {
        name: String,
        #[serde(rename = "type")]
        binder_type: Box<Term>,
        body: Box<Term>,
    },
    #[serde(rename = "forall")]
    Forall {
        name: String,
        #[serde(rename = "type")]
        binder_type: Box<Term>,
        body: Box<Term>,
    },
}

impl Term {
    pub fn constant(name: impl Into<String>) -> Self {
        Term::Const { name: name.into() }
    }

    pub fn bvar(idx: u32) -> Self {
        Term::BoundVar { idx }
    }

    pub fn fvar(name: impl Into<String>) -> Self {
        Term::FreeVar { name: name.into() }
    }

    pub fn meta(id: impl Into<String>) -> Self {
        Term::Meta { id: id.into() }
    }

    pub fn sort(level: impl Into<String>) -> Self {
        Term::Sort {
            level: level.into(),
        }
    }

    pub fn app(func: Term, args: Vec<Term>) -> Self {
        Term::App {
            func: Box::new(func),
            args,
        }
    }

    pub fn lambda(name: impl Into<String>, binder_type: Term, body: Term) -> Self {
        Term::Lambda {
            name: name.into(),
            binder_type: Box::new(binder_type),
            body: Box::new(body),
        }
    }

    pub fn forall(name: impl Into<String>, binder_type: Term, body: Term) -> Self {
        Term::Forall {
            name: name.into(),
            binder_type: Box::new(binder_type),
            body: Box::new(body),
        }
    }

    /// Non-dependent `Forall`, i.e. `a → b`.
    pub fn arrow(a: Term, b: Term) -> Self {
        Term::forall("_", a, b)
    }

    /// True when bound variable `idx` (relative to this term's root) occurs.
    pub fn has_loose_bvar(&self, idx: u32) -> bool {
        match self {
            Term::BoundVar { idx: i } => *i == idx,
            Term::App { func, args } => {
                func.has_loose_bvar(idx) || args.iter().any(|a| a.has_loose_bvar(idx))
            }
            Term::Lambda {
                binder_type, body, ..
            }
            | Term::Forall {
                binder_type, body, ..
            } => binder_type.has_loose_bvar(idx) || body.has_loose_bvar(idx + 1),
            _ => false,
        }
    }

    /// Substitute `value` (a closed term) for bound variable 0 and lower the
    /// remaining loose indices by one.
    pub fn instantiate(&self, value: &Term) -> Term {
        self.instantiate_at(0, value)
    }

    fn instantiate_at(&self, depth: u32, value: &Term) -> Term {
        match self {
            Term::BoundVar { idx } if *idx == depth => value.clone(),
            Term::BoundVar { idx } if *idx > depth => Term::bvar(idx - 1),
            Term::App { func, args } => Term::App {
                func: Box::new(func.instantiate_at(depth, value)),
                args: args.iter().map(|a| a.instantiate_at(depth, value)).collect(),
            },
            Term::Lambda {
                name,
                binder_type,
                body,
            } => Term::Lambda {
                name: name.clone(),
                binder_type: Box::new(binder_type.instantiate_at(depth, value)),
                body: Box::new(body.instantiate_at(depth + 1, value)),
            },
            Term::Forall {
                name,
                binder_type,
                body,
            } => Term::Forall {
                name: name.clone(),
                binder_type: Box::new(binder_type.instantiate_at(depth, value)),
                body: Box::new(body.instantiate_at(depth + 1, value)),
            },
            other => other.clone(),
        }
    }

    /// Checks the structural invariants: de Bruijn indices in range and
    /// non-empty application spines. `depth` is the number of enclosing binders.
    pub fn check(&self, depth: u32) -> Result<(), String> {
        match self {
            Term::BoundVar { idx } if *idx >= depth => Err(format!(
                "bound variable #{idx} escapes its {depth} enclosing binder(s)"
            )),
            Term::App { args, .. } if args.is_empty() => {
                Err("application with empty argument list".to_string())
            }
            Term::App { func, args } => {
                func.check(depth)?;
                args.iter().try_for_each(|a| a.check(depth))
            }
            Term::Lambda {
                binder_type, body, ..
            }
            | Term::Forall {
                binder_type, body, ..
            } => {
                binder_type.check(depth)?;
                body.check(depth + 1)
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Hypothesis {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: Term,
    pub proof_relevant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Goal {
    pub id: String,
    pub target: Term,
    #[serde(default)]
    pub hypotheses: Vec<Hypothesis>,
}

/// Byte range of a tactic inside the record's proof text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TacticStep {
    pub index: usize,
    pub tactic_text: String,
    pub focused_goal_id: String,
    #[serde(default)]
    pub goals_before: Vec<String>,
    #[serde(default)]
    pub goals_after: Vec<String>,
    #[serde(default)]
    pub child_goal_ids: Vec<String>,
    #[serde(default)]
    pub new_goal_ids: Vec<String>,
    #[serde(default)]
    pub referenced_hyp_names: BTreeSet<String>,
    #[serde(default)]
    pub referenced_decl_names: BTreeSet<String>,
    #[serde(default)]
    pub introduced_hyp_names: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<Span>,
}

/// Goals and steps of one elaborated proof.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProofTrace {
    #[serde(with = "goal_map")]
    pub goals: BTreeMap<String, Goal>,
    pub steps: Vec<TacticStep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TheoremRecord {
    pub schema: String,
    pub theorem_name: String,
    pub project_name: String,
    pub context_id: String,
    pub statement_text: String,
    /// Complete declaration text: statement followed by the proof.
    pub original_proof_text: String,
    #[serde(default)]
    pub statement_ref_names: BTreeSet<String>,
    #[serde(with = "goal_map")]
    pub goals: BTreeMap<String, Goal>,
    pub steps: Vec<TacticStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informal_statement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informal_proof: Option<String>,
}

impl TheoremRecord {
    pub fn trace(&self) -> ProofTrace {
        ProofTrace {
            goals: self.goals.clone(),
            steps: self.steps.clone(),
        }
    }

    /// The same theorem with its proof replaced by another elaborated proof.
    pub fn with_proof(&self, proof_text: &str, trace: &ProofTrace) -> TheoremRecord {
        TheoremRecord {
            original_proof_text: proof_text.to_string(),
            goals: trace.goals.clone(),
            steps: trace.steps.clone(),
            ..self.clone()
        }
    }

    pub fn goal(&self, id: &str) -> Option<&Goal> {
        self.goals.get(id)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records always serialize")
    }
}

/// Score attached to a candidate. `Unscoreable` marks candidates that never
/// produced a trace; it is never stored as a float.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CandidateProof {
    pub candidate_index: usize,
    pub proof_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improvement_score: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unscoreable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ProofTrace>,
}

impl CandidateProof {
    pub fn new(candidate_index: usize, proof_text: impl Into<String>) -> Self {
        CandidateProof {
            candidate_index,
            proof_text: proof_text.into(),
            verified: None,
            metric_value: None,
            improvement_score: None,
            unscoreable: false,
            trace: None,
        }
    }

    pub fn is_verified(&self) -> bool {
        self.verified == Some(true)
    }

    /// Score usable for ranking; `None` for unscoreable candidates.
    pub fn score(&self) -> Option<f64> {
        if self.unscoreable {
            None
        } else {
            self.improvement_score
        }
    }

    pub fn is_improving(&self) -> bool {
        self.is_verified() && self.score().is_some_and(|s| s > 0.0)
    }

    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.improvement_score.is_some()
            && (self.metric_value.is_none() || self.verified.is_none())
        {
            out.push(format!(
                "candidate {}: improvementScore without metricValue/verified",
                self.candidate_index
            ));
        }
        if self.unscoreable && self.improvement_score.is_some() {
            out.push(format!(
                "candidate {}: unscoreable candidate carries a score",
                self.candidate_index
            ));
        }
        out
    }
}

/// Returns every invariant violation of `record`; empty iff valid.
pub fn validate_record(record: &TheoremRecord) -> Vec<String> {
    let mut out = Vec::new();
    if record.schema != TRACE_SCHEMA {
        out.push(format!(
            "schema: expected `{TRACE_SCHEMA}`, found `{}`",
            record.schema
        ));
    }
    validate_trace_into(&record.goals, &record.steps, &mut out);
    out
}

/// Invariants shared by theorem records and candidate traces.
pub fn validate_trace(trace: &ProofTrace) -> Vec<String> {
    let mut out = Vec::new();
    validate_trace_into(&trace.goals, &trace.steps, &mut out);
    out
}

fn validate_trace_into(
    goals: &BTreeMap<String, Goal>,
    steps: &[TacticStep],
    out: &mut Vec<String>,
) {
    if steps.is_empty() {
        out.push("steps: proof has no tactic steps".to_string());
    }
    for (key, goal) in goals {
        if key != &goal.id {
            out.push(format!("goals: key `{key}` holds goal `{}`", goal.id));
        }
        if let Err(e) = goal.target.check(0) {
            out.push(format!("goal {}: target: {e}", goal.id));
        }
        let mut names = HashSet::new();
        for h in &goal.hypotheses {
            if !names.insert(h.name.as_str()) {
                out.push(format!("goal {}: duplicate hypothesis `{}`", goal.id, h.name));
            }
            if let Err(e) = h.ty.check(0) {
                out.push(format!("goal {}: hypothesis {}: {e}", goal.id, h.name));
            }
        }
    }
    for (pos, step) in steps.iter().enumerate() {
        let i = step.index;
        if step.index != pos + 1 {
            out.push(format!(
                "step {i} index: expected {} (indices must be 1..T contiguous)",
                pos + 1
            ));
        }
        if !step.goals_before.contains(&step.focused_goal_id) {
            out.push(format!(
                "step {i} focus: goal `{}` is not in goalsBefore",
                step.focused_goal_id
            ));
        }
        if let Some(c) = step
            .child_goal_ids
            .iter()
            .find(|c| !step.new_goal_ids.contains(c))
        {
            out.push(format!(
                "step {i} childGoalIds: `{c}` is not among newGoalIds"
            ));
        }
        let referenced = std::iter::once(&step.focused_goal_id)
            .chain(&step.goals_before)
            .chain(&step.goals_after)
            .chain(&step.child_goal_ids)
            .chain(&step.new_goal_ids);
        let mut reported = HashSet::new();
        for g in referenced {
            if !goals.contains_key(g) && reported.insert(g) {
                out.push(format!("step {i} goals: unknown goal id `{g}`"));
            }
        }
    }
}

/// Parses a trace file. Records are returned in file order.
pub fn parse_trace_file(path: impl AsRef<Path>) -> Result<Vec<TheoremRecord>, TraceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace_str(&text)
}

pub fn parse_trace_str(text: &str) -> Result<Vec<TheoremRecord>, TraceError> {
    let mut records = Vec::new();
    let mut first_seen: BTreeMap<String, usize> = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| TraceError::Parse {
                line,
                message: e.to_string(),
            })?;
        match value.get("schema").and_then(|s| s.as_str()) {
            Some(TRACE_SCHEMA) => {}
            Some(other) => {
                return Err(TraceError::Parse {
                    line,
                    message: format!("field `schema`: unsupported version `{other}`"),
                })
            }
            None => {
                return Err(TraceError::Parse {
                    line,
                    message: "field `schema`: missing".to_string(),
                })
            }
        }
        let record: TheoremRecord = serde_path_json(value).map_err(|message| TraceError::Parse {
            line,
            message,
        })?;
        let violations = validate_record(&record);
        if !violations.is_empty() {
            return Err(TraceError::Invalid {
                line,
                theorem: record.theorem_name,
                violations,
            });
        }
        if let Some(&first) = first_seen.get(&record.theorem_name) {
            return Err(TraceError::Duplicate {
                line,
                first,
                theorem: record.theorem_name,
            });
        }
        first_seen.insert(record.theorem_name.clone(), line);
        records.push(record);
    }
    Ok(records)
}

/// Deserializes while reporting the offending field path.
fn serde_path_json<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T, String> {
    let text = value.to_string();
    let de = &mut serde_json::Deserializer::from_str(&text);
    T::deserialize(de).map_err(|e| {
        // serde_json reports the innermost missing/invalid field by name
        format!("field error: {e}")
    })
}

pub fn serialize_records(records: &[TheoremRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

/// Goals are stored on disk as a JSON array and in memory keyed by id.
mod goal_map {
    use super::Goal;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        goals: &BTreeMap<String, Goal>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let list: Vec<&Goal> = goals.values().collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<String, Goal>, D::Error> {
        let list = Vec::<Goal>::deserialize(d)?;
        let mut map = BTreeMap::new();
        for g in list {
            if map.contains_key(&g.id) {
                return Err(serde::de::Error::custom(format!(
                    "goals: duplicate goal id `{}`",
                    g.id
                )));
            }
            map.insert(g.id.clone(), g);
        }
        Ok(map)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    //! Small builders for hand-written traces in unit tests.
    use super::*;

    pub fn prop(name: &str) -> Term {
        Term::constant(name)
    }

    pub fn goal(id: &str, target: Term) -> Goal {
        Goal {
            id: id.to_string(),
            target,
            hypotheses: Vec::new(),
        }
    }

    pub fn goal_with(id: &str, hyps: &[(&str, Term)], target: Term) -> Goal {
        Goal {
            id: id.to_string(),
            target,
            hypotheses: hyps
                .iter()
                .map(|(n, t)| Hypothesis {
                    name: n.to_string(),
                    ty: t.clone(),
                    proof_relevant: true,
                })
                .collect(),
        }
    }

    /// Step builder; `goals_before` defaults to the focus, `goals_after` to
    /// the children.
    pub fn step(index: usize, tactic: &str, focus: &str, children: &[&str]) -> TacticStep {
        TacticStep {
            index,
            tactic_text: tactic.to_string(),
            focused_goal_id: focus.to_string(),
            goals_before: vec![focus.to_string()],
            goals_after: children.iter().map(|s| s.to_string()).collect(),
            child_goal_ids: children.iter().map(|s| s.to_string()).collect(),
            new_goal_ids: children.iter().map(|s| s.to_string()).collect(),
            referenced_hyp_names: BTreeSet::new(),
            referenced_decl_names: BTreeSet::new(),
            introduced_hyp_names: BTreeSet::new(),
            span: None,
        }
    }

    pub fn record(name: &str, goals: Vec<Goal>, steps: Vec<TacticStep>) -> TheoremRecord {
        TheoremRecord {
            schema: TRACE_SCHEMA.to_string(),
            theorem_name: name.to_string(),
            project_name: "test".to_string(),
            context_id: "ctx".to_string(),
            statement_text: format!("theorem {name} : P"),
            original_proof_text: format!("theorem {name} : P := by\n  rfl"),
            statement_ref_names: BTreeSet::new(),
            goals: goals.into_iter().map(|g| (g.id.clone(), g)).collect(),
            steps,
            informal_statement: None,
            informal_proof: None,
        }
    }

    pub fn rfl_record() -> TheoremRecord {
        record(
            "t",
            vec![goal("g0", prop("P"))],
            vec![step(1, "rfl", "g0", &[])],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input_parses_to_nothing() {
        assert!(parse_trace_str("").unwrap().is_empty());
        assert!(parse_trace_str("\n\n").unwrap().is_empty());
    }

    #[test]
    fn minimal_rfl_record_round_trips() {
        let rec = rfl_record();
        let parsed = parse_trace_str(&serialize_records(std::slice::from_ref(&rec))).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].steps.len(), 1);
        assert_eq!(parsed[0], rec);
        assert!(validate_record(&rec).is_empty());
    }

    #[test]
    fn term_json_uses_short_tags() {
        let t = Term::app(Term::constant("Eq"), vec![Term::fvar("a"), Term::bvar(0)]);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(
            json,
            r#"{"k":"app","fn":{"k":"const","name":"Eq"},"args":[{"k":"fvar","name":"a"},{"k":"bvar","idx":0}]}"#
        );
    }

    #[test]
    fn child_not_new_is_reported() {
        let mut rec = rfl_record();
        rec.goals.insert("g1".into(), goal("g1", prop("Q")));
        rec.steps[0].child_goal_ids = vec!["g1".into()];
        let v = validate_record(&rec);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].starts_with("step 1 childGoalIds"));
    }

    #[test]
    fn focus_outside_goals_before_is_reported() {
        let mut rec = record(
            "t",
            vec![goal("g0", prop("P")), goal("g1", prop("Q")), goal("g2", prop("R"))],
            vec![
                step(1, "constructor", "g0", &["g1", "g2"]),
                step(2, "exact a", "g1", &[]),
                step(3, "exact b", "g2", &[]),
            ],
        );
        assert!(validate_record(&rec).is_empty());
        rec.steps[2].goals_before = vec!["g1".into()];
        let v = validate_record(&rec);
        assert_eq!(v.len(), 1);
        assert!(v[0].starts_with("step 3 focus"), "{v:?}");
    }

    #[test]
    fn bad_terms_and_indices_are_reported() {
        let mut rec = rfl_record();
        rec.goals.get_mut("g0").unwrap().target = Term::lambda("x", prop("N"), Term::bvar(1));
        rec.steps[0].index = 2;
        let v = validate_record(&rec);
        assert_eq!(v.len(), 2, "{v:?}");
    }

    #[test]
    fn malformed_line_names_line_and_field() {
        let good = rfl_record().to_json_line();
        let bad = good.replace("\"focusedGoalId\"", "\"focusedGoal\"");
        let err = parse_trace_str(&format!("{good}\n{bad}\n")).unwrap_err();
        match err {
            TraceError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("focusedGoalId"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_trace_str("{not json").unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 1, .. }));
    }

    #[test]
    fn missing_or_wrong_schema_is_rejected() {
        let good = rfl_record().to_json_line();
        let wrong = good.replace(TRACE_SCHEMA, "improver2-trace/9");
        assert!(matches!(
            parse_trace_str(&wrong),
            Err(TraceError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_theorem_names_are_rejected() {
        let line = rfl_record().to_json_line();
        let err = parse_trace_str(&format!("{line}\n{line}\n")).unwrap_err();
        assert!(matches!(
            err,
            TraceError::Duplicate {
                line: 2,
                first: 1,
                ..
            }
        ));
    }

    #[test]
    fn instantiate_lowers_outer_indices() {
        // ∀ y, R #1 #0  under one outer binder; instantiate outer with c
        let body = Term::forall(
            "y",
            prop("N"),
            Term::app(prop("R"), vec![Term::bvar(1), Term::bvar(0)]),
        );
        let got = body.instantiate(&Term::fvar("c"));
        assert_eq!(
            got,
            Term::forall(
                "y",
                prop("N"),
                Term::app(prop("R"), vec![Term::fvar("c"), Term::bvar(0)])
            )
        );
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        let leaf = prop_oneof![
            "[a-z]{1,3}".prop_map(Term::constant),
            "[a-z]{1,3}".prop_map(Term::fvar),
            "[a-z]{1,2}".prop_map(Term::meta),
            "[0-2u]".prop_map(Term::sort),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                (inner.clone(), prop::collection::vec(inner.clone(), 1..3))
                    .prop_map(|(f, a)| Term::app(f, a)),
                ("[a-z]", inner.clone(), inner.clone())
                    .prop_map(|(n, t, b)| Term::forall(n, t, b)),
                ("[a-z]", inner.clone(), inner).prop_map(|(n, t, b)| Term::lambda(n, t, b)),
            ]
        })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(target in arb_term(), hyp in arb_term(), tactic in "[ -~]{0,20}") {
            let mut rec = rfl_record();
            rec.goals.insert("g0".into(), goal_with("g0", &[("h", hyp)], target));
            rec.steps[0].tactic_text = tactic;
            let parsed = parse_trace_str(&serialize_records(std::slice::from_ref(&rec))).unwrap();
            prop_assert_eq!(parsed.len(), 1);
            prop_assert!(validate_record(&parsed[0]).is_empty());
            prop_assert_eq!(&parsed[0], &rec);
        }
    }
}
