//! Prompt assembly: chain-of-states annotation, informalization and the
//! tagged generator prompt.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{serialize_slice, ContextSlice};
use crate::metrics::MetricKind;
use crate::trace::{Goal, TheoremRecord, Term};

pub const LENGTH_PROMPT: &str = include_str!("../../../prompts/length.txt");
pub const MODULARITY_PROMPT: &str = include_str!("../../../prompts/modularity.txt");
pub const DEPENDENCY_PROMPT: &str = include_str!("../../../prompts/dependency.txt");
pub const ANNOTATION_PROMPT: &str = include_str!("../../../prompts/annotation.txt");
pub const CONTEXT_PROMPT: &str = include_str!("../../../prompts/context.txt");
pub const EXAMPLES_PROMPT: &str = include_str!("../../../prompts/examples.txt");
pub const INFORMALIZE_TEMPLATE: &str = include_str!("../../../prompts/informalize.txt");

/// Placeholder in the informalization template replaced by the annotated proof.
pub const FORMAL_PLACEHOLDER: &str = "{{FORMAL}}";

/// Tag names reserved by the prompt protocol.
pub const RESERVED_TAGS: [&str; 10] = [
    "CONTEXT", "ITEM", "CURRENT", "ANNOTATED", "EXAMPLES", "FORMAL", "STATEMENT", "PROOF", "IMPROVED", "INFORMAL",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AugmentError {
    #[error("{theorem}: cannot locate step {step} (`{tactic}`) in the proof text")]
    Span {
        theorem: String,
        step: usize,
        tactic: String,
    },
    #[error("`{0}` augmentation is enabled but its input is missing")]
    MissingInput(&'static str),
    #[error("response has no <{0}> block")]
    MissingTag(&'static str),
}

static AMP_CHAIN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"&((?:amp;)*)lt;").unwrap());
static ESCAPED_CHAIN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"&((?:amp;)*)amp;lt;").unwrap());
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(&format!(r"<(/?(?:{})>)", RESERVED_TAGS.join("|"))).unwrap());
static ESCAPED_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"&lt;(/?(?:{})>)", RESERVED_TAGS.join("|"))).unwrap());
static COS_COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*/- goals:(?s:.*?) -/\n").unwrap());

/// Neutralizes reserved tags inside a payload: `<TAG>` becomes `&lt;TAG>`,
/// and any existing `&lt;` (or already escaped `&amp;…lt;`) gains one more
/// `amp;` so that [`unescape_payload`] is an exact inverse.
pub fn escape_payload(text: &str) -> String {
    let chained = AMP_CHAIN.replace_all(text, "&${1}amp;lt;");
    TAG.replace_all(&chained, "&lt;$1").into_owned()
}

pub fn unescape_payload(text: &str) -> String {
    let tags = ESCAPED_TAG.replace_all(text, "<$1");
    ESCAPED_CHAIN.replace_all(&tags, "&${1}lt;").into_owned()
}

fn infix(name: &str) -> Option<&'static str> {
    Some(match name {
        "Eq" => "=",
        "Ne" => "≠",
        "And" => "∧",
        "Or" => "∨",
        "Iff" => "↔",
        "HAdd.hAdd" => "+",
        "HSub.hSub" => "-",
        "HMul.hMul" => "*",
        "HDiv.hDiv" => "/",
        "HPow.hPow" => "^",
        "LT.lt" => "<",
        "LE.le" => "≤",
        "GT.gt" => ">",
        "GE.ge" => "≥",
        "Membership.mem" => "∈",
        "HasSubset.Subset" => "⊆",
        "Inter.inter" => "∩",
        "Union.union" => "∪",
        _ => return None,
    })
}

fn is_atomic(term: &Term) -> bool {
    match term {
        Term::Const { .. } | Term::BoundVar { .. } | Term::FreeVar { .. } | Term::Meta { .. } => true,
        Term::Sort { level } => level == "0",
        Term::App { func, args } => args.is_empty() && is_atomic(func),
        _ => false,
    }
}

fn pretty_into(term: &Term, binders: &mut Vec<String>, out: &mut String) {
    let arg = |t: &Term, binders: &mut Vec<String>, out: &mut String| {
        if is_atomic(t) {
            pretty_into(t, binders, out);
        } else {
            out.push('(');
            pretty_into(t, binders, out);
            out.push(')');
        }
    };
    match term {
        Term::Const { name } | Term::FreeVar { name } => out.push_str(name),
        Term::BoundVar { idx } => match binders.len().checked_sub(*idx as usize + 1) {
            Some(i) => out.push_str(&binders[i]),
            None => out.push_str(&format!("#{idx}")),
        },
        Term::Meta { id } => {
            out.push('?');
            out.push_str(id);
        }
        Term::Sort { level } => match level.as_str() {
            "0" => out.push_str("Prop"),
            "1" => out.push_str("Type"),
            l => out.push_str(&format!("Sort {l}")),
        },
        Term::App { func, args } => {
            if let Term::Const { name } = func.as_ref() {
                if let (Some(op), true) = (infix(name), args.len() >= 2) {
                    arg(&args[args.len() - 2], binders, out);
                    out.push_str(&format!(" {op} "));
                    arg(&args[args.len() - 1], binders, out);
                    return;
                }
                if name == "Not" && args.len() == 1 {
                    out.push('¬');
                    arg(&args[0], binders, out);
                    return;
                }
            }
            arg(func, binders, out);
            for a in args {
                out.push(' ');
                arg(a, binders, out);
            }
        }
        Term::Lambda { name, binder_type, body } => {
            out.push_str(&format!("fun {name} : "));
            pretty_into(binder_type, binders, out);
            out.push_str(" => ");
            binders.push(name.clone());
            pretty_into(body, binders, out);
            binders.pop();
        }
        Term::Forall { name, binder_type, body } => {
            if body.has_loose_bvar(0) {
                out.push_str(&format!("∀ {name} : "));
                pretty_into(binder_type, binders, out);
                out.push_str(", ");
            } else {
                arg(binder_type, binders, out);
                out.push_str(" → ");
            }
            binders.push(name.clone());
            pretty_into(body, binders, out);
            binders.pop();
        }
    }
}

/// Renders a term with the fixed infix/prefix grammar used in annotations.
pub fn pretty_term(term: &Term) -> String {
    let mut out = String::new();
    pretty_into(term, &mut Vec::new(), &mut out);
    out
}

/// `h₁ : A, h₂ : B ⊢ T`, or `⊢ T` without hypotheses.
pub fn pretty_goal(goal: &Goal) -> String {
    let hyps: Vec<String> = goal
        .hypotheses
        .iter()
        .map(|h| format!("{} : {}", h.name, pretty_term(&h.ty)))
        .collect();
    let target = pretty_term(&goal.target);
    let text = if hyps.is_empty() {
        format!("⊢ {target}")
    } else {
        format!("{} ⊢ {target}", hyps.join(", "))
    };
    // keep rendered goals from closing the surrounding comment early
    text.replace("-/", "- /")
}

fn goals_comment(indent: &str, goals: &[String]) -> String {
    match goals {
        [] => format!("{indent}/- goals: none -/\n"),
        [one] => format!("{indent}/- goals: {one} -/\n"),
        many => {
            let mut out = format!("{indent}/- goals:");
            for g in many {
                out.push_str(&format!("\n{indent}  {g}"));
            }
            out.push_str(" -/\n");
            out
        }
    }
}

fn line_start(text: &str, pos: usize) -> usize {
    text[..pos].rfind('\n').map_or(0, |i| i + 1)
}

/// Interleaves goal-state comments into the proof text: one before each
/// line that starts a tactic (listing the `goalsBefore` of the first tactic
/// on that line) and a closing
/// `/- goals: none -/`.
pub fn annotate_cos(record: &TheoremRecord) -> Result<String, AugmentError> {
    let text = &record.original_proof_text;
    let mut inserts: Vec<(usize, usize, String)> = Vec::with_capacity(record.steps.len());
    let mut cursor = 0;
    for step in &record.steps {
        let span_start = match step.span {
            Some(span) if span.start <= span.end && span.end <= text.len() && text.is_char_boundary(span.start) => {
                Some(span.start)
            }
            Some(_) => None,
            None => {
                let first_line = step.tactic_text.lines().next().unwrap_or("").trim();
                if first_line.is_empty() {
                    None
                } else {
                    text[cursor..].find(first_line).map(|i| cursor + i)
                }
            }
        };
        let start = span_start.ok_or_else(|| AugmentError::Span {
            theorem: record.theorem_name.clone(),
            step: step.index,
            tactic: step.tactic_text.clone(),
        })?;
        cursor = start;
        let ls = line_start(text, start);
        let indent: String = text[ls..].chars().take_while(|c| *c == ' ' || *c == '\t').collect();
        let goals: Vec<String> = step
            .goals_before
            .iter()
            .map(|id| record.goal(id).map_or_else(|| format!("?{id}"), pretty_goal))
            .collect();
        inserts.push((ls, step.index, goals_comment(&indent, &goals)));
    }
    inserts.sort_by_key(|(pos, idx, _)| (*pos, *idx));
    inserts.dedup_by_key(|(pos, _, _)| *pos);

    let mut out = String::with_capacity(text.len() + inserts.iter().map(|i| i.2.len()).sum::<usize>() + 32);
    let mut last = 0;
    for (pos, _, comment) in &inserts {
        out.push_str(&text[last..*pos]);
        out.push_str(comment);
        last = *pos;
    }
    out.push_str(&text[last..]);
    if out.ends_with('\n') {
        out.push_str("/- goals: none -/\n");
    } else {
        out.push_str("\n/- goals: none -/");
    }
    Ok(out)
}

/// Removes every goal-state comment inserted by [`annotate_cos`].
pub fn strip_cos(annotated: &str) -> String {
    let body = annotated.strip_suffix("\n/- goals: none -/").unwrap_or(annotated);
    COS_COMMENT.replace_all(body, "").into_owned()
}

/// Informalization request for one theorem.
pub fn build_informalization_prompt(record: &TheoremRecord) -> Result<String, AugmentError> {
    let annotated = annotate_cos(record)?;
    Ok(INFORMALIZE_TEMPLATE.replacen(FORMAL_PLACEHOLDER, &escape_payload(&annotated), 1))
}

fn last_block<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.rfind(&open)? + open.len();
    let end = text[start..].find(&close).map_or(text.len(), |i| start + i);
    Some(&text[start..end])
}

/// Extracts the last `<STATEMENT>` and `<PROOF>` blocks.
pub fn parse_informal_response(text: &str) -> Result<(String, String), AugmentError> {
    let statement = last_block(text, "STATEMENT").ok_or(AugmentError::MissingTag("STATEMENT"))?;
    let proof = last_block(text, "PROOF").unwrap_or("");
    Ok((unescape_payload(statement.trim()), unescape_payload(proof.trim())))
}

/// Content of the last `<IMPROVED>` block without code fences or
/// surrounding blank lines.
pub fn parse_candidate_response(text: &str) -> Result<String, AugmentError> {
    let block = last_block(text, "IMPROVED").ok_or(AugmentError::MissingTag("IMPROVED"))?;
    let lines: Vec<&str> = block
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect();
    let first = lines.iter().position(|l| !l.trim().is_empty());
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    match (first, last) {
        (Some(a), Some(b)) => Ok(lines[a..=b].join("\n")),
        _ => Ok(String::new()),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentFlags {
    pub cos: bool,
    pub context: bool,
    pub examples: bool,
    pub informal: bool,
}

impl AugmentFlags {
    pub const ALL: AugmentFlags = AugmentFlags {
        cos: true,
        context: true,
        examples: true,
        informal: true,
    };
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PromptBundle {
    pub metric: MetricKind,
    pub system_text: String,
    pub current_block: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotated_block: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_block: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples_block: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informal_block: Option<String>,
}

impl PromptBundle {
    /// Blocks in their fixed order, absent ones skipped.
    pub fn blocks(&self) -> impl Iterator<Item = &str> {
        [
            Some(&self.current_block),
            self.annotated_block.as_ref(),
            self.context_block.as_ref(),
            self.examples_block.as_ref(),
            self.informal_block.as_ref(),
        ]
        .into_iter()
        .flatten()
        .map(String::as_str)
    }

    /// User message: the blocks separated by blank lines.
    pub fn user_text(&self) -> String {
        self.blocks().collect::<Vec<_>>().join("\n\n")
    }

    /// System text followed by the user message.
    pub fn render(&self) -> String {
        format!("{}\n\n{}\n", self.system_text.trim_end(), self.user_text())
    }
}

pub fn metric_prompt(kind: MetricKind) -> &'static str {
    match kind {
        MetricKind::Length => LENGTH_PROMPT,
        MetricKind::Modularity => MODULARITY_PROMPT,
        MetricKind::Dependencies => DEPENDENCY_PROMPT,
    }
}

fn tagged(tag: &str, body: &str) -> String {
    format!("<{tag}>\n{body}\n</{tag}>")
}

pub fn build_prompt(
    kind: MetricKind,
    record: &TheoremRecord,
    slice: Option<&ContextSlice>,
    examples: Option<&str>,
    flags: AugmentFlags,
) -> Result<PromptBundle, AugmentError> {
    let annotated_block = if flags.cos {
        let annotated = annotate_cos(record)?;
        Some(format!(
            "{}\n{}",
            ANNOTATION_PROMPT.trim_end(),
            tagged("ANNOTATED", &escape_payload(&annotated))
        ))
    } else {
        None
    };
    let context_block = if flags.context {
        let slice = slice.ok_or(AugmentError::MissingInput("context"))?;
        Some(format!("{}\n{}", CONTEXT_PROMPT.trim_end(), serialize_slice(slice)))
    } else {
        None
    };
    let examples_block = if flags.examples {
        let examples = examples.ok_or(AugmentError::MissingInput("examples"))?;
        Some(format!(
            "{}\n{}",
            EXAMPLES_PROMPT.trim_end(),
            tagged("EXAMPLES", &escape_payload(examples.trim_end()))
        ))
    } else {
        None
    };
    let informal_block = if flags.informal {
        let statement = record
            .informal_statement
            .as_deref()
            .ok_or(AugmentError::MissingInput("informal"))?;
        let proof = record.informal_proof.as_deref().unwrap_or("");
        Some(tagged(
            "INFORMAL",
            &format!(
                "{}\n{}",
                tagged("STATEMENT", &escape_payload(statement)),
                tagged("PROOF", &escape_payload(proof))
            ),
        ))
    } else {
        None
    };
    Ok(PromptBundle {
        metric: kind,
        system_text: metric_prompt(kind).trim_end().to_string(),
        current_block: tagged("CURRENT", &escape_payload(&record.original_proof_text)),
        annotated_block,
        context_block,
        examples_block,
        informal_block,
    })
}
