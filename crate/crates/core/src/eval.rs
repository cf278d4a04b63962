//! best@n aggregation, accuracy figures and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::to_pretty_json;
use crate::metrics::MetricKind;
use crate::pipeline::ProblemEntry;

pub const REPORT_SCHEMA: &str = "improver2-report/1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("best@{n} needs at least {n} outcomes, got {available}")]
    BudgetTooLarge { n: usize, available: usize },
    #[error("best@0 is undefined")]
    ZeroBudget,
    #[error("no evaluation records")]
    Empty,
    #[error("records mix metrics {0} and {1}")]
    MixedMetrics(MetricKind, MetricKind),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub verified: bool,
    /// `None` for unscoreable candidates.
    pub score: Option<f64>,
}

impl Outcome {
    pub fn improving(&self) -> bool {
        self.verified && self.score.is_some_and(|s| s > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalRecord {
    pub theorem_name: String,
    pub project_name: String,
    pub metric: MetricKind,
    pub candidate_outcomes: Vec<Outcome>,
}

impl EvalRecord {
    pub fn from_entry(entry: &ProblemEntry, metric: MetricKind) -> Self {
        EvalRecord {
            theorem_name: entry.problem.theorem_name.clone(),
            project_name: entry.problem.project_name.clone(),
            metric,
            candidate_outcomes: entry
                .candidates
                .iter()
                .map(|c| Outcome {
                    verified: c.is_verified(),
                    score: c.score(),
                })
                .collect(),
        }
    }
}

/// Expected `max(0, best verified score)` over a uniformly random size-`n`
/// subset of the outcomes, in closed form.
///
/// With positive verified scores sorted descending, the k-th one is the
/// subset maximum with probability `C(N−k, n−1) / C(N, n)`, computed by the
/// recurrence `p₁ = n/N`, `pₖ₊₁ = pₖ·(N−k−n+1)/(N−k)`.
pub fn best_at_n(outcomes: &[Outcome], n: usize) -> Result<f64, EvalError> {
    let total = outcomes.len();
    if n == 0 {
        return Err(EvalError::ZeroBudget);
    }
    if n > total {
        return Err(EvalError::BudgetTooLarge { n, available: total });
    }
    let mut positive: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.improving())
        .filter_map(|o| o.score)
        .collect();
    positive.sort_by(|a, b| b.total_cmp(a));
    let mut p = n as f64 / total as f64;
    let mut expected = 0.0;
    for (k, s) in (1..).zip(positive) {
        expected += s * p;
        if total - k < n {
            break;
        }
        p *= (total - k - n + 1) as f64 / (total - k) as f64;
    }
    Ok(expected)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroupSummary {
    pub problems: usize,
    pub mean_improvement_at_n: BTreeMap<usize, f64>,
    /// Fraction of problems with at least one verified candidate.
    pub compilation_accuracy: f64,
    /// Fraction of all problems with a verified, strictly improving candidate.
    pub improved_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalSummary {
    pub schema: String,
    pub metric: MetricKind,
    pub n_grid: Vec<usize>,
    pub overall: GroupSummary,
    pub per_project: BTreeMap<String, GroupSummary>,
}

impl EvalSummary {
    pub fn mean_improvement_at_n(&self) -> &BTreeMap<usize, f64> {
        &self.overall.mean_improvement_at_n
    }
}

fn group(records: &[&EvalRecord], grid: &[usize]) -> GroupSummary {
    let count = records.len();
    let mut means = BTreeMap::new();
    for &n in grid {
        let total: f64 = records
            .iter()
            .map(|r| {
                let n = n.min(r.candidate_outcomes.len());
                if n == 0 {
                    0.0
                } else {
                    best_at_n(&r.candidate_outcomes, n).expect("n clamped to outcome count")
                }
            })
            .sum();
        means.insert(n, total / count as f64);
    }
    let compiled = records
        .iter()
        .filter(|r| r.candidate_outcomes.iter().any(|o| o.verified))
        .count();
    let improved = records
        .iter()
        .filter(|r| r.candidate_outcomes.iter().any(Outcome::improving))
        .count();
    GroupSummary {
        problems: count,
        mean_improvement_at_n: means,
        compilation_accuracy: compiled as f64 / count as f64,
        improved_accuracy: improved as f64 / count as f64,
    }
}

/// Aggregates per-problem outcomes. A budget larger than a problem's
/// outcome count uses all of its outcomes.
pub fn summarize(records: &[EvalRecord], n_grid: &[usize]) -> Result<EvalSummary, EvalError> {
    let first = records.first().ok_or(EvalError::Empty)?;
    if n_grid.contains(&0) {
        return Err(EvalError::ZeroBudget);
    }
    if let Some(other) = records.iter().find(|r| r.metric != first.metric) {
        return Err(EvalError::MixedMetrics(first.metric, other.metric));
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let all: Vec<&EvalRecord> = records.iter().collect();
    let mut by_project: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_project.entry(&r.project_name).or_default().push(r);
    }
    Ok(EvalSummary {
        schema: REPORT_SCHEMA.to_string(),
        metric: first.metric,
        overall: group(&all, &grid),
        per_project: by_project
            .into_iter()
            .map(|(p, rs)| (p.to_string(), group(&rs, &grid)))
            .collect(),
        n_grid: grid,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}` (expected json|csv|markdown)")),
        }
    }
}

/// Label of the aggregate row in CSV and markdown output.
pub const ALL_PROJECTS: &str = "(all)";

fn rows(summary: &EvalSummary) -> impl Iterator<Item = (&str, &GroupSummary)> {
    summary
        .per_project
        .iter()
        .map(|(p, g)| (p.as_str(), g))
        .chain(std::iter::once((ALL_PROJECTS, &summary.overall)))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn emit_report(summary: &EvalSummary, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => to_pretty_json(summary),
        ReportFormat::Csv => {
            let mut out = String::from("project,problems,compilation_accuracy,improved_accuracy");
            for n in &summary.n_grid {
                let _ = write!(out, ",best@{n}");
            }
            out.push('\n');
            for (name, g) in rows(summary) {
                let _ = write!(
                    out,
                    "{},{},{:.6},{:.6}",
                    csv_field(name),
                    g.problems,
                    g.compilation_accuracy,
                    g.improved_accuracy
                );
                for n in &summary.n_grid {
                    let _ = write!(out, ",{:.6}", g.mean_improvement_at_n[n]);
                }
                out.push('\n');
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = format!("## Improvement report ({})\n\n| Project | Problems |", summary.metric);
            for n in &summary.n_grid {
                let _ = write!(out, " best@{n} |");
            }
            out.push_str(" A⁺ / A |\n|---|---:|");
            for _ in &summary.n_grid {
                out.push_str("---:|");
            }
            out.push_str("---:|\n");
            for (name, g) in rows(summary) {
                let label = if name == ALL_PROJECTS {
                    format!("**{name}**")
                } else {
                    name.replace('|', "\\|")
                };
                let _ = write!(out, "| {label} | {} |", g.problems);
                for n in &summary.n_grid {
                    let _ = write!(out, " {:.3} |", g.mean_improvement_at_n[n]);
                }
                let _ = writeln!(
                    out,
                    " {:.1}% / {:.1}% |",
                    100.0 * g.improved_accuracy,
                    100.0 * g.compilation_accuracy
                );
            }
            out
        }
    }
}
