//! Step-level proof forest with normal and spawned edges.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::trace::{TacticStep, TheoremRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("step {step}: focuses goal `{goal}` which no earlier step introduced and which is not a root goal")]
    OrphanFocus { step: usize, goal: String },
}

/// Parent link of a step. `spawned` marks a dashed (spawned) edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParentLink {
    pub parent: usize,
    pub spawned: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpawnedRoot {
    pub spawning_step: usize,
    pub root_step: usize,
    pub goal_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofTree {
    pub step_count: usize,
    pub parent_of: BTreeMap<usize, Option<ParentLink>>,
    pub solves_goal: BTreeMap<usize, String>,
    /// Ordered by spawning step, then root step.
    pub spawned_roots: Vec<SpawnedRoot>,
    /// Steps that close their branch (no children, nothing spawned).
    pub terminal_steps: BTreeSet<usize>,
    /// Spawned-goal set of every step, indexed by step.
    pub spawned_by_step: BTreeMap<usize, BTreeSet<String>>,
    pub warnings: Vec<String>,
    children: BTreeMap<usize, Vec<(usize, bool)>>,
}

impl ProofTree {
    pub fn children(&self, step: usize) -> &[(usize, bool)] {
        self.children.get(&step).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        self.parent_of
            .iter()
            .filter(|(_, p)| p.is_none())
            .map(|(s, _)| *s)
    }

    /// Steps of the subtree rooted at `root`, both edge kinds, root included.
    pub fn subtree_steps(&self, root: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(s) = stack.pop() {
            if out.insert(s) {
                stack.extend(self.children(s).iter().map(|(c, _)| *c));
            }
        }
        out
    }

    /// Renders the forest in Graphviz DOT: spawned edges dashed, `⊤` leaves
    /// after terminal steps.
    pub fn to_dot(&self, name: &str, steps: &[TacticStep]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", escape_dot(name));
        let _ = writeln!(out, "  node [shape=box, style=rounded];");
        for step in steps {
            let _ = writeln!(
                out,
                "  s{} [label=\"{}\"];",
                step.index,
                escape_dot(step.tactic_text.lines().next().unwrap_or(""))
            );
        }
        for (&step, links) in &self.children {
            for &(child, spawned) in links {
                if spawned {
                    let _ = writeln!(out, "  s{step} -> s{child} [style=dashed];");
                } else {
                    let _ = writeln!(out, "  s{step} -> s{child};");
                }
            }
        }
        for t in &self.terminal_steps {
            let _ = writeln!(out, "  t{t} [label=\"⊤\", shape=square];");
            let _ = writeln!(out, "  s{t} -> t{t};");
        }
        out.push_str("}\n");
        out
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Goals that first appear at step `i`, are not its direct children, and were
/// never a child of an earlier step (`seen`).
pub fn spawned_goals_of_step(
    record: &TheoremRecord,
    i: usize,
    seen: &HashSet<String>,
) -> BTreeSet<String> {
    spawned_in(&record.steps[i - 1], seen)
}

fn spawned_in(step: &TacticStep, seen: &HashSet<String>) -> BTreeSet<String> {
    step.new_goal_ids
        .iter()
        .filter(|g| !step.child_goal_ids.contains(g) && !seen.contains(*g))
        .cloned()
        .collect()
}

/// Spawned-goal sets of all steps, computed with the running child set.
pub fn spawned_sets(steps: &[TacticStep]) -> BTreeMap<usize, BTreeSet<String>> {
    let mut seen = HashSet::new();
    let mut out = BTreeMap::new();
    for step in steps {
        out.insert(step.index, spawned_in(step, &seen));
        seen.extend(step.child_goal_ids.iter().cloned());
    }
    out
}

pub fn build_tree(record: &TheoremRecord) -> Result<ProofTree, TreeError> {
    build_tree_from_steps(&record.steps)
}

pub fn build_tree_from_steps(steps: &[TacticStep]) -> Result<ProofTree, TreeError> {
    let spawned_by_step = spawned_sets(steps);
    let root_goals: HashSet<&str> = steps
        .first()
        .map(|s| s.goals_before.iter().map(String::as_str).collect())
        .unwrap_or_default();

    let mut owner: HashMap<&str, ParentLink> = HashMap::new();
    let mut parent_of = BTreeMap::new();
    let mut solves_goal = BTreeMap::new();
    let mut children: BTreeMap<usize, Vec<(usize, bool)>> = BTreeMap::new();
    let mut first_focus: HashMap<&str, usize> = HashMap::new();
    let mut terminal_steps = BTreeSet::new();

    for step in steps {
        let focus = step.focused_goal_id.as_str();
        let link = match owner.get(focus) {
            Some(link) => Some(*link),
            None if root_goals.contains(focus) => None,
            None => {
                return Err(TreeError::OrphanFocus {
                    step: step.index,
                    goal: focus.to_string(),
                })
            }
        };
        if let Some(l) = link {
            children
                .entry(l.parent)
                .or_default()
                .push((step.index, l.spawned));
        }
        parent_of.insert(step.index, link);
        solves_goal.insert(step.index, focus.to_string());
        first_focus.entry(focus).or_insert(step.index);

        let spawned = &spawned_by_step[&step.index];
        for c in &step.child_goal_ids {
            owner.insert(
                c,
                ParentLink {
                    parent: step.index,
                    spawned: false,
                },
            );
        }
        for s in spawned {
            owner.insert(
                s,
                ParentLink {
                    parent: step.index,
                    spawned: true,
                },
            );
        }
        if step.child_goal_ids.is_empty() && spawned.is_empty() {
            terminal_steps.insert(step.index);
        }
    }

    let mut spawned_roots = Vec::new();
    let mut warnings = Vec::new();
    for (&spawning_step, goals) in &spawned_by_step {
        for g in goals {
            match first_focus.get(g.as_str()) {
                Some(&root_step) if root_step > spawning_step => spawned_roots.push(SpawnedRoot {
                    spawning_step,
                    root_step,
                    goal_id: g.clone(),
                }),
                _ => warnings.push(format!(
                    "step {spawning_step}: spawned goal `{g}` is never solved; excluded from the tree"
                )),
            }
        }
    }
    for step in steps {
        for c in &step.child_goal_ids {
            if !first_focus.contains_key(c.as_str()) {
                warnings.push(format!(
                    "step {}: goal `{c}` is never solved; excluded from the tree",
                    step.index
                ));
            }
        }
    }
    spawned_roots.sort_by_key(|r| (r.spawning_step, r.root_step));

    Ok(ProofTree {
        step_count: steps.len(),
        parent_of,
        solves_goal,
        spawned_roots,
        terminal_steps,
        spawned_by_step,
        warnings,
        children,
    })
}

pub fn subtree_size(tree: &ProofTree, root_step: usize) -> usize {
    tree.subtree_steps(root_step).len()
}
