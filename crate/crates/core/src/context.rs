//! Library index, touch-set harvesting and budgeted context slices.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::escape_payload;
use crate::trace::TheoremRecord;

pub const INDEX_SCHEMA: &str = "improver2-index/1";
pub const DEFAULT_MAX_DEPTH: usize = 1;
pub const DEFAULT_MAX_ITEMS: usize = 64;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed index: {0}")]
    Parse(String),
    #[error("import cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("declaration `{declaration}` lives in unknown module `{module}`")]
    MissingModule { declaration: String, module: String },
    #[error("duplicate declaration `{0}`")]
    Duplicate(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeclKind {
    Theorem,
    Lemma,
    Definition,
    Structure,
    Class,
    Instance,
    Other,
}

impl DeclKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DeclKind::Theorem => "theorem",
            DeclKind::Lemma => "lemma",
            DeclKind::Definition => "definition",
            DeclKind::Structure => "structure",
            DeclKind::Class => "class",
            DeclKind::Instance => "instance",
            DeclKind::Other => "other",
        }
    }

    pub fn is_theorem_like(self) -> bool {
        matches!(self, DeclKind::Theorem | DeclKind::Lemma)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Declaration {
    pub name: String,
    pub kind: DeclKind,
    pub module: String,
    pub signature_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_comment: Option<String>,
    #[serde(default)]
    pub references: BTreeSet<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LibraryIndex {
    pub declarations: BTreeMap<String, Declaration>,
    pub import_dag: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
struct IndexFile {
    schema: String,
    #[serde(default)]
    modules: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    declarations: Vec<Declaration>,
}

impl LibraryIndex {
    pub fn get(&self, name: &str) -> Option<&Declaration> {
        self.declarations.get(name)
    }

    pub fn from_parts(
        declarations: Vec<Declaration>,
        import_dag: BTreeMap<String, BTreeSet<String>>,
    ) -> Result<Self, IndexError> {
        let mut dag = import_dag;
        let imported: Vec<String> = dag.values().flatten().cloned().collect();
        for m in imported {
            dag.entry(m).or_default();
        }
        if let Some(cycle) = find_cycle(&dag) {
            return Err(IndexError::Cycle(cycle));
        }
        let mut map = BTreeMap::new();
        for d in declarations {
            if !dag.contains_key(&d.module) {
                return Err(IndexError::MissingModule {
                    declaration: d.name,
                    module: d.module,
                });
            }
            if map.contains_key(&d.name) {
                return Err(IndexError::Duplicate(d.name));
            }
            map.insert(d.name.clone(), d);
        }
        Ok(LibraryIndex {
            declarations: map,
            import_dag: dag,
        })
    }

    pub fn to_json(&self) -> String {
        let file = IndexFile {
            schema: INDEX_SCHEMA.to_string(),
            modules: self.import_dag.clone(),
            declarations: self.declarations.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&file).expect("index serializes")
    }

    /// Modules reachable from `start` through imports, `start` included.
    pub fn import_closure<'a>(&'a self, start: impl IntoIterator<Item = &'a str>) -> BTreeSet<&'a str> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = start.into_iter().collect();
        while let Some(m) = stack.pop() {
            if let Some((key, imports)) = self.import_dag.get_key_value(m) {
                if seen.insert(key.as_str()) {
                    stack.extend(imports.iter().map(String::as_str));
                }
            }
        }
        seen
    }
}

fn find_cycle(dag: &BTreeMap<String, BTreeSet<String>>) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit<'a>(
        m: &'a str,
        dag: &'a BTreeMap<String, BTreeSet<String>>,
        marks: &mut BTreeMap<&'a str, Mark>,
        path: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        match marks.get(m) {
            Some(Mark::Done) => return None,
            Some(Mark::Open) => {
                let start = path.iter().position(|p| *p == m).unwrap_or(0);
                let mut cycle: Vec<String> = path[start..].iter().map(|s| s.to_string()).collect();
                cycle.push(m.to_string());
                return Some(cycle);
            }
            None => {}
        }
        marks.insert(m, Mark::Open);
        path.push(m);
        for next in dag.get(m).into_iter().flatten() {
            if let Some(c) = visit(next, dag, marks, path) {
                return Some(c);
            }
        }
        path.pop();
        marks.insert(m, Mark::Done);
        None
    }
    let mut marks = BTreeMap::new();
    for m in dag.keys() {
        if let Some(c) = visit(m, dag, &mut marks, &mut Vec::new()) {
            return Some(c);
        }
    }
    None
}

pub fn parse_index(text: &str) -> Result<LibraryIndex, IndexError> {
    if text.trim().is_empty() {
        return Ok(LibraryIndex::default());
    }
    let file: IndexFile = serde_json::from_str(text).map_err(|e| IndexError::Parse(e.to_string()))?;
    if file.schema != INDEX_SCHEMA {
        return Err(IndexError::Parse(format!(
            "field `schema`: expected `{INDEX_SCHEMA}`, found `{}`",
            file.schema
        )));
    }
    LibraryIndex::from_parts(file.declarations, file.modules)
}

pub fn load_index(path: impl AsRef<Path>) -> Result<LibraryIndex, IndexError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IndexError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_index(&text)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TouchSet {
    pub names: BTreeSet<String>,
    /// Names mentioned by the record that the index does not know.
    pub unresolved: BTreeSet<String>,
}

/// Global names referenced by the statement or any proof step, resolved
/// against the index.
pub fn touch_set(record: &TheoremRecord, index: &LibraryIndex) -> TouchSet {
    let mut out = TouchSet::default();
    let mentioned = record
        .statement_ref_names
        .iter()
        .chain(record.steps.iter().flat_map(|s| s.referenced_decl_names.iter()));
    for name in mentioned {
        if index.declarations.contains_key(name) {
            out.names.insert(name.clone());
        } else {
            out.unresolved.insert(name.clone());
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SliceBudget {
    pub max_depth: usize,
    pub max_items: usize,
}

impl Default for SliceBudget {
    fn default() -> Self {
        SliceBudget {
            max_depth: DEFAULT_MAX_DEPTH,
            max_items: DEFAULT_MAX_ITEMS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextSlice {
    /// Sorted by (module, name).
    pub items: Vec<Declaration>,
    pub touch_set: BTreeSet<String>,
    pub budget: SliceBudget,
}

/// Breadth-first reachability over declaration references from `touch`.
///
/// Hop `k` holds declarations first reached after `k` reference edges; each
/// hop is visited in (module, name) order. Only declarations whose module is
/// import-reachable from a touched declaration's module are kept. The first
/// `max_items` in visit order survive, then items are sorted by (module, name).
pub fn slice(index: &LibraryIndex, touch: &BTreeSet<String>, max_depth: usize, max_items: usize) -> ContextSlice {
    let touched: Vec<&Declaration> = touch.iter().filter_map(|n| index.get(n)).collect();
    let allowed = index.import_closure(touched.iter().map(|d| d.module.as_str()));

    let mut visited: BTreeSet<&str> = BTreeSet::new();
    let mut order: Vec<&Declaration> = Vec::new();
    let mut level: Vec<&Declaration> = touched;
    let sort_level = |level: &mut Vec<&Declaration>| {
        level.sort_by(|a, b| (&a.module, &a.name).cmp(&(&b.module, &b.name)));
        level.dedup_by(|a, b| a.name == b.name);
    };
    sort_level(&mut level);
    let mut hop = 0;
    'bfs: loop {
        let mut next = Vec::new();
        for d in level {
            if !visited.insert(d.name.as_str()) {
                continue;
            }
            if order.len() == max_items {
                break 'bfs;
            }
            order.push(d);
            if hop < max_depth {
                next.extend(
                    d.references
                        .iter()
                        .filter_map(|r| index.get(r))
                        .filter(|r| allowed.contains(r.module.as_str()))
                        .filter(|r| !visited.contains(r.name.as_str())),
                );
            }
        }
        if next.is_empty() {
            break;
        }
        sort_level(&mut next);
        level = next;
        hop += 1;
    }

    let mut items: Vec<Declaration> = order.into_iter().cloned().collect();
    items.sort_by(|a, b| (&a.module, &a.name).cmp(&(&b.module, &b.name)));
    ContextSlice {
        items,
        touch_set: touch.clone(),
        budget: SliceBudget {
            max_depth,
            max_items,
        },
    }
}

/// `<CONTEXT>` block with one `<ITEM>` per declaration.
pub fn serialize_slice(slice: &ContextSlice) -> String {
    if slice.items.is_empty() {
        return "<CONTEXT></CONTEXT>".to_string();
    }
    let mut out = String::from("<CONTEXT>\n");
    for d in &slice.items {
        out.push_str("<ITEM>\n");
        out.push_str(&format!("kind: {}\n", d.kind.as_str()));
        out.push_str(&format!("name: {}\n", escape_payload(&d.name)));
        out.push_str(&format!("module: {}\n", escape_payload(&d.module)));
        out.push_str(&format!("signature: {}\n", escape_payload(&d.signature_text)));
        if let Some(doc) = &d.doc_comment {
            out.push_str(&format!("doc: {}\n", escape_payload(doc)));
        }
        out.push_str("</ITEM>\n");
    }
    out.push_str("</CONTEXT>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::testing::rfl_record;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn decl(name: &str, module: &str, refs: &[&str]) -> Declaration {
        Declaration {
            name: name.to_string(),
            kind: DeclKind::Theorem,
            module: module.to_string(),
            signature_text: format!("theorem {name} : True"),
            doc_comment: None,
            references: refs.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn dag(edges: &[(&str, &[&str])]) -> BTreeMap<String, BTreeSet<String>> {
        edges
            .iter()
            .map(|(m, imps)| (m.to_string(), imps.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    fn names(s: &ContextSlice) -> Vec<&str> {
        s.items.iter().map(|d| d.name.as_str()).collect()
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn empty_file_is_empty_index() {
        assert_eq!(parse_index("").unwrap(), LibraryIndex::default());
    }

    #[test]
    fn import_edge_is_recorded() {
        let text = r#"{"schema":"improver2-index/1","modules":{"A":["B"],"B":[]},"declarations":[]}"#;
        let idx = parse_index(text).unwrap();
        assert_eq!(idx.import_dag["A"], set(&["B"]));
    }

    #[test]
    fn import_cycle_is_rejected() {
        let text = r#"{"schema":"improver2-index/1","modules":{"A":["B"],"B":["A"]},"declarations":[]}"#;
        match parse_index(text) {
            Err(IndexError::Cycle(c)) => assert_eq!(c, vec!["A", "B", "A"]),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn declaration_in_unknown_module_is_rejected() {
        let err = LibraryIndex::from_parts(vec![decl("x", "Nowhere", &[])], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, IndexError::MissingModule { .. }));
    }

    #[test]
    fn touch_set_filters_to_index() {
        let idx = LibraryIndex::from_parts(vec![decl("Nat.add_comm", "M", &[])], dag(&[("M", &[])])).unwrap();
        let mut rec = rfl_record();
        assert!(touch_set(&rec, &idx).names.is_empty());
        rec.steps[0].referenced_decl_names = set(&["Nat.add_comm", "foo.unknown"]);
        let t = touch_set(&rec, &idx);
        assert_eq!(t.names, set(&["Nat.add_comm"]));
        assert_eq!(t.unresolved, set(&["foo.unknown"]));
    }

    #[test]
    fn touch_set_ignores_formatting() {
        let idx = LibraryIndex::from_parts(vec![decl("a", "M", &[])], dag(&[("M", &[])])).unwrap();
        let mut rec = rfl_record();
        rec.statement_ref_names = set(&["a"]);
        let before = touch_set(&rec, &idx);
        rec.statement_text = rec.statement_text.replace(' ', "  \n ");
        rec.original_proof_text = rec.original_proof_text.replace(' ', "\t ");
        assert_eq!(touch_set(&rec, &idx), before);
    }

    fn chain() -> LibraryIndex {
        LibraryIndex::from_parts(
            vec![decl("A", "M", &["B"]), decl("B", "M", &["C"]), decl("C", "M", &[])],
            dag(&[("M", &[])]),
        )
        .unwrap()
    }

    #[test]
    fn depth_zero_keeps_touched_only() {
        assert_eq!(names(&slice(&chain(), &set(&["A"]), 0, 64)), vec!["A"]);
    }

    #[test]
    fn depth_bounds_reachability() {
        assert_eq!(names(&slice(&chain(), &set(&["A"]), 1, 64)), vec!["A", "B"]);
        assert_eq!(names(&slice(&chain(), &set(&["A"]), 5, 64)), vec!["A", "B", "C"]);
    }

    #[test]
    fn import_dag_restricts_modules() {
        let idx = LibraryIndex::from_parts(
            vec![decl("A", "Top", &["B", "X"]), decl("B", "Base", &[]), decl("X", "Other", &[])],
            dag(&[("Top", &["Base"]), ("Base", &[]), ("Other", &[])]),
        )
        .unwrap();
        assert_eq!(names(&slice(&idx, &set(&["A"]), 3, 64)), vec!["B", "A"]);
    }

    /// Brute-force BFS with a cap: distances first, then stable (hop, module, name) order.
    fn oracle(index: &LibraryIndex, touch: &BTreeSet<String>, depth: usize, cap: usize) -> BTreeSet<String> {
        let allowed = index.import_closure(touch.iter().filter_map(|n| index.get(n)).map(|d| d.module.as_str()));
        let mut dist: BTreeMap<String, usize> = BTreeMap::new();
        let mut q = VecDeque::new();
        for t in touch.iter().filter(|t| index.get(t).is_some()) {
            dist.insert(t.clone(), 0);
            q.push_back(t.clone());
        }
        while let Some(n) = q.pop_front() {
            let d = dist[&n];
            if d == depth {
                continue;
            }
            for r in &index.get(&n).unwrap().references {
                if let Some(rd) = index.get(r) {
                    if allowed.contains(rd.module.as_str()) && !dist.contains_key(r) {
                        dist.insert(r.clone(), d + 1);
                        q.push_back(r.clone());
                    }
                }
            }
        }
        let mut ranked: Vec<(usize, String, String)> = dist
            .into_iter()
            .map(|(n, d)| (d, index.get(&n).unwrap().module.clone(), n))
            .collect();
        ranked.sort();
        ranked.into_iter().take(cap).map(|(_, _, n)| n).collect()
    }

    #[test]
    fn diamond_with_cap_matches_oracle() {
        let idx = LibraryIndex::from_parts(
            vec![
                decl("top", "M", &["left", "right"]),
                decl("left", "M", &["bottom"]),
                decl("right", "M", &["bottom"]),
                decl("bottom", "M", &[]),
            ],
            dag(&[("M", &[])]),
        )
        .unwrap();
        let got = slice(&idx, &set(&["top"]), 3, 3);
        assert_eq!(got.items.len(), 3);
        let got: BTreeSet<String> = got.items.iter().map(|d| d.name.clone()).collect();
        assert_eq!(got, oracle(&idx, &set(&["top"]), 3, 3));
        assert_eq!(got, set(&["top", "left", "right"]));
    }

    #[test]
    fn serialization_shapes() {
        let empty = slice(&chain(), &BTreeSet::new(), 1, 64);
        assert_eq!(serialize_slice(&empty), "<CONTEXT></CONTEXT>");
        let one = slice(&chain(), &set(&["C"]), 1, 64);
        let text = serialize_slice(&one);
        assert_eq!(text.matches("<ITEM>").count(), 1);
        assert_eq!(
            text,
            "<CONTEXT>\n<ITEM>\nkind: theorem\nname: C\nmodule: M\nsignature: theorem C : True\n</ITEM>\n</CONTEXT>"
        );
    }

    fn arb_index() -> impl Strategy<Value = LibraryIndex> {
        // 8 declarations over 3 modules; module i may import modules < i
        (
            prop::collection::vec(prop::collection::btree_set(0usize..8, 0..4), 8),
            prop::collection::vec(0usize..3, 8),
            prop::collection::vec(prop::bool::ANY, 3),
        )
            .prop_map(|(refs, mods, imports)| {
                let mut modules = BTreeMap::new();
                modules.insert("m0".to_string(), BTreeSet::new());
                modules.insert("m1".to_string(), if imports[0] { set(&["m0"]) } else { BTreeSet::new() });
                let mut m2 = BTreeSet::new();
                if imports[1] {
                    m2.insert("m1".to_string());
                }
                if imports[2] {
                    m2.insert("m0".to_string());
                }
                modules.insert("m2".to_string(), m2);
                let decls = (0..8)
                    .map(|i| Declaration {
                        name: format!("d{i}"),
                        kind: DeclKind::Lemma,
                        module: format!("m{}", mods[i]),
                        signature_text: String::new(),
                        doc_comment: None,
                        references: refs[i].iter().map(|r| format!("d{r}")).collect(),
                    })
                    .collect();
                LibraryIndex::from_parts(decls, modules).unwrap()
            })
    }

    proptest! {
        #[test]
        fn slice_agrees_with_oracle(idx in arb_index(), touch in prop::collection::btree_set(0usize..8, 0..3), depth in 0usize..4, cap in 1usize..9) {
            let touch: BTreeSet<String> = touch.iter().map(|i| format!("d{i}")).collect();
            let got: BTreeSet<String> = slice(&idx, &touch, depth, cap).items.into_iter().map(|d| d.name).collect();
            prop_assert_eq!(got, oracle(&idx, &touch, depth, cap));
        }

        #[test]
        fn larger_budgets_never_drop_items(idx in arb_index(), touch in prop::collection::btree_set(0usize..8, 1..3), depth in 0usize..3, cap in 1usize..8) {
            let touch: BTreeSet<String> = touch.iter().map(|i| format!("d{i}")).collect();
            let base: BTreeSet<String> = slice(&idx, &touch, depth, cap).items.into_iter().map(|d| d.name).collect();
            let deeper: BTreeSet<String> = slice(&idx, &touch, depth + 1, cap).items.into_iter().map(|d| d.name).collect();
            let wider: BTreeSet<String> = slice(&idx, &touch, depth, cap + 1).items.into_iter().map(|d| d.name).collect();
            prop_assert!(base.is_subset(&deeper));
            prop_assert!(base.is_subset(&wider));
            prop_assert_eq!(serialize_slice(&slice(&idx, &touch, depth, cap)), serialize_slice(&slice(&idx, &touch, depth, cap)));
        }
    }
}
