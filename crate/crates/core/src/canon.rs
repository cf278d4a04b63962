//! Canonical goal representation: name-free term serialization, stable
//! 128-bit digests, and the sequent / target-only variant sets used for
//! duplicate and wrapper detection. The byte grammar is in
//! `docs/canonical-form.md`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::trace::{Goal, Term};

/// Maximum number of binders discharged when building variants.
pub const MAX_DISCHARGE_STAGES: usize = 64;

const TAG_CONST: u8 = 0x01;
const TAG_BVAR: u8 = 0x02;
const TAG_FREE: u8 = 0x03;
const TAG_SORT: u8 = 0x04;
const TAG_APP: u8 = 0x05;
const TAG_LAM: u8 = 0x06;
const TAG_FORALL: u8 = 0x07;
const TAG_SEQUENT: u8 = 0x10;
const TAG_SEQUENT_TARGET: u8 = 0x11;

/// 128-bit XXH3 digest. Printed and serialized as 32 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub u128);

impl Digest {
    pub fn to_hex(self) -> String {
        format!("{:032x}", self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        if s.len() != 32 {
            return None;
        }
        u128::from_str_radix(s, 16).ok().map(Digest)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid digest `{s}`")))
    }
}

pub fn hash_canonical(bytes: &[u8]) -> Digest {
    Digest(xxhash_rust::xxh3::xxh3_128(bytes))
}

/// Serializes `term` with binder names erased and free variables and
/// metavariables replaced by `FV0, FV1, …` in order of first occurrence.
pub fn canonicalize(term: &Term) -> Vec<u8> {
    let mut out = Vec::new();
    let mut numbering = HashMap::new();
    write_term(term, &mut numbering, &mut out);
    out
}

pub fn term_digest(term: &Term) -> Digest {
    hash_canonical(&canonicalize(term))
}

#[derive(Hash, PartialEq, Eq)]
enum FreeKey<'a> {
    Var(&'a str),
    Meta(&'a str),
}

fn write_str(s: &str, out: &mut Vec<u8>) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn write_free<'a>(key: FreeKey<'a>, numbering: &mut HashMap<FreeKey<'a>, u32>, out: &mut Vec<u8>) {
    let next = numbering.len() as u32;
    let n = *numbering.entry(key).or_insert(next);
    out.push(TAG_FREE);
    out.extend_from_slice(&n.to_le_bytes());
}

fn write_term<'a>(term: &'a Term, numbering: &mut HashMap<FreeKey<'a>, u32>, out: &mut Vec<u8>) {
    match term {
        Term::Const { name } => {
            out.push(TAG_CONST);
            write_str(name, out);
        }
        Term::BoundVar { idx } => {
            out.push(TAG_BVAR);
            out.extend_from_slice(&idx.to_le_bytes());
        }
        Term::FreeVar { name } => write_free(FreeKey::Var(name), numbering, out),
        Term::Meta { id } => write_free(FreeKey::Meta(id), numbering, out),
        Term::Sort { level } => {
            out.push(TAG_SORT);
            write_str(level, out);
        }
        Term::App { func, args } => {
            out.push(TAG_APP);
            out.extend_from_slice(&(args.len() as u32).to_le_bytes());
            write_term(func, numbering, out);
            for a in args {
                write_term(a, numbering, out);
            }
        }
        Term::Lambda {
            binder_type, body, ..
        } => {
            out.push(TAG_LAM);
            write_term(binder_type, numbering, out);
            write_term(body, numbering, out);
        }
        Term::Forall {
            binder_type, body, ..
        } => {
            out.push(TAG_FORALL);
            write_term(binder_type, numbering, out);
            write_term(body, numbering, out);
        }
    }
}

/// Digest of a sequent: the sorted hypothesis multiset plus the target.
pub fn sequent_digest(hyps: &[Digest], target: Digest) -> Digest {
    let mut sorted = hyps.to_vec();
    sorted.sort();
    let mut bytes = Vec::with_capacity(6 + 16 * (sorted.len() + 1));
    bytes.push(TAG_SEQUENT);
    bytes.extend_from_slice(&(sorted.len() as u32).to_le_bytes());
    for h in &sorted {
        bytes.extend_from_slice(&h.0.to_be_bytes());
    }
    bytes.push(TAG_SEQUENT_TARGET);
    bytes.extend_from_slice(&target.0.to_be_bytes());
    hash_canonical(&bytes)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CanonicalGoal {
    pub base_target_hash: Digest,
    pub hyp_type_hashes: Vec<Digest>,
    pub sequent_variant_hashes: BTreeSet<Digest>,
    pub target_variant_hashes: BTreeSet<Digest>,
}

impl CanonicalGoal {
    pub fn shares_sequent_variant(&self, other: &CanonicalGoal) -> bool {
        !self.sequent_variant_hashes.is_disjoint(&other.sequent_variant_hashes)
    }

    /// Wrapper relation: either base target is a target-only variant of the other.
    pub fn is_wrapper_of(&self, parent: &CanonicalGoal) -> bool {
        parent.target_variant_hashes.contains(&self.base_target_hash)
            || self.target_variant_hashes.contains(&parent.base_target_hash)
    }
}

fn fresh_constant(stage: usize) -> Term {
    // Names never reach the serialization; only the occurrence position does.
    Term::fvar(format!("\u{0}discharged.{stage}"))
}

/// Builds the canonical representation of a goal.
///
/// Sequent variants discharge every leading `∀` binder and implication into
/// the hypothesis multiset. Target-only variants discharge dependent `∀`
/// binders only, so `A → P` is never treated as a restatement of `P`.
pub fn canonical_goal(goal: &Goal) -> CanonicalGoal {
    let mut hyps: Vec<Digest> = goal
        .hypotheses
        .iter()
        .filter(|h| h.proof_relevant)
        .map(|h| term_digest(&h.ty))
        .collect();
    hyps.sort();
    let hyp_type_hashes = hyps.clone();

    let base_target_hash = term_digest(&goal.target);
    let mut sequent_variant_hashes = BTreeSet::new();
    let mut target = goal.target.clone();
    let mut stage = 0;
    loop {
        sequent_variant_hashes.insert(sequent_digest(&hyps, term_digest(&target)));
        match target {
            Term::Forall {
                binder_type, body, ..
            } if stage < MAX_DISCHARGE_STAGES => {
                hyps.push(term_digest(&binder_type));
                target = body.instantiate(&fresh_constant(stage));
                stage += 1;
            }
            _ => break,
        }
    }

    let mut target_variant_hashes = BTreeSet::new();
    let mut target = goal.target.clone();
    let mut stage = 0;
    loop {
        target_variant_hashes.insert(term_digest(&target));
        match target {
            Term::Forall { body, .. } if stage < MAX_DISCHARGE_STAGES && body.has_loose_bvar(0) => {
                target = body.instantiate(&fresh_constant(stage));
                stage += 1;
            }
            _ => break,
        }
    }

    CanonicalGoal {
        base_target_hash,
        hyp_type_hashes,
        sequent_variant_hashes,
        target_variant_hashes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::testing::goal_with;
    use proptest::prelude::*;

    fn c(n: &str) -> Term {
        Term::constant(n)
    }

    /// Reference canonicalizer written independently of the byte encoder:
    /// renders an s-expression with binder names dropped and free symbols
    /// numbered by first occurrence.
    fn oracle(term: &Term) -> String {
        fn go(t: &Term, seen: &mut Vec<String>) -> String {
            let mut free = |key: String| {
                let pos = match seen.iter().position(|k| *k == key) {
                    Some(p) => p,
                    None => {
                        seen.push(key);
                        seen.len() - 1
                    }
                };
                format!("FV{pos}")
            };
            match t {
                Term::Const { name } => format!("(c {name:?})"),
                Term::BoundVar { idx } => format!("(b {idx})"),
                Term::FreeVar { name } => free(format!("v:{name}")),
                Term::Meta { id } => free(format!("m:{id}")),
                Term::Sort { level } => format!("(s {level:?})"),
                Term::App { func, args } => {
                    let mut s = format!("(@ {}", go(func, seen));
                    for a in args {
                        s.push(' ');
                        s.push_str(&go(a, seen));
                    }
                    s.push(')');
                    s
                }
                Term::Lambda {
                    binder_type, body, ..
                } => {
                    let ty = go(binder_type, seen);
                    format!("(λ {ty} {})", go(body, seen))
                }
                Term::Forall {
                    binder_type, body, ..
                } => {
                    let ty = go(binder_type, seen);
                    format!("(Π {ty} {})", go(body, seen))
                }
            }
        }
        go(term, &mut Vec::new())
    }

    #[test]
    fn alpha_equivalent_lambdas_serialize_identically() {
        let a = Term::lambda("x", c("Nat"), Term::bvar(0));
        let b = Term::lambda("y", c("Nat"), Term::bvar(0));
        assert_eq!(canonicalize(&a), canonicalize(&b));
        assert_eq!(term_digest(&a), term_digest(&b));
    }

    #[test]
    fn free_variables_are_numbered_by_first_occurrence() {
        let f = c("f");
        let a = Term::app(f.clone(), vec![Term::fvar("a"), Term::fvar("a")]);
        let b = Term::app(f, vec![Term::fvar("b"), Term::fvar("b")]);
        assert_eq!(canonicalize(&a), canonicalize(&b));

        let eq_ab = Term::app(c("Eq"), vec![Term::fvar("a"), Term::fvar("b")]);
        let eq_ba = Term::app(c("Eq"), vec![Term::fvar("b"), Term::fvar("a")]);
        assert_eq!(oracle(&eq_ab), oracle(&eq_ba));
        assert_eq!(canonicalize(&eq_ab), canonicalize(&eq_ba));

        let eq_aa = Term::app(c("Eq"), vec![Term::fvar("a"), Term::fvar("a")]);
        assert_ne!(oracle(&eq_ab), oracle(&eq_aa));
        assert_ne!(canonicalize(&eq_ab), canonicalize(&eq_aa));
    }

    #[test]
    fn empty_input_digest_is_fixed() {
        assert_eq!(
            hash_canonical(b"").to_hex(),
            "99aa06d3014798d86001c324468d497f"
        );
    }

    #[test]
    fn distinct_constants_hash_differently() {
        assert_ne!(term_digest(&c("Nat")), term_digest(&c("Int")));
    }

    #[test]
    fn serialization_bytes_are_pinned() {
        let t = Term::app(c("P"), vec![Term::fvar("x")]);
        assert_eq!(
            canonicalize(&t),
            vec![0x05, 1, 0, 0, 0, 0x01, 1, 0, 0, 0, b'P', 0x03, 0, 0, 0, 0]
        );
    }

    #[test]
    fn digest_hex_round_trips() {
        let d = term_digest(&c("Nat"));
        assert_eq!(Digest::from_hex(&d.to_hex()), Some(d));
        assert_eq!(Digest::from_hex("xyz"), None);
    }

    #[test]
    fn closed_goal_has_singleton_variants() {
        let g = goal_with("g", &[], c("P"));
        let cg = canonical_goal(&g);
        assert_eq!(cg.sequent_variant_hashes.len(), 1);
        assert_eq!(cg.target_variant_hashes.len(), 1);
        assert!(cg.target_variant_hashes.contains(&cg.base_target_hash));
    }

    #[test]
    fn forall_goal_has_two_variants_matching_introduced_form() {
        let px = |x: Term| Term::app(c("P"), vec![x]);
        let quantified = goal_with("g", &[], Term::forall("x", c("Nat"), px(Term::bvar(0))));
        let introduced = goal_with("g", &[("x", c("Nat"))], px(Term::fvar("x")));
        let q = canonical_goal(&quantified);
        let i = canonical_goal(&introduced);
        assert_eq!(q.sequent_variant_hashes.len(), 2);
        // variant 1 computed independently from its parts
        let stage1 = sequent_digest(&[term_digest(&c("Nat"))], term_digest(&px(Term::fvar("z"))));
        assert!(q.sequent_variant_hashes.contains(&stage1));
        assert_eq!(i.sequent_variant_hashes.len(), 1);
        assert!(i.sequent_variant_hashes.contains(&stage1));
        assert_eq!(q.target_variant_hashes.len(), 2);
    }

    #[test]
    fn implication_discharge_meets_extended_context() {
        let a = c("A");
        let b = c("B");
        let left = goal_with("g1", &[("h", a.clone())], Term::arrow(a.clone(), b.clone()));
        let right = goal_with("g2", &[("h", a.clone()), ("h2", a)], b);
        assert!(canonical_goal(&left).shares_sequent_variant(&canonical_goal(&right)));
    }

    #[test]
    fn implications_are_not_target_variants() {
        let p = c("P");
        let wrapped = canonical_goal(&goal_with("g", &[], Term::arrow(c("A"), p.clone())));
        let parent = canonical_goal(&goal_with("p", &[], p));
        assert_eq!(wrapped.target_variant_hashes.len(), 1);
        assert!(!wrapped.is_wrapper_of(&parent));
    }

    #[test]
    fn generalised_restatement_is_a_wrapper() {
        let qa = Term::app(c("Q"), vec![Term::fvar("a")]);
        let parent = canonical_goal(&goal_with("p", &[("a", c("Nat"))], qa));
        let child = canonical_goal(&goal_with(
            "c",
            &[("a", c("Nat"))],
            Term::forall("x", c("Nat"), Term::app(c("Q"), vec![Term::bvar(0)])),
        ));
        assert!(child.is_wrapper_of(&parent));
    }

    #[test]
    fn irrelevant_hypotheses_do_not_hash() {
        let mut g = goal_with("g", &[("h", c("A"))], c("B"));
        let with = canonical_goal(&g);
        g.hypotheses[0].proof_relevant = false;
        let without = canonical_goal(&g);
        assert_eq!(with.hyp_type_hashes.len(), 1);
        assert!(without.hyp_type_hashes.is_empty());
        assert!(!with.shares_sequent_variant(&without));
    }

    #[test]
    fn discharge_loop_is_bounded() {
        let mut t = c("P");
        for _ in 0..100 {
            t = Term::arrow(c("A"), t);
        }
        let cg = canonical_goal(&goal_with("g", &[], t));
        assert_eq!(cg.sequent_variant_hashes.len(), MAX_DISCHARGE_STAGES + 1);
    }

    /// Closed terms with at most `budget` levels of nesting; `depth` counts
    /// the binders in scope.
    pub(crate) fn arb_closed_term(depth: u32, budget: u32) -> BoxedStrategy<Term> {
        let mut leaves: Vec<BoxedStrategy<Term>> = vec![
            "[A-D]".prop_map(Term::constant).boxed(),
            "[a-d]".prop_map(Term::fvar).boxed(),
            "[m-n]".prop_map(Term::meta).boxed(),
        ];
        if depth > 0 {
            leaves.push((0..depth).prop_map(Term::bvar).boxed());
        }
        let leaf = proptest::strategy::Union::new(leaves).boxed();
        if budget == 0 {
            return leaf;
        }
        let sub = |d| arb_closed_term(d, budget - 1);
        prop_oneof![
            3 => leaf,
            1 => (sub(depth), prop::collection::vec(sub(depth), 1..3))
                .prop_map(|(f, a)| Term::app(f, a)),
            1 => ("[a-z]", sub(depth), sub(depth + 1))
                .prop_map(|(n, t, b)| Term::lambda(n, t, b)),
            1 => ("[a-z]", sub(depth), sub(depth + 1))
                .prop_map(|(n, t, b)| Term::forall(n, t, b)),
        ]
        .boxed()
    }

    fn rename_binders(t: &Term, salt: &str) -> Term {
        match t {
            Term::App { func, args } => Term::app(
                rename_binders(func, salt),
                args.iter().map(|a| rename_binders(a, salt)).collect(),
            ),
            Term::Lambda {
                name,
                binder_type,
                body,
            } => Term::lambda(
                format!("{name}{salt}"),
                rename_binders(binder_type, salt),
                rename_binders(body, salt),
            ),
            Term::Forall {
                name,
                binder_type,
                body,
            } => Term::forall(
                format!("{name}{salt}"),
                rename_binders(binder_type, salt),
                rename_binders(body, salt),
            ),
            other => other.clone(),
        }
    }

    proptest! {
        #[test]
        fn canonical_bytes_agree_with_oracle(a in arb_closed_term(0, 4), b in arb_closed_term(0, 4)) {
            prop_assert_eq!(oracle(&a) == oracle(&b), canonicalize(&a) == canonicalize(&b));
        }

        #[test]
        fn binder_renaming_is_invisible(t in arb_closed_term(0, 4), salt in "[a-z']{1,4}") {
            prop_assert_eq!(term_digest(&t), term_digest(&rename_binders(&t, &salt)));
        }
    }
}
