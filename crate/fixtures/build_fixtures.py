#!/usr/bin/env python3
"""Regenerates every fixture under fixtures/. Run from any directory."""

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent
SCHEMA = "improver2-trace/1"
INDEX_SCHEMA = "improver2-index/1"


# Terms ---------------------------------------------------------------------

def const(name):
    return {"k": "const", "name": name}


def fvar(name):
    return {"k": "fvar", "name": name}


def sort(level):
    return {"k": "sort", "level": str(level)}


def app(f, *args):
    if isinstance(f, str):
        f = const(f)
    return {"k": "app", "fn": f, "args": list(args)}


def arrow(a, b):
    return {"k": "forall", "name": "_", "type": a, "body": b}


def eq(a, b):
    return app("Eq", a, b)


def prop(text):
    """An opaque proposition printed verbatim."""
    return const(text)


TYPE = sort(1)


# Proof builder -------------------------------------------------------------

def goal_spec(target, add=(), drop=()):
    return {"target": target, "add": list(add), "drop": set(drop)}


class Proof:
    def __init__(self, name, statement, body, target, hyps=(), project="Fixtures",
                 context="ctx", sep=" := by\n", statement_refs=()):
        self.name = name
        self.statement = statement
        self.text = statement + sep + body
        self.raw = self.text.encode("utf-8")
        self.project = project
        self.context = context
        self.statement_refs = sorted(statement_refs)
        self.goals = {}
        self.steps = []
        self.cursor = 0
        self.last_start = 0
        self.last_needle = None
        self.counter = 0
        root = self._new_goal(target, [self._hyp(h) for h in hyps])
        self.open = [root]

    @staticmethod
    def _hyp(h):
        name, ty = h[0], h[1]
        relevant = h[2] if len(h) > 2 else True
        return {"name": name, "type": ty, "proofRelevant": relevant}

    def _new_goal(self, target, hyps):
        gid = f"g{self.counter}"
        self.counter += 1
        self.goals[gid] = {"id": gid, "target": target, "hypotheses": hyps}
        return gid

    def _derive(self, focus, spec):
        hyps = [h for h in self.goals[focus]["hypotheses"] if h["name"] not in spec["drop"]]
        names = {h["name"] for h in hyps}
        for h in spec["add"]:
            h = self._hyp(h)
            assert h["name"] not in names, (self.name, h["name"])
            hyps.append(h)
        return self._new_goal(spec["target"], hyps)

    def _span(self, tactic, locate):
        needle = (locate or tactic.split("\n")[0]).encode("utf-8")
        if needle == self.last_needle:
            start = self.last_start
        else:
            start = self.raw.find(needle, self.cursor)
        if start < 0:
            start = self.raw.find(needle, self.last_start)
        assert start >= 0, (self.name, tactic)
        full = tactic.encode("utf-8")
        end = start + (len(full) if locate is None and self.raw.startswith(full, start) else len(needle))
        self.last_start = start
        self.last_needle = needle
        self.cursor = max(self.cursor, end)
        return {"start": start, "end": end}

    def step(self, tactic, focus=None, children=(), spawned=(), hyps=(), decls=(),
             intro=(), locate=None):
        focus = focus or self.open[0]
        assert focus in self.open, (self.name, tactic, focus)
        before = list(self.open)
        spawned_ids = [self._derive(focus, s) for s in spawned]
        child_ids = [self._derive(focus, c) for c in children]
        at = self.open.index(focus)
        self.open[at:at + 1] = spawned_ids + child_ids
        self.steps.append({
            "index": len(self.steps) + 1,
            "tacticText": tactic,
            "focusedGoalId": focus,
            "goalsBefore": before,
            "goalsAfter": list(self.open),
            "childGoalIds": child_ids,
            "newGoalIds": spawned_ids + child_ids,
            "referencedHypNames": sorted(set(hyps)),
            "referencedDeclNames": sorted(set(decls)),
            "introducedHypNames": sorted(set(intro)),
            "span": self._span(tactic, locate),
        })
        return spawned_ids + child_ids

    def trace(self):
        assert not self.open, (self.name, self.open)
        return {"goals": list(self.goals.values()), "steps": self.steps}

    def record(self):
        t = self.trace()
        return {
            "schema": SCHEMA,
            "theoremName": self.name,
            "projectName": self.project,
            "contextId": self.context,
            "statementText": self.statement,
            "originalProofText": self.text,
            "statementRefNames": self.statement_refs,
            "goals": t["goals"],
            "steps": t["steps"],
        }


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def write_json(path, value):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(value, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


def decl(name, kind, module, signature, refs=(), doc=None):
    d = {"name": name, "kind": kind, "module": module, "signatureText": signature,
         "references": sorted(refs)}
    if doc:
        d["docComment"] = doc
    return d


# Showcase examples-----------------------------------------------------------

ALPHA = ("α", TYPE, False)


def hilbert(system):
    return app(f"Hilbert.{system}", fvar("α"))


def weaker(a, b):
    return app("LO.Modal.Hilbert.WeakerThan", hilbert(a), hilbert(b))


def axioms_subset(a, b):
    return app("HasSubset.Subset", app("LO.Modal.Hilbert.axioms", hilbert(a)),
               app("LO.Modal.Hilbert.axioms", hilbert(b)))


def mem(x, s):
    return app("Membership.mem", x, s)


def hilbert_reduction(name, weak, strong, body, closing, cases_tactics):
    """`have h₁ : axioms ⊆ axioms → weak ≤ₛ strong`, `have h₂ : axioms ⊆ axioms`,
    `exact h₁ h₂`: the shape shared by two showcase examples."""
    statement = f"lemma {name} : (Hilbert.{weak} α) ≤ₛ (Hilbert.{strong} α)"
    p = Proof(name, statement, body, weaker(weak, strong), hyps=[ALPHA], project="Foundation",
              context="Foundation.Modal.Hilbert.WeakerThan")
    sub = axioms_subset(weak, strong)
    h1_ty = arrow(sub, weaker(weak, strong))
    h1_goal, main = p.step(
        f"have h₁ : (LO.Modal.Hilbert.{weak} α).axioms ⊆ (LO.Modal.Hilbert.{strong} α).axioms → "
        f"(Hilbert.{weak} α) ≤ₛ (Hilbert.{strong} α) := by",
        spawned=[goal_spec(h1_ty)], children=[goal_spec(weaker(weak, strong), add=[("h₁", h1_ty)])],
        intro=["h₁"])
    (g,) = p.step("intro h", focus=h1_goal, children=[goal_spec(weaker(weak, strong), add=[("h", sub)])],
                  intro=["h"])
    (g,) = p.step("apply normal_weakerThan_of_subset", focus=g, children=[goal_spec(sub)],
                  decls=["LO.Modal.Hilbert.normal_weakerThan_of_subset"])
    p.step(closing, focus=g, hyps=["h"])
    h2_goal, main = p.step(
        f"have h₂ : (LO.Modal.Hilbert.{weak} α).axioms ⊆ (LO.Modal.Hilbert.{strong} α).axioms := by",
        focus=main, spawned=[goal_spec(sub)], children=[goal_spec(weaker(weak, strong), add=[("h₂", sub)])],
        intro=["h₂"])
    phi = fvar("Phi")
    target = mem(phi, app("LO.Modal.Hilbert.axioms", hilbert(strong)))
    (g,) = p.step("intro Phi hPhi", focus=h2_goal,
                  children=[goal_spec(target, add=[("Phi", app("LO.Modal.Formula", fvar("α")), False),
                                                   ("hPhi", mem(phi, app("LO.Modal.Hilbert.axioms", hilbert(weak))))])],
                  intro=["Phi", "hPhi"])
    left, right = p.step("cases' hPhi with hPhi hPhi", focus=g, hyps=["hPhi"],
                         children=[goal_spec(target, drop=["hPhi"], add=[("hPhi", mem(phi, const("LO.Modal.Axioms.K")))]),
                                   goal_spec(target, drop=["hPhi"], add=[("hPhi", mem(phi, const(f"LO.Modal.Axioms.{weak}.extra")))])])
    cases_tactics(p, left, right)
    p.step("exact h₁ h₂", focus=main, hyps=["h₁", "h₂"])
    return p


def kd5_weaker_than_kd45():
    body = """  have h₁ : (LO.Modal.Hilbert.KD5 α).axioms ⊆ (LO.Modal.Hilbert.KD45 α).axioms → (Hilbert.KD5 α) ≤ₛ (Hilbert.KD45 α) := by
    intro h
    apply normal_weakerThan_of_subset
    <;> assumption
  have h₂ : (LO.Modal.Hilbert.KD5 α).axioms ⊆ (LO.Modal.Hilbert.KD45 α).axioms := by
    intro Phi hPhi
    cases' hPhi with hPhi hPhi
    <;> simp_all [LO.Modal.Hilbert.KD5, LO.Modal.Hilbert.KD45]
    <;> aesop
  exact h₁ h₂"""
    simp = "simp_all [LO.Modal.Hilbert.KD5, LO.Modal.Hilbert.KD45]"
    names = ["LO.Modal.Hilbert.KD5", "LO.Modal.Hilbert.KD45"]

    def cases(p, left, right):
        p.step(simp, focus=left, hyps=["hPhi"], decls=names)
        (rest,) = p.step(simp, focus=right, hyps=["hPhi"], decls=names,
                         children=[goal_spec(mem(fvar("Phi"), const("LO.Modal.Axioms.Five")))])
        p.step("aesop", focus=rest)

    return hilbert_reduction("KD5_weakerThan_KD45", "KD5", "KD45", body, "assumption", cases)


def kd_weaker_than_kdb():
    name = "KD_weakerThan_KDB"
    statement = "lemma KD_weakerThan_KDB : (Hilbert.KD α) ≤ₛ (Hilbert.KDB α)"
    original = Proof(name, statement, "normal_weakerThan_of_subset $ by intro; aesop;",
                     axioms_subset("KD", "KDB"), hyps=[ALPHA], project="Foundation",
                     context="Foundation.Modal.Hilbert.WeakerThan", sep=" := ")
    phi = fvar("Phi")
    target = arrow(mem(phi, app("LO.Modal.Hilbert.axioms", hilbert("KD"))),
                   mem(phi, app("LO.Modal.Hilbert.axioms", hilbert("KDB"))))
    (g,) = original.step("intro", children=[goal_spec(target, add=[("Phi", app("LO.Modal.Formula", fvar("α")), False)])],
                         intro=["Phi"])
    original.step("aesop", focus=g)

    body = """  -- Introduce a lemma to handle the subset relationship between the axioms of KD and KDB
  have h₁ : (LO.Modal.Hilbert.KD α).axioms ⊆ (LO.Modal.Hilbert.KDB α).axioms → (Hilbert.KD α) ≤ₛ (Hilbert.KDB α) := by
    intro h
    -- Apply the lemma that establishes the weakening relation given the subset of axioms
    apply normal_weakerThan_of_subset
    -- Use the given subset condition
    apply h
  -- Prove the subset relationship between the axioms of KD and KDB
  have h₂ : (LO.Modal.Hilbert.KD α).axioms ⊆ (LO.Modal.Hilbert.KDB α).axioms := by
    -- Prove that all axioms of KD are included in KDB
    intro Phi hPhi
    cases' hPhi with hPhi hPhi
    · -- Case: KD's basic modal logic axioms are included in KDB
      simp_all [LO.Modal.Hilbert.KD]
    · -- Case: KD's additional axiom (K) is included in KDB
      simp_all [LO.Modal.Hilbert.KDB]
  -- Combine the results to conclude the weakening relation
  exact h₁ h₂"""

    def cases(p, left, right):
        p.step("simp_all [LO.Modal.Hilbert.KD]", focus=left, hyps=["hPhi"], decls=["LO.Modal.Hilbert.KD"])
        p.step("simp_all [LO.Modal.Hilbert.KDB]", focus=right, hyps=["hPhi"], decls=["LO.Modal.Hilbert.KDB"])

    optimized = hilbert_reduction(name, "KD", "KDB", body, "apply h", cases)
    return original, optimized


def mem_cross_iff():
    name = "mem_cross_iff"
    statement = ("theorem mem_cross_iff (x y : TSet γ) :\n"
                 "    ∀ a, a ∈' cross hβ hγ hδ x y ↔ ∃ b c, a = ⟨b, c⟩' ∧ b ∈' x ∧ c ∈' y")
    hyps = [("x", app("TSet", fvar("γ")), False), ("y", app("TSet", fvar("γ")), False)]
    a = fvar("a")
    lhs = prop("a ∈' cross hβ hγ hδ x y")
    rhs = prop("∃ b c, a = ⟨b, c⟩' ∧ b ∈' x ∧ c ∈' y")
    bound_lhs = app("Membership.mem", {"k": "bvar", "idx": 0},
                    app("cross hβ hγ hδ", fvar("x"), fvar("y")))
    root = {"k": "forall", "name": "a", "type": app("TSet", fvar("γ")),
            "body": app("Iff", bound_lhs, rhs)}
    iff = app("Iff", lhs, rhs)
    ctx = "ConNF.External.Basic"
    original_body = """  intro a
  rw [cross, mem_inter_iff, vCross_spec]
  constructor
  · rintro ⟨h₁, b, c, rfl, h₂⟩
    simp only [op_mem_converse_iff, vCross_spec, op_inj] at h₁
    obtain ⟨b', c', ⟨rfl, rfl⟩, h₁⟩ := h₁
    exact ⟨b, c, rfl, h₁, h₂⟩
  · rintro ⟨b, c, rfl, h₁, h₂⟩
    simp only [op_mem_converse_iff, vCross_spec, op_inj]
    exact ⟨⟨c, b, ⟨rfl, rfl⟩, h₁⟩, ⟨b, c, ⟨rfl, rfl⟩, h₂⟩⟩"""
    o = Proof(name, statement, original_body, root, hyps=hyps, project="ConNF", context=ctx,
              statement_refs=["cross"])
    unfolded = app("Iff", prop("a ∈' converse (vCross x y) ∧ a ∈' vCross y x"), rhs)
    (g,) = o.step("intro a", children=[goal_spec(iff, add=[("a", app("TSet", fvar("γ")), False)])], intro=["a"])
    (g,) = o.step("rw [cross, mem_inter_iff, vCross_spec]", focus=g, children=[goal_spec(unfolded)],
                  decls=["cross", "mem_inter_iff", "vCross_spec"])
    mp, mpr = o.step("constructor", focus=g,
                     children=[goal_spec(arrow(prop("a ∈' converse (vCross x y) ∧ a ∈' vCross y x"), rhs)),
                               goal_spec(arrow(rhs, prop("a ∈' converse (vCross x y) ∧ a ∈' vCross y x")))])
    (g,) = o.step("rintro ⟨h₁, b, c, rfl, h₂⟩", focus=mp, intro=["h₁", "b", "c", "h₂"],
                  children=[goal_spec(prop("∃ b' c', ⟨b, c⟩' = ⟨b', c'⟩' ∧ b' ∈' x ∧ c' ∈' y"),
                                      add=[("h₁", prop("⟨b, c⟩' ∈' converse (vCross x y)")), ("h₂", prop("c ∈' y"))])])
    (g,) = o.step("simp only [op_mem_converse_iff, vCross_spec, op_inj] at h₁", focus=g, hyps=["h₁"],
                  decls=["op_mem_converse_iff", "vCross_spec", "op_inj"],
                  children=[goal_spec(prop("∃ b' c', ⟨b, c⟩' = ⟨b', c'⟩' ∧ b' ∈' x ∧ c' ∈' y"), drop=["h₁"],
                                      add=[("h₁", prop("∃ b' c', (c = b' ∧ b = c') ∧ b' ∈' x"))])])
    (g,) = o.step("obtain ⟨b', c', ⟨rfl, rfl⟩, h₁⟩ := h₁", focus=g, hyps=["h₁"], intro=["h₁"],
                  children=[goal_spec(prop("∃ b' c', ⟨b, c⟩' = ⟨b', c'⟩' ∧ b' ∈' x ∧ c' ∈' y"), drop=["h₁"],
                                      add=[("h₁", prop("b ∈' x"))])])
    o.step("exact ⟨b, c, rfl, h₁, h₂⟩", focus=g, hyps=["h₁", "h₂"])
    (g,) = o.step("rintro ⟨b, c, rfl, h₁, h₂⟩", focus=mpr, intro=["b", "c", "h₁", "h₂"],
                  children=[goal_spec(prop("⟨b, c⟩' ∈' converse (vCross x y) ∧ ⟨b, c⟩' ∈' vCross y x"),
                                      add=[("h₁", prop("b ∈' x")), ("h₂", prop("c ∈' y"))])])
    (g,) = o.step("simp only [op_mem_converse_iff, vCross_spec, op_inj]", focus=g,
                  decls=["op_mem_converse_iff", "vCross_spec", "op_inj"],
                  children=[goal_spec(prop("(∃ b' c', (c = b' ∧ b = c') ∧ b' ∈' x) ∧ ∃ b' c', (b = b' ∧ c = c') ∧ c' ∈' y"))])
    o.step("exact ⟨⟨c, b, ⟨rfl, rfl⟩, h₁⟩, ⟨b, c, ⟨rfl, rfl⟩, h₂⟩⟩", focus=g, hyps=["h₁", "h₂"])

    length_body = """  simp_all [cross, mem_inter_iff, vCross_spec,
    op_mem_converse_iff, op_inj]
  <;> aesop"""
    short = Proof(name, statement, length_body, root, hyps=hyps, project="ConNF", context=ctx,
                  statement_refs=["cross"])
    (g,) = short.step("simp_all [cross, mem_inter_iff, vCross_spec,\n    op_mem_converse_iff, op_inj]",
                      decls=["cross", "mem_inter_iff", "vCross_spec", "op_mem_converse_iff", "op_inj"],
                      children=[goal_spec(prop("∀ a, (∃ b' c', …) ↔ ∃ b c, a = ⟨b, c⟩' ∧ b ∈' x ∧ c ∈' y"))])
    short.step("aesop", focus=g)

    dep_body = """  intro a
  -- Use the definition of cross and simplify the membership conditions directly
  constructor <;> intro h
  -- First direction: Assume membership in cross, construct the pair
  <;> simp [cross] at h ⊢
  -- Second direction: Decompose the pair existence claim and verify conditions
  <;> aesop
  -- Handle remaining simple cases with basic reasoning"""
    d = Proof(name, statement, dep_body, root, hyps=hyps, project="ConNF", context=ctx,
              statement_refs=["cross"])
    (g,) = d.step("intro a", children=[goal_spec(iff, add=[("a", app("TSet", fvar("γ")), False)])], intro=["a"])
    mp, mpr = d.step("constructor", focus=g, locate="constructor",
                     children=[goal_spec(arrow(lhs, rhs)), goal_spec(arrow(rhs, lhs))])
    (mp,) = d.step("intro h", focus=mp, intro=["h"], children=[goal_spec(rhs, add=[("h", lhs)])])
    (mpr,) = d.step("intro h", focus=mpr, intro=["h"], children=[goal_spec(lhs, add=[("h", rhs)])])
    for g, tgt in ((mp, rhs), (mpr, prop("a ∈' converse (vCross x y) ∧ a ∈' vCross y x"))):
        (rest,) = d.step("simp [cross] at h ⊢", focus=g, hyps=["h"], decls=["cross"],
                         children=[goal_spec(tgt)])
    for _ in range(2):
        d.step("aesop", focus=d.open[0])
    return o, short, d


def summer_commute_jacobi():
    name = "summerCommute_jacobi_ofCrAnListF"
    statement = """lemma summerCommute_jacobi_ofCrAnListF (Phis1 Phis2 Phis3 : List 𝓕.CrAnFieldOp) :
    [ofCrAnListF Phis1, [ofCrAnListF Phis2, ofCrAnListF Phis3]ₛca]ₛca =
    𝓢(𝓕 |>ₛ Phis1, 𝓕 |>ₛ Phis3) •
    (- 𝓢(𝓕 |>ₛ Phis2, 𝓕 |>ₛ Phis3) • [ofCrAnListF Phis3, [ofCrAnListF Phis1, ofCrAnListF Phis2]ₛca]ₛca -
    𝓢(𝓕 |>ₛ Phis1, 𝓕 |>ₛ Phis2) • [ofCrAnListF Phis2, [ofCrAnListF Phis3, ofCrAnListF Phis1]ₛca]ₛca)"""
    hyps = [(f"Phis{i}", app("List", const("𝓕.CrAnFieldOp")), False) for i in (1, 2, 3)]
    lhs = prop("[ofCrAnListF Phis1, [ofCrAnListF Phis2, ofCrAnListF Phis3]ₛca]ₛca")
    rhs = prop("𝓢(𝓕 |>ₛ Phis1, 𝓕 |>ₛ Phis3) • (…)")
    ctx = "HepLean.PerturbationTheory.FieldOpFreeAlgebra.SuperCommute"
    stage = lambda i: eq(prop(f"jacobi.lhs.{i}"), rhs)
    bosonic = lambda i: eq(prop(f"𝓕 |>ₛ Phis{i}"), const("bosonic"))

    def case_split(p, focus, first):
        """`by_cases h1 <;> by_cases h2 <;> by_cases h3`: seven steps, eight goals."""
        t1 = "by_cases h1 : (𝓕 |>ₛ Phis1) = bosonic"
        t2 = "by_cases h2 : (𝓕 |>ₛ Phis2) = bosonic"
        t3 = "by_cases h3 : (𝓕 |>ₛ Phis3) = bosonic"
        case = lambda signs: [(f"h{i + 1}", bosonic(i + 1) if s else app("Not", bosonic(i + 1)))
                              for i, s in enumerate(signs)]
        tgt = stage("cases")
        level1 = p.step(first + t1 if first else t1, focus=focus, intro=["h1"],
                        children=[goal_spec(tgt, add=case([s])) for s in (True, False)], locate=t1)
        level2 = []
        for g, s1 in zip(level1, (True, False)):
            level2 += list(zip(p.step(t2, focus=g, intro=["h2"], children=[goal_spec(tgt, add=case([s1, s])[1:]) for s in (True, False)]),
                               ((s1, True), (s1, False))))
        leaves = []
        for g, (s1, s2) in level2:
            leaves += p.step(t3, focus=g, intro=["h3"],
                             children=[goal_spec(tgt, add=case([s1, s2, s])[2:]) for s in (True, False)])
        return leaves

    original_body = """  repeat rw [superCommuteF_ofCrAnListF_ofCrAnListF]
  simp only [instCommGroup, map_sub, map_smul, neg_smul]
  repeat rw [superCommuteF_ofCrAnListF_ofCrAnListF]
  simp only [instCommGroup.eq_1, ofList_append_eq_mul, List.append_assoc]
  by_cases h1 : (𝓕 |>ₛ Phis1) = bosonic <;>
    by_cases h2 : (𝓕 |>ₛ Phis2) = bosonic <;>
    by_cases h3 : (𝓕 |>ₛ Phis3) = bosonic
  · simp only [h1, h2, h3, mul_self, bosonic_exchangeSign, one_smul, exchangeSign_bosonic, neg_sub]
    abel
  · simp only [h1, h2, bosonic_exchangeSign, one_smul, mul_bosonic, mul_self, map_one,
    exchangeSign_bosonic, neg_sub]
    abel
  · simp only [h1, h3, mul_bosonic, bosonic_exchangeSign, one_smul, exchangeSign_bosonic, neg_sub,
    mul_self, map_one]
    abel
  · simp only [neq_bosonic_iff_eq_fermionic] at h1 h2 h3
    simp only [h1, h2, h3, mul_self, bosonic_exchangeSign, one_smul,
      fermionic_exchangeSign_fermionic, neg_smul, neg_sub, bosonic_mul_fermionic, sub_neg_eq_add,
      mul_bosonic, smul_add, exchangeSign_bosonic]
    abel
  · simp only [neq_bosonic_iff_eq_fermionic] at h1 h2 h3
    simp only [h1, h2, h3, mul_self, map_one, one_smul, exchangeSign_bosonic, mul_bosonic,
      bosonic_exchangeSign, bosonic_mul_fermionic, neg_sub]
    abel
  · simp only [neq_bosonic_iff_eq_fermionic] at h1 h2 h3
    simp only [h1, h2, h3, bosonic_mul_fermionic, fermionic_exchangeSign_fermionic, neg_smul,
      one_smul, sub_neg_eq_add, bosonic_exchangeSign, mul_bosonic, smul_add, exchangeSign_bosonic,
      neg_sub, mul_self]
    abel
  · simp only [neq_bosonic_iff_eq_fermionic] at h1 h2 h3
    simp only [h1, h2, h3, mul_bosonic, fermionic_exchangeSign_fermionic, neg_smul, one_smul,
      sub_neg_eq_add, exchangeSign_bosonic, bosonic_mul_fermionic, smul_add, mul_self,
      bosonic_exchangeSign, neg_sub]
    abel
  · simp only [neq_bosonic_iff_eq_fermionic] at h1 h2 h3
    simp only [h1, h2, h3, mul_self, map_one, one_smul, fermionic_exchangeSign_fermionic, neg_smul,
      neg_sub]
    abel"""
    o = Proof(name, statement, original_body, eq(lhs, rhs), hyps=hyps, project="HepLean", context=ctx)
    sc = "superCommuteF_ofCrAnListF_ofCrAnListF"
    stage_no = 0
    g = o.open[0]

    def linear(p, tactic, g, decls=(), hyps=(), locate=None):
        nonlocal stage_no
        stage_no += 1
        (g,) = p.step(tactic, focus=g, decls=decls, hyps=hyps, locate=locate,
                      children=[goal_spec(stage(stage_no))])
        return g

    # Each successful iteration of `repeat rw` is its own rewrite step.
    for _ in range(6):
        g = linear(o, f"rw [{sc}]", g, decls=[sc], locate="repeat rw [superCommuteF_ofCrAnListF_ofCrAnListF]")
    g = linear(o, "simp only [instCommGroup, map_sub, map_smul, neg_smul]", g,
               decls=["instCommGroup", "map_sub", "map_smul", "neg_smul"])
    for _ in range(7):
        g = linear(o, f"rw [{sc}]", g, decls=[sc], locate="repeat rw [superCommuteF_ofCrAnListF_ofCrAnListF]")
    g = linear(o, "simp only [instCommGroup.eq_1, ofList_append_eq_mul, List.append_assoc]", g,
               decls=["instCommGroup.eq_1", "ofList_append_eq_mul", "List.append_assoc"])
    leaves = case_split(o, g, None)
    bullets = [b for b in original_body.split("\n  · ")[1:]]
    for leaf, bullet in zip(leaves, bullets):
        lines = [t.strip() for t in bullet.split("\n    ") if t.strip()]
        tactics = []
        for line in lines:
            if tactics and not line.startswith(("simp", "abel")):
                tactics[-1] += " " + line
            else:
                tactics.append(line)
        for t in tactics[:-1]:
            first = t.split(" ")[0:3]
            leaf = linear(o, t, leaf, hyps=["h1", "h2", "h3"], locate=" ".join(first))
        o.step("abel", focus=leaf)

    short_body = """  simp_all [superCommuteF_ofCrAnListF_ofCrAnListF,
    instCommGroup, map_sub, map_smul, neg_smul,
    superCommuteF_ofCrAnListF_ofCrAnListF,
    instCommGroup.eq_1, ofList_append_eq_mul, List.append_assoc,
    neq_bosonic_iff_eq_fermionic]
  <;> by_cases h1 : (𝓕 |>ₛ Phis1) = bosonic <;>
    by_cases h2 : (𝓕 |>ₛ Phis2) = bosonic <;>
    by_cases h3 : (𝓕 |>ₛ Phis3) = bosonic
  <;> simp_all [h1, h2, h3, mul_self, bosonic_exchangeSign,
      one_smul, exchangeSign_bosonic, neg_sub,
      fermionic_exchangeSign_fermionic, neg_smul,
      bosonic_mul_fermionic, sub_neg_eq_add,
      mul_bosonic, smul_add, exchangeSign_bosonic,
      neg_sub, mul_self] <;> abel"""
    s = Proof(name, statement, short_body, eq(lhs, rhs), hyps=hyps, project="HepLean", context=ctx)
    g = linear(s, "simp_all [superCommuteF_ofCrAnListF_ofCrAnListF, instCommGroup, map_sub, map_smul, neg_smul, "
                  "superCommuteF_ofCrAnListF_ofCrAnListF, instCommGroup.eq_1, ofList_append_eq_mul, "
                  "List.append_assoc, neq_bosonic_iff_eq_fermionic]", s.open[0],
               decls=[sc, "instCommGroup", "map_sub", "map_smul", "neg_smul", "instCommGroup.eq_1",
                      "ofList_append_eq_mul", "List.append_assoc", "neq_bosonic_iff_eq_fermionic"],
               locate="simp_all [superCommuteF_ofCrAnListF_ofCrAnListF,")
    leaves = case_split(s, g, "<;> ")
    rest = []
    for leaf in leaves:
        rest.append(linear(s, "simp_all [h1, h2, h3, mul_self, bosonic_exchangeSign, …]", leaf,
                           hyps=["h1", "h2", "h3"], locate="simp_all [h1, h2, h3, mul_self, bosonic_exchangeSign,"))
    for g in rest:
        s.step("abel", focus=g, locate="abel")
    return o, s


def is_coatom_iff():
    name = "isCoatom_iff"
    statement = ("theorem isCoatom_iff [OrderTop A] {K : A} :\n"
                 "    IsCoatom K ↔ K ≠ ⊤ ∧ ∀ H g, K ≤ H → g ∉ K → g ∈ H → H = ⊤")
    hyps = [("inst", app("OrderTop", fvar("A")), False), ("K", fvar("A"), False)]
    target = app("Iff", app("IsCoatom", fvar("K")), prop("K ≠ ⊤ ∧ ∀ H g, K ≤ H → g ∉ K → g ∈ H → H = ⊤"))
    ctx = "Mathlib.Order.Atoms"
    body = """  simp_rw [IsCoatom, lt_iff_le_not_le, SetLike.not_le_iff_exists,
    and_comm (a := _ ≤ _), and_imp, exists_imp, ← and_imp, and_comm]"""
    o = Proof(name, statement, body, target, hyps=hyps, project="Mathlib", context=ctx,
              statement_refs=["IsCoatom"])
    o.step("simp_rw [IsCoatom, lt_iff_le_not_le, SetLike.not_le_iff_exists,\n"
           "    and_comm (a := _ ≤ _), and_imp, exists_imp, ← and_imp, and_comm]",
           decls=["IsCoatom", "lt_iff_le_not_le", "SetLike.not_le_iff_exists", "and_comm", "and_imp", "exists_imp"])

    body = """  constructor <;> intro h
  <;> simp_all [IsCoatom, lt_iff_le_not_le, SetLike.not_le_iff_exists]
  <;> tauto"""
    d = Proof(name, statement, body, target, hyps=hyps, project="Mathlib", context=ctx,
              statement_refs=["IsCoatom"])
    left = app("IsCoatom", fvar("K"))
    right = prop("K ≠ ⊤ ∧ ∀ H g, K ≤ H → g ∉ K → g ∈ H → H = ⊤")
    mp, mpr = d.step("constructor", locate="constructor",
                     children=[goal_spec(arrow(left, right)), goal_spec(arrow(right, left))])
    (mp,) = d.step("intro h", focus=mp, intro=["h"], children=[goal_spec(right, add=[("h", left)])])
    (mpr,) = d.step("intro h", focus=mpr, intro=["h"], children=[goal_spec(left, add=[("h", right)])])
    names = ["IsCoatom", "lt_iff_le_not_le", "SetLike.not_le_iff_exists"]
    simp = "simp_all [IsCoatom, lt_iff_le_not_le, SetLike.not_le_iff_exists]"
    (mp,) = d.step(simp, focus=mp, hyps=["h"], decls=names, children=[goal_spec(prop("simp normal form (→)"))])
    (mpr,) = d.step(simp, focus=mpr, hyps=["h"], decls=names, children=[goal_spec(prop("simp normal form (←)"))])
    d.step("tauto", focus=mp)
    d.step("tauto", focus=mpr)
    return o, d


def hilbert_poly():
    name = "hilbertPoly_eq_zero_of_le_rootMultiplicity_one"
    statement = ("lemma hilbertPoly_eq_zero_of_le_rootMultiplicity_one\n"
                 "    {p : F[X]} {d : ℕ} (hdp : d ≤ p.rootMultiplicity 1) :\n"
                 "    hilbertPoly p d = 0")
    ctx = "Mathlib.RingTheory.Polynomial.HilbertPoly"
    hdp_ty = app("LE.le", fvar("d"), prop("p.rootMultiplicity 1"))
    hyps = [("p", const("F[X]"), False), ("d", const("ℕ"), False), ("hdp", hdp_ty)]
    goal = eq(app("hilbertPoly", fvar("p"), fvar("d")), const("0"))
    p_zero = eq(fvar("p"), const("0"))
    p_nonzero = app("Not", p_zero)
    heq_ty = eq(fvar("p"), prop("q * (- 1) ^ p.rootMultiplicity 1 * (1 - X) ^ p.rootMultiplicity 1"))
    rcases_hyps = [("q", const("F[X]"), False), ("hq1", prop("p = (1 - X) ^ p.rootMultiplicity 1 * q")),
                   ("hq2", prop("¬(1 - X) ∣ q"))]
    rw_tail = ("rw [heq, ← zero_add d, ← Nat.sub_add_cancel hdp, pow_add (1 - X), ← mul_assoc,\n"
               "      hilbertPoly_mul_one_sub_pow_add, hilbertPoly]")
    rw_decls = ["zero_add", "Nat.sub_add_cancel", "pow_add", "mul_assoc", "hilbertPoly_mul_one_sub_pow_add", "hilbertPoly"]

    def heq_block(p, focus, intro_extra=()):
        heq_goal, main = p.step(
            "have heq : p = q * (- 1) ^ p.rootMultiplicity 1 * (1 - X) ^ p.rootMultiplicity 1 := by",
            focus=focus, intro=["heq"], spawned=[goal_spec(heq_ty)],
            children=[goal_spec(goal, add=[("heq", heq_ty)])])
        (g,) = p.step("simp only [mul_assoc, ← mul_pow, neg_mul, one_mul, neg_sub]", focus=heq_goal,
                      decls=["mul_assoc", "mul_pow", "neg_mul", "one_mul", "neg_sub"],
                      children=[goal_spec(prop("p = q * (1 - X) ^ p.rootMultiplicity 1"))])
        p.step("exact hq1.trans (mul_comm _ _)", focus=g, hyps=["hq1"], decls=["mul_comm"])
        # `rw` closes the goal with its trailing `with_reducible rfl`.
        (g,) = p.step(rw_tail.split("\n")[0], focus=main,
                      hyps=["heq", "hdp"], decls=rw_decls, children=[goal_spec(prop("0 = 0"))])
        p.step("with_reducible rfl", focus=g, locate="rw [heq")

    body = """  by_cases hp : p = 0
  · rw [hp, hilbertPoly_zero_left]
  · rcases exists_eq_pow_rootMultiplicity_mul_and_not_dvd p hp 1 with ⟨q, hq1, hq2⟩
    have heq : p = q * (- 1) ^ p.rootMultiplicity 1 * (1 - X) ^ p.rootMultiplicity 1 := by
      simp only [mul_assoc, ← mul_pow, neg_mul, one_mul, neg_sub]
      exact hq1.trans (mul_comm _ _)
    rw [heq, ← zero_add d, ← Nat.sub_add_cancel hdp, pow_add (1 - X), ← mul_assoc,
      hilbertPoly_mul_one_sub_pow_add, hilbertPoly]"""
    o = Proof(name, statement, body, goal, hyps=hyps, project="Mathlib", context=ctx,
              statement_refs=["hilbertPoly", "Polynomial.rootMultiplicity"])
    pos, neg = o.step("by_cases hp : p = 0", intro=["hp"],
                      children=[goal_spec(goal, add=[("hp", p_zero)]), goal_spec(goal, add=[("hp", p_nonzero)])])
    (g,) = o.step("rw [hp, hilbertPoly_zero_left]", focus=pos, hyps=["hp"], decls=["hilbertPoly_zero_left"],
                  children=[goal_spec(prop("0 = 0"))])
    o.step("with_reducible rfl", focus=g, locate="rw [hp, hilbertPoly_zero_left]")
    (g,) = o.step("rcases exists_eq_pow_rootMultiplicity_mul_and_not_dvd p hp 1 with ⟨q, hq1, hq2⟩", focus=neg,
                  hyps=["hp"], decls=["exists_eq_pow_rootMultiplicity_mul_and_not_dvd"], intro=["q", "hq1", "hq2"],
                  children=[goal_spec(goal, add=rcases_hyps)])
    heq_block(o, g)

    body = """  -- Consider the case where p is the zero polynomial
  have h₁ : p = 0 → hilbertPoly p d = 0 := by
    intro hp
    rw [hp, hilbertPoly_zero_left]
  -- Consider the case where p is not the zero polynomial
  have h₂ : p ≠ 0 → d ≤ p.rootMultiplicity 1 → hilbertPoly p d = 0 := by
    intro hp hdp
    -- Express p as a product of a polynomial, a power of -1, and a power of (1 - X)
    rcases exists_eq_pow_rootMultiplicity_mul_and_not_dvd p hp 1 with ⟨q, hq1, hq2⟩
    -- Derive the equality of p with the product form
    have heq : p = q * (- 1) ^ p.rootMultiplicity 1 * (1 - X) ^ p.rootMultiplicity 1 := by
      simp only [mul_assoc, ← mul_pow, neg_mul, one_mul, neg_sub]
      exact hq1.trans (mul_comm _ _)
    -- Substitute the product form into the Hilbert polynomial expression and simplify
    rw [heq, ← zero_add d, ← Nat.sub_add_cancel hdp, pow_add (1 - X), ← mul_assoc,
      hilbertPoly_mul_one_sub_pow_add, hilbertPoly]
  -- Combine both cases to conclude the proof
  by_cases hp : p = 0 <;> simp_all
  <;> simp_all [h₁, h₂, hdp]"""
    m = Proof(name, statement, body, goal, hyps=hyps, project="Mathlib", context=ctx,
              statement_refs=["hilbertPoly", "Polynomial.rootMultiplicity"])
    h1_ty = arrow(p_zero, goal)
    h2_ty = arrow(app("Ne", fvar("p"), const("0")), arrow(hdp_ty, goal))
    h1_goal, main = m.step("have h₁ : p = 0 → hilbertPoly p d = 0 := by", intro=["h₁"],
                           spawned=[goal_spec(h1_ty)], children=[goal_spec(goal, add=[("h₁", h1_ty)])])
    (g,) = m.step("intro hp", focus=h1_goal, intro=["hp"], children=[goal_spec(goal, add=[("hp", p_zero)])])
    (g,) = m.step("rw [hp, hilbertPoly_zero_left]", focus=g, hyps=["hp"], decls=["hilbertPoly_zero_left"],
                  children=[goal_spec(prop("0 = 0"))])
    m.step("with_reducible rfl", focus=g, locate="rw [hp, hilbertPoly_zero_left]")
    h2_goal, main = m.step("have h₂ : p ≠ 0 → d ≤ p.rootMultiplicity 1 → hilbertPoly p d = 0 := by", focus=main,
                           intro=["h₂"], spawned=[goal_spec(h2_ty)], children=[goal_spec(goal, add=[("h₂", h2_ty)])])
    (g,) = m.step("intro hp hdp", focus=h2_goal, intro=["hp", "hdp"],
                  children=[goal_spec(goal, drop=["hdp"], add=[("hdp✝", hdp_ty), ("hp", app("Ne", fvar("p"), const("0"))),
                                                               ("hdp", hdp_ty)])])
    (g,) = m.step("rcases exists_eq_pow_rootMultiplicity_mul_and_not_dvd p hp 1 with ⟨q, hq1, hq2⟩", focus=g,
                  hyps=["hp"], decls=["exists_eq_pow_rootMultiplicity_mul_and_not_dvd"], intro=["q", "hq1", "hq2"],
                  children=[goal_spec(goal, add=rcases_hyps)])
    heq_block(m, g)
    pos, neg = m.step("by_cases hp : p = 0", focus=main, intro=["hp"], locate="by_cases hp : p = 0 <;> simp_all",
                      children=[goal_spec(goal, add=[("hp", p_zero)]), goal_spec(goal, add=[("hp", p_nonzero)])])
    (pos,) = m.step("simp_all", focus=pos, locate="simp_all", children=[goal_spec(prop("hilbertPoly 0 d = 0"))])
    (neg,) = m.step("simp_all", focus=neg, locate="simp_all", children=[goal_spec(prop("hilbertPoly p d = 0 ∨ p = 0"))])
    for g in (pos, neg):
        m.step("simp_all [h₁, h₂, hdp]", focus=g, hyps=["h₁", "h₂", "hdp"])
    return o, m


def showcase_index():
    modules = {
        "Mathlib.Order.Basic": [],
        "Mathlib.Logic.Basic": [],
        "Mathlib.Data.SetLike.Basic": ["Mathlib.Order.Basic"],
        "Mathlib.Order.Atoms": ["Mathlib.Order.Basic", "Mathlib.Data.SetLike.Basic", "Mathlib.Logic.Basic"],
        "ConNF.External.Common": [],
        "ConNF.External.Basic": ["ConNF.External.Common"],
    }
    decls = [
        decl("IsCoatom", "definition", "Mathlib.Order.Atoms", "def IsCoatom [Preorder α] [OrderTop α] (a : α) : Prop",
             doc="An element is a coatom if it is covered by `⊤`."),
        decl("isCoatom_iff", "theorem", "Mathlib.Order.Atoms",
             "theorem isCoatom_iff [OrderTop A] {K : A} : IsCoatom K ↔ K ≠ ⊤ ∧ ∀ H g, K ≤ H → g ∉ K → g ∈ H → H = ⊤",
             refs=["IsCoatom"]),
        decl("lt_iff_le_not_le", "theorem", "Mathlib.Order.Basic", "theorem lt_iff_le_not_le : a < b ↔ a ≤ b ∧ ¬b ≤ a"),
        decl("SetLike.not_le_iff_exists", "theorem", "Mathlib.Data.SetLike.Basic",
             "theorem SetLike.not_le_iff_exists : ¬p ≤ q ↔ ∃ x ∈ p, x ∉ q"),
        decl("and_comm", "theorem", "Mathlib.Logic.Basic", "theorem and_comm : a ∧ b ↔ b ∧ a"),
        decl("and_imp", "theorem", "Mathlib.Logic.Basic", "theorem and_imp : (a ∧ b → c) ↔ (a → b → c)"),
        decl("exists_imp", "theorem", "Mathlib.Logic.Basic", "theorem exists_imp : ((∃ x, p x) → b) ↔ ∀ x, p x → b"),
        decl("cross", "definition", "ConNF.External.Basic", "def cross (x y : TSet γ) : TSet α",
             refs=["vCross"]),
        decl("vCross", "definition", "ConNF.External.Common", "def vCross (x y : TSet γ) : TSet α"),
        decl("mem_inter_iff", "theorem", "ConNF.External.Common", "theorem mem_inter_iff : z ∈' x ⊓' y ↔ z ∈' x ∧ z ∈' y"),
        decl("vCross_spec", "theorem", "ConNF.External.Common",
             "theorem vCross_spec : a ∈' vCross x y ↔ ∃ b c, a = ⟨b, c⟩' ∧ b ∈' x ∧ c ∈' y", refs=["vCross"]),
        decl("op_mem_converse_iff", "theorem", "ConNF.External.Basic",
             "theorem op_mem_converse_iff : ⟨a, b⟩' ∈' converse x ↔ ⟨b, a⟩' ∈' x"),
        decl("op_inj", "theorem", "ConNF.External.Basic", "theorem op_inj : ⟨a, b⟩' = ⟨c, d⟩' ↔ a = c ∧ b = d"),
        decl("mem_cross_iff", "theorem", "ConNF.External.Basic",
             "theorem mem_cross_iff (x y : TSet γ) : ∀ a, a ∈' cross hβ hγ hδ x y ↔ ∃ b c, a = ⟨b, c⟩' ∧ b ∈' x ∧ c ∈' y",
             refs=["cross"]),
    ]
    return {"schema": INDEX_SCHEMA, "modules": modules, "declarations": decls}


def candidate(metric, proof):
    return {"theoremName": proof.name, "metric": metric, "proofText": proof.text, "trace": proof.trace()}


def build_showcase():
    kd5 = kd5_weaker_than_kd45()
    kdb_orig, kdb_mod = kd_weaker_than_kdb()
    cross_orig, cross_len, cross_dep = mem_cross_iff()
    jac_orig, jac_len = summer_commute_jacobi()
    coatom_orig, coatom_dep = is_coatom_iff()
    hp_orig, hp_mod = hilbert_poly()
    out = ROOT / "showcase"
    write_jsonl(out / "originals.jsonl",
                [p.record() for p in (kd5, kdb_orig, cross_orig, jac_orig, coatom_orig, hp_orig)])
    write_jsonl(out / "optimized.jsonl", [
        candidate("length", cross_len),
        candidate("length", jac_len),
        candidate("dep", coatom_dep),
        candidate("dep", cross_dep),
        candidate("mod", kdb_mod),
        candidate("mod", hp_mod),
    ])
    write_json(out / "index.json", showcase_index())


# Reward-hacking fixtures ---------------------------------------------------

def anti_gaming():
    P, A, B = prop("P"), prop("A"), prop("B")
    rows = []

    # The whole goal restated as a `have`, then closed with it.
    body = "  have h : P := by\n    constructor\n    · exact hA\n    · exact hB\n  exact h"
    w = Proof("wrapper_restates_parent", "theorem wrapper_restates_parent (hA : A) (hB : B) : P", body, P,
              hyps=[("hA", A), ("hB", B)])
    hg, main = w.step("have h : P := by", intro=["h"], spawned=[goal_spec(P)], children=[goal_spec(P, add=[("h", P)])])
    l, r = w.step("constructor", focus=hg, children=[goal_spec(A), goal_spec(B)])
    w.step("exact hA", focus=l, hyps=["hA"])
    w.step("exact hB", focus=r, hyps=["hB"])
    w.step("exact h", focus=main, hyps=["h"])
    rows.append(w.record())

    # The same sequent spawned twice, once in each branch of a split.
    body = ("  constructor\n"
            "  · have h : A ∧ B := by\n      constructor\n      · exact hA\n      · exact hB\n    exact left h\n"
            "  · have h : A ∧ B := by\n      constructor\n      · exact hA\n      · exact hB\n    exact right h")
    d = Proof("duplicated_sequent", "theorem duplicated_sequent (hA : A) (hB : B) : P ∧ Q", body,
              app("And", P, prop("Q")), hyps=[("hA", A), ("hB", B)])
    ab = app("And", A, B)
    branches = d.step("constructor", children=[goal_spec(P), goal_spec(prop("Q"))])
    for branch, closer in zip(branches, ("left", "right")):
        hg, main = d.step("have h : A ∧ B := by", focus=branch, intro=["h"], spawned=[goal_spec(ab)],
                          children=[goal_spec(d.goals[branch]["target"], add=[("h", ab)])])
        l, r = d.step("constructor", focus=hg, children=[goal_spec(A), goal_spec(B)])
        d.step("exact hA", focus=l, hyps=["hA"])
        d.step("exact hB", focus=r, hyps=["hB"])
        d.step(f"exact {closer} h", focus=main, hyps=["h"], decls=[closer])
    rows.append(d.record())

    # A spawned goal closed in two steps.
    body = "  have h : A ∧ B := by\n    refine ⟨hA, ?_⟩\n    exact hB\n  exact finish h"
    t = Proof("trivial_spawn", "theorem trivial_spawn (hA : A) (hB : B) : P", body, P, hyps=[("hA", A), ("hB", B)])
    hg, main = t.step("have h : A ∧ B := by", intro=["h"], spawned=[goal_spec(ab)], children=[goal_spec(P, add=[("h", ab)])])
    (g,) = t.step("refine ⟨hA, ?_⟩", focus=hg, hyps=["hA"], children=[goal_spec(B)])
    t.step("exact hB", focus=g, hyps=["hB"])
    t.step("exact finish h", focus=main, hyps=["h"], decls=["finish"])
    rows.append(t.record())
    write_jsonl(ROOT / "anti_gaming.jsonl", rows)


# Hermetic corpus -----------------------------------------------------------

# Each family: statement template, the original tactic chain, and a shorter
# replacement. A chain entry is (tactic, declarations, next target or None).
FAMILIES = [
    dict(stem="add_rotate", project="Mathlib",
         stmt="theorem {name} ({a} {b} {c} : ℕ) : {a} + {b} + {c} = {c} + {b} + {a}", rhs="{c} + {b} + {a}", lhs="{a} + {b} + {c}",
         chain=[("rw [Nat.add_assoc]", ["Nat.add_assoc"], "{a} + ({b} + {c})"),
                ("rw [Nat.add_comm {b} {c}]", ["Nat.add_comm"], "{a} + ({c} + {b})"),
                ("rw [Nat.add_comm {a}]", ["Nat.add_comm"], None)],
         short=[("omega", [], None)]),
    dict(stem="mul_rotate", project="Mathlib",
         stmt="theorem {name} ({a} {b} {c} : ℕ) : {a} * {b} * {c} = {b} * ({c} * {a})", rhs="{b} * ({c} * {a})", lhs="{a} * {b} * {c}",
         chain=[("rw [Nat.mul_comm {a} {b}]", ["Nat.mul_comm"], "{b} * {a} * {c}"),
                ("rw [Nat.mul_assoc]", ["Nat.mul_assoc"], "{b} * ({a} * {c})"),
                ("rw [Nat.mul_comm {a} {c}]", ["Nat.mul_comm"], None)],
         short=[("ring", [], None)]),
    dict(stem="sub_self_add", project="Compfiles",
         stmt="theorem {name} ({a} {b} : ℤ) : {a} + {b} - {b} = {a}", rhs="{a}", lhs="{a} + {b} - {b}",
         chain=[("rw [Int.sub_eq_add_neg]", ["Int.sub_eq_add_neg"], "{a} + {b} + -{b}"),
                ("rw [Int.add_assoc]", ["Int.add_assoc"], "{a} + ({b} + -{b})"),
                ("rw [Int.add_right_neg]", ["Int.add_right_neg"], "{a} + 0"),
                ("rw [Int.add_zero]", ["Int.add_zero"], None)],
         short=[("simp", [], None)]),
    dict(stem="two_mul_eq", project="Compfiles",
         stmt="theorem {name} ({a} : ℕ) : 2 * {a} = {a} + {a}", rhs="{a} + {a}", lhs="2 * {a}",
         chain=[("rw [Nat.succ_mul]", ["Nat.succ_mul"], "1 * {a} + {a}"),
                ("rw [Nat.one_mul]", ["Nat.one_mul"], None)],
         short=[("omega", [], None)]),
    dict(stem="sq_expand", project="MiniF2F",
         stmt="theorem {name} ({a} {b} : ℤ) : ({a} + {b}) ^ 2 = {a} ^ 2 + 2 * {a} * {b} + {b} ^ 2",
         rhs="{a} ^ 2 + 2 * {a} * {b} + {b} ^ 2", lhs="({a} + {b}) ^ 2",
         chain=[("rw [sq]", ["sq"], "({a} + {b}) * ({a} + {b})"),
                ("rw [add_mul]", ["add_mul"], "{a} * ({a} + {b}) + {b} * ({a} + {b})"),
                ("rw [mul_add, mul_add]", ["mul_add"], "{a} * {a} + {a} * {b} + ({b} * {a} + {b} * {b})"),
                ("ring_nf", [], None)],
         short=[("ring", [], None)]),
    dict(stem="le_add_both", project="MiniF2F",
         stmt="theorem {name} ({a} {b} {c} : ℕ) (h : {a} ≤ {b}) : {a} + {c} ≤ {b} + {c}", rhs="{b} + {c}", lhs="{a} + {c}",
         chain=[("apply Nat.add_le_add_right", ["Nat.add_le_add_right"], "{a} ≤ {b}"),
                ("exact h", [], None)],
         short=[("omega", [], None)], rel="LE.le", hyp="h"),
    dict(stem="max_self_le", project="Mathlib",
         stmt="theorem {name} ({a} {b} : ℕ) (h : {a} ≤ {b}) : max {a} {b} = {b}", rhs="{b}", lhs="max {a} {b}",
         chain=[("rw [Nat.max_def]", ["Nat.max_def"], "if {a} ≤ {b} then {b} else {a}"),
                ("split_ifs with hab", [], "{b}"),
                ("rfl", [], None)],
         short=[("exact Nat.max_eq_right h", ["Nat.max_eq_right"], None)], hyp="h"),
    dict(stem="dvd_mul_both", project="HepLean",
         stmt="theorem {name} ({a} {b} {c} : ℕ) (h : {a} ∣ {b}) : {a} ∣ {b} * {c}", rhs="{b} * {c}", lhs="{a}",
         chain=[("obtain ⟨k, hk⟩ := h", [], "{a} ∣ {a} * k * {c}"),
                ("rw [hk]", [], "{a} ∣ {a} * k * {c}"),
                ("rw [Nat.mul_assoc]", ["Nat.mul_assoc"], "{a} ∣ {a} * (k * {c})"),
                ("exact Nat.dvd_mul_right {a} (k * {c})", ["Nat.dvd_mul_right"], None)],
         short=[("exact Dvd.dvd.mul_right h {c}", ["Dvd.dvd.mul_right"], None)], rel="Dvd.dvd", hyp="h"),
]

VARIABLES = [("a", "b", "c"), ("x", "y", "z"), ("m", "n", "k"), ("p", "q", "r")]
CORPUS_INDEX_MODULES = {
    "Init.Data.Nat.Basic": [],
    "Init.Data.Int.Basic": [],
    "Mathlib.Algebra.Ring.Defs": ["Init.Data.Nat.Basic", "Init.Data.Int.Basic"],
    "Mathlib.Algebra.Group.Basic": ["Mathlib.Algebra.Ring.Defs"],
    "Corpus.Arith": ["Mathlib.Algebra.Group.Basic"],
}
CORPUS_LEMMAS = {
    "Nat.add_assoc": ("Init.Data.Nat.Basic", "theorem Nat.add_assoc (n m k : ℕ) : n + m + k = n + (m + k)"),
    "Nat.add_comm": ("Init.Data.Nat.Basic", "theorem Nat.add_comm (n m : ℕ) : n + m = m + n"),
    "Nat.mul_comm": ("Init.Data.Nat.Basic", "theorem Nat.mul_comm (n m : ℕ) : n * m = m * n"),
    "Nat.mul_assoc": ("Init.Data.Nat.Basic", "theorem Nat.mul_assoc (n m k : ℕ) : n * m * k = n * (m * k)"),
    "Nat.succ_mul": ("Init.Data.Nat.Basic", "theorem Nat.succ_mul (n m : ℕ) : succ n * m = n * m + m"),
    "Nat.one_mul": ("Init.Data.Nat.Basic", "theorem Nat.one_mul (n : ℕ) : 1 * n = n"),
    "Nat.add_le_add_right": ("Init.Data.Nat.Basic", "theorem Nat.add_le_add_right {n m : ℕ} (h : n ≤ m) (k : ℕ) : n + k ≤ m + k"),
    "Nat.max_def": ("Init.Data.Nat.Basic", "theorem Nat.max_def {n m : ℕ} : max n m = if n ≤ m then m else n"),
    "Nat.max_eq_right": ("Init.Data.Nat.Basic", "theorem Nat.max_eq_right {a b : ℕ} (h : a ≤ b) : max a b = b"),
    "Nat.dvd_mul_right": ("Init.Data.Nat.Basic", "theorem Nat.dvd_mul_right (a b : ℕ) : a ∣ a * b"),
    "Int.sub_eq_add_neg": ("Init.Data.Int.Basic", "theorem Int.sub_eq_add_neg {a b : ℤ} : a - b = a + -b"),
    "Int.add_assoc": ("Init.Data.Int.Basic", "theorem Int.add_assoc (a b c : ℤ) : a + b + c = a + (b + c)"),
    "Int.add_right_neg": ("Init.Data.Int.Basic", "theorem Int.add_right_neg (a : ℤ) : a + -a = 0"),
    "Int.add_zero": ("Init.Data.Int.Basic", "theorem Int.add_zero (a : ℤ) : a + 0 = a"),
    "sq": ("Mathlib.Algebra.Group.Basic", "theorem sq [Monoid M] (a : M) : a ^ 2 = a * a"),
    "add_mul": ("Mathlib.Algebra.Ring.Defs", "theorem add_mul [Mul α] [Add α] [RightDistribClass α] (a b c : α) : (a + b) * c = a * c + b * c"),
    "mul_add": ("Mathlib.Algebra.Ring.Defs", "theorem mul_add [Mul α] [Add α] [LeftDistribClass α] (a b c : α) : a * (b + c) = a * b + a * c"),
    "Dvd.dvd.mul_right": ("Mathlib.Algebra.Group.Basic", "theorem Dvd.dvd.mul_right {a b : α} (h : a ∣ b) (c : α) : a ∣ b * c"),
}


SAME = object()


def render(text, names, name=None):
    a, b, c = names
    return text.format(a=a, b=b, c=c, name=name or "")


class CorpusTheorem:
    def __init__(self, fam, variant, names):
        self.fam = fam
        self.names = names
        self.name = f"{fam['stem']}_{variant}"
        self.statement = render(fam["stmt"], names, self.name)
        self.project = fam["project"]
        self.context = "Corpus.Arith"
        rel = fam.get("rel", "Eq")
        self.rel = rel
        self.lhs = render(fam["lhs"], names)
        self.rhs = render(fam["rhs"], names)
        self.target = app(rel, prop(self.lhs), prop(self.rhs))
        ty = const("ℤ" if ": ℤ)" in fam["stmt"] else "ℕ")
        self.hyps = [(v, ty, False) for key, v in zip("abc", names) if f"{{{key}}}" in fam["stmt"]]
        if "hyp" in fam:
            h_text = self.statement.split(f"({fam['hyp']} : ")[1].split(")")[0]
            self.hyps.append((fam["hyp"], prop(h_text)))

    def proof(self, chain, prefix=()):
        chain = list(prefix) + [(render(t, self.names), d, None if n is None else render(n, self.names))
                                for t, d, n in chain]
        body = "\n".join("  " + t for t, _, _ in chain)
        p = Proof(self.name, self.statement, body, self.target, hyps=self.hyps, project=self.project,
                  context=self.context, statement_refs=[])
        g = p.open[0]
        for tactic, decls, nxt in chain:
            uses = [self.fam["hyp"]] if "hyp" in self.fam and f" {self.fam['hyp']}" in f" {tactic}" else []
            if nxt is None:
                if tactic.startswith("rw ["):
                    (g,) = p.step(tactic, focus=g, decls=decls, hyps=uses, children=[goal_spec(prop(f"{self.rhs} = {self.rhs}"))])
                    p.step("with_reducible rfl", focus=g, locate=tactic)
                else:
                    p.step(tactic, focus=g, decls=decls, hyps=uses)
            else:
                (g,) = p.step(tactic, focus=g, decls=decls, hyps=uses, children=[goal_spec(self.stage(nxt))])
        return p

    def original(self):
        return self.proof(self.fam["chain"])

    def shorter(self):
        return self.proof(self.fam["short"])

    def stage(self, text):
        if text is SAME:
            return self.target
        if self.rel == "Eq":
            return eq(prop(text), prop(self.rhs))
        return prop(text)

    def padded(self):
        symbol = {"Eq": "=", "LE.le": "≤", "Dvd.dvd": "∣"}[self.rel]
        return self.proof(self.fam["chain"], prefix=[(f"show {self.lhs} {symbol} {self.rhs}", [], SAME)])


def respond(text, note):
    return f"{note}\n\n<IMPROVED>\n{text}\n</IMPROVED>\n"


def build_corpus():
    out = ROOT / "corpus"
    train, held_out, gen, ver = [], [], [], []
    seen_proofs = set()

    def verified(theorem, proof):
        key = (theorem.context, proof.text)
        if key not in seen_proofs:
            seen_proofs.add(key)
            ver.append({"contextId": theorem.context, "proofText": proof.text, "compiled": True,
                        "trace": proof.trace(), "diagnosticText": ""})

    def rejected(theorem, text, message):
        key = (theorem.context, text)
        if key not in seen_proofs:
            seen_proofs.add(key)
            ver.append({"contextId": theorem.context, "proofText": text, "compiled": False,
                        "diagnosticText": message})

    for fi, fam in enumerate(FAMILIES):
        for vi, names in enumerate(VARIABLES):
            t = CorpusTheorem(fam, vi + 1, names)
            orig = t.original()
            record = orig.record()
            (held_out if vi == 3 else train).append(record)
            short, padded = t.shorter(), t.padded()
            broken = t.statement + " := by\n  exact rfl"
            responses = []
            pattern = (fi + vi) % 4
            # pattern 0: improvement found; 1: improvement plus noise;
            # 2: only non-improving rewrites; 3: improvement that fails to compile
            if pattern in (0, 1):
                responses.append(respond(short.text, "A single decision procedure closes the goal."))
                verified(t, short)
            if pattern == 3:
                responses.append(respond(short.text, "Try automation."))
                rejected(t, short.text, "error: tactic failed, the goal could not be closed")
            responses.append(respond(orig.text, "The proof is already minimal."))
            verified(t, orig)
            responses.append(respond(padded.text, "Restate the goal first for clarity."))
            verified(t, padded)
            if pattern == 1:
                responses.append("I could not find an improvement.")
            elif pattern == 2:
                responses.append(respond(broken, "Close it by reflexivity."))
                rejected(t, broken, "error: type mismatch\n  rfl\nhas type\n  ?a = ?a")
            while len(responses) < 4:
                responses.append(respond(broken, "Close it by reflexivity."))
                rejected(t, broken, "error: type mismatch\n  rfl\nhas type\n  ?a = ?a")
            gen.append({"key": t.name, "responses": responses[:4]})

    write_jsonl(out / "traces.jsonl", train)
    write_jsonl(out / "eval.jsonl", held_out)
    write_jsonl(out / "generator.jsonl", gen)
    write_jsonl(out / "verifier.jsonl", ver)

    decls = [decl(n, "theorem", m, s) for n, (m, s) in sorted(CORPUS_LEMMAS.items())]
    for r in train + held_out:
        refs = sorted({d for s in r["steps"] for d in s["referencedDeclNames"]})
        decls.append(decl(r["theoremName"], "theorem", "Corpus.Arith", r["statementText"], refs=refs))
    write_json(out / "index.json", {"schema": INDEX_SCHEMA, "modules": CORPUS_INDEX_MODULES, "declarations": decls})

    (out / "examples.txt").write_text(
        "Original:\n  rw [Nat.add_comm]\n  rw [Nat.add_assoc]\n  rfl\nImproved:\n  omega\n", encoding="utf-8")
    buffer = {"rho": 0.25, "mode": "join", "piMax": 0.9, "gamma": 0.5, "winners": 2, "losers": 2, "seed": 17}
    base = {
        "budget": 4,
        "temperature": 0.8,
        "maxTokens": 4096,
        "buffer": buffer,
        "augment": {"cos": True, "context": True, "examples": True, "informal": False},
        "generator": {"kind": "replay", "target": "generator.jsonl"},
        "verifier": {"kind": "replay", "target": "verifier.jsonl"},
        "traces": "traces.jsonl",
        "evalTraces": "eval.jsonl",
        "index": "index.json",
        "reservoir": "reservoir.json",
        "examples": "examples.txt",
    }
    write_json(out / "run.json", dict(base, metric="length", outputDir="out/length"))
    write_json(out / "run-dep.json", dict(base, metric="dep", outputDir="out/dep"))


if __name__ == "__main__":
    build_showcase()
    anti_gaming()
    build_corpus()
