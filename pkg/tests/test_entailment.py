from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from falcon_alc.datasets import builtin_family, family_crisp_model
from falcon_alc.entailment import (
    DISPROVED, ENTAILED, UNPROVABLE, CrispInterpretation, Thresholds, consistency_degree,
    crisp_check, encode_lookup, instantiation_degree, query_degree, role_degree,
    satisfiability_degree, subsumption_degree, threshold_model,
)
from falcon_alc.interpreter import LookupModel, ModelHandle
from falcon_alc.syntax import (
    And, Bottom, ConceptAssertion, Exists, Forall, Name, Not, Or, Ontology, RoleAssertion,
    Signature, Subsumption, Top, parse_ontology,
)

from conftest import CONCEPTS, INDIVIDUALS, RELATIONS, SIG, ontologies


def member(interp, c, x) -> bool:
    """Element-wise classical semantics, independent of the set algebra
    used by the library."""
    if isinstance(c, Top):
        return True
    if isinstance(c, Bottom):
        return False
    if isinstance(c, Name):
        return x in interp.concepts.get(c.id, ())
    if isinstance(c, Not):
        return not member(interp, c.child, x)
    if isinstance(c, And):
        return member(interp, c.left, x) and member(interp, c.right, x)
    if isinstance(c, Or):
        return member(interp, c.left, x) or member(interp, c.right, x)
    rel = interp.relations.get(c.relation, ())
    succ = [y for y in interp.universe if (x, y) in rel]
    if isinstance(c, Exists):
        return any(member(interp, c.child, y) for y in succ)
    return all(member(interp, c.child, y) for y in succ)


def brute_violations(interp, onto):
    out = []
    for ax in onto.axioms:
        if isinstance(ax, Subsumption):
            ok = all(member(interp, ax.sup, x) for x in interp.universe
                     if member(interp, ax.sub, x))
        elif isinstance(ax, ConceptAssertion):
            ok = member(interp, ax.concept, interp.individuals[ax.individual])
        else:
            ok = (interp.individuals[ax.subject], interp.individuals[ax.object]) in \
                interp.relations.get(ax.relation, ())
        if not ok:
            out.append(ax)
    return tuple(out)


@st.composite
def interpretations(draw):
    n = draw(st.integers(1, 5))
    univ = tuple(range(n))
    concepts = {c: draw(st.frozensets(st.sampled_from(univ))) for c in CONCEPTS}
    pairs = list(itertools.product(univ, univ))
    relations = {r: draw(st.frozensets(st.sampled_from(pairs))) for r in RELATIONS}
    individuals = {a: draw(st.sampled_from(univ)) for a in INDIVIDUALS}
    return CrispInterpretation.build(univ, concepts, relations, individuals)


@settings(max_examples=50, deadline=None)
@given(interpretations(), ontologies())
def test_crisp_check_matches_brute_force(interp, onto):
    got = crisp_check(interp, onto)
    want = brute_violations(interp, onto)
    assert got.violated == want
    assert got.satisfied == (not want)


def test_crisp_check_examples():
    family = builtin_family()
    assert crisp_check(family_crisp_model(), family).satisfied
    o = parse_ontology("x : A")
    empty = CrispInterpretation.build(["e"], {"A": []}, {}, {"x": "e"})
    res = crisp_check(empty, o)
    assert not res.satisfied and res.violated == o.abox_concept
    o2 = parse_ontology("A SubClassOf Nothing")
    assert not crisp_check(CrispInterpretation.build([0], {"A": [0]}), o2).satisfied
    with pytest.raises(KeyError):
        crisp_check(CrispInterpretation.build([0], {"A": [0]}), parse_ontology("y : A"))


def test_everything_person_is_not_a_family_model():
    family = builtin_family()
    names = family.signature.individual_names
    interp = CrispInterpretation.build(names, {"Person": names}, {}, {a: a for a in names})
    assert not crisp_check(interp, family).satisfied


def test_interpretation_invariants():
    with pytest.raises(ValueError):
        CrispInterpretation.build([0, 1], {"A": [2]})
    with pytest.raises(ValueError):
        CrispInterpretation.build([0], {}, {"r": [(0, 1)]})
    with pytest.raises(ValueError):
        CrispInterpretation.build([0, 0])


def _lookup(concepts, relations=None, individuals=None, tnorm="product"):
    sig = Signature(tuple(concepts), tuple(relations or {}), tuple(individuals or {}))
    n = len(next(iter(concepts.values())))
    cm = np.array([concepts[c] for c in sig.concept_names], dtype=float)
    rm = np.array([relations[r] for r in sig.relation_names], dtype=float) \
        if relations else None
    return LookupModel(sig, n, dict(individuals or {}), cm, rm, tnorm)


def test_threshold_model_examples():
    m = _lookup({"A": [1, 0, 1], "B": [0, 0, 1]}, {"r": [[0, 1, 0], [0, 0, 0], [1, 1, 1]]},
                {"a": 2})
    interp = threshold_model(m)
    assert interp.concepts == {"A": {0, 2}, "B": {2}}
    assert interp.relations["r"] == {(0, 1), (2, 0), (2, 1), (2, 2)}
    assert interp.individuals == {"a": 2}
    full = threshold_model(_lookup({"A": [0.2, 0.0, 0.9]}), tau=0.0)
    assert full.concepts["A"] == set(full.universe)


def test_threshold_model_on_neural_model(rng):
    sig = Signature(("A",), ("r",), ("a", "b"))
    m = ModelHandle.initialize(sig, 4, "product", rng)
    interp = threshold_model(m, m.named_pool())
    assert interp.universe == ("a", "b") and interp.individuals == {"a": "a", "b": "b"}
    assert set(threshold_model(m, m.named_pool(), tau=0.0).concepts["A"]) == {"a", "b"}


def test_encode_round_trip():
    interp = family_crisp_model()
    family = builtin_family()
    look = encode_lookup(interp, family.signature)
    back = threshold_model(look)
    names = interp.universe
    for c in family.signature.concept_names:
        assert {names[i] for i in back.concepts[c]} == interp.concepts.get(c, set())


def test_degree_examples_on_lookup_models():
    m = _lookup({"A": [1, 0, 0], "B": [0, 1, 1]}, {"r": [[0, 1, 0], [0, 0, 0], [0, 0, 0]]},
                {"a": 0, "b": 1})
    assert satisfiability_degree(m, Top()).degree == 1.0
    assert satisfiability_degree(m, Bottom()).degree == 0.0
    assert satisfiability_degree(m, Name("A")).degree == 1.0
    for c in (Name("A"), Exists("r", Name("B")), Not(Name("B"))):
        assert subsumption_degree(m, c, c).aggregate == 1.0
    assert instantiation_degree(m, Name("A"), "a").aggregate == 1.0
    assert instantiation_degree(m, Top(), "b").aggregate == 1.0
    assert instantiation_degree(m, Bottom(), "b").aggregate == 0.0
    assert role_degree(m, "r", "a", "b").aggregate == 1.0
    with pytest.raises(KeyError):
        instantiation_degree(m, Name("A"), "zz")


def test_classification():
    # A is contained in B in both models, so A SubClassOf B is entailed.
    # B SubClassOf A fails in both: disproved. C SubClassOf A fails only in m2: unprovable.
    m1 = _lookup({"A": [1, 0, 0], "B": [1, 1, 0], "C": [1, 0, 0]})
    m2 = _lookup({"A": [0, 1, 0], "B": [0, 1, 1], "C": [0, 0, 1]})
    ens = [m1, m2]
    a, b, c = Name("A"), Name("B"), Name("C")
    assert subsumption_degree(ens, a, b).classification == ENTAILED
    assert subsumption_degree(ens, b, a).classification == DISPROVED
    v = subsumption_degree(ens, c, a)
    assert v.classification == UNPROVABLE and v.per_model == (1.0, 0.0)
    assert v.aggregate == min(v.per_model) and v.k == 2
    assert subsumption_degree(ens, c, a, aggregate="mean").aggregate == 0.5
    strict = subsumption_degree(ens, c, a, thresholds=Thresholds(0.7, 0.9))
    assert strict.classification == UNPROVABLE
    with pytest.raises(ValueError):
        subsumption_degree(ens, c, a, aggregate="median")


def test_thresholds_parse():
    assert Thresholds.parse("0.8") == Thresholds(0.8, 0.8)
    assert Thresholds.parse("0.7,0.6") == Thresholds(0.7, 0.6)
    with pytest.raises(ValueError):
        Thresholds.parse("1.5")
    with pytest.raises(ValueError):
        Thresholds.parse("0.1,0.2,0.3")


def test_query_dispatch_and_json():
    m = _lookup({"A": [1, 0], "B": [1, 1]}, {"r": [[0, 1], [0, 0]]}, {"a": 0, "b": 1})
    assert query_degree(m, Subsumption(Name("A"), Name("B"))).aggregate == 1.0
    assert query_degree(m, ConceptAssertion(Name("A"), "b")).aggregate == 0.0
    v = query_degree(m, RoleAssertion("r", "a", "b"), eval_pool_seed=3)
    assert v.classification == ENTAILED
    assert '"classification": "Entailed"' in v.to_json()


def test_consistency_degree():
    m = _lookup({"A": [1, 0.4], "B": [0, 1]}, individuals={"a": 0, "b": 1})
    assert consistency_degree(m, []) == 1.0
    assert consistency_degree(m, [ConceptAssertion(Bottom(), "a")]) == 0.0
    abox = [ConceptAssertion(Name("A"), "a"), ConceptAssertion(Name("A"), "b")]
    assert consistency_degree(m, abox) == pytest.approx(0.4)
    m2 = _lookup({"A": [1, 0.9], "B": [0, 1]}, individuals={"a": 0, "b": 1})
    assert consistency_degree([m, m2], abox) == pytest.approx(0.9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nested_ensembles_and_consistency_bound(seed):
    rng = np.random.default_rng(seed)
    sig = Signature(CONCEPTS, RELATIONS, INDIVIDUALS)
    models = [LookupModel(sig, 4, {"a": 0, "b": 1, "c": 3}, rng.random((4, 4)),
                          rng.random((2, 4, 4))) for _ in range(6)]
    queries = [(Name("A"), Name("B")), (Exists("r", Name("C")), Or(Name("A"), Name("D"))),
               (Forall("s", Name("B")), Not(Name("C")))]
    for c, d in queries:
        aggs = [subsumption_degree(models[:k], c, d).aggregate for k in range(1, 7)]
        assert all(x >= y for x, y in zip(aggs, aggs[1:]))
    abox = [ConceptAssertion(Name("A"), "a"), ConceptAssertion(Exists("r", Name("B")), "c"),
            RoleAssertion("s", "b", "a")]
    deg = consistency_degree(models, abox)
    for ax in abox:
        per = [instantiation_degree(m, ax.concept, ax.individual).aggregate
               if isinstance(ax, ConceptAssertion)
               else role_degree(m, ax.relation, ax.subject, ax.object).aggregate
               for m in models]
        assert deg <= max(per) + 1e-15
