from __future__ import annotations

import pytest
from hypothesis import given, settings

from falcon_alc.datasets import builtin_family
from falcon_alc.syntax import (
    And, ArityError, Bottom, ConceptAssertion, Exists, Forall, Name, Not, Ontology, Or,
    ParseError, RoleAssertion, Signature, Subsumption, Top, UndeclaredSymbolError,
    free_symbols, normalize_tbox, parse_axiom, parse_concept, parse_ontology, render_concept,
)

from conftest import concepts, ontologies


def test_single_axiom():
    o = parse_ontology("Male SubClassOf Person")
    assert len(o.tbox) == 1
    assert set(o.signature.concept_names) == {"Male", "Person"}
    assert o.tbox[0] == Subsumption(Name("Male"), Name("Person"))


def test_equivalent_to_rejected():
    with pytest.raises(ParseError):
        parse_ontology("Parent EquivalentTo (Father or Mother)")


def test_syntax_error_reports_position():
    with pytest.raises(ParseError) as exc:
        parse_ontology("A SubClassOf B\nA SubClassOf (B and")
    assert exc.value.line == 2


def test_relation_used_as_concept_is_arity_error():
    with pytest.raises(ArityError):
        parse_ontology("A SubClassOf some r.B\nr SubClassOf B")


def test_strict_mode_requires_declarations():
    text = "A SubClassOf B"
    parse_ontology(text)
    with pytest.raises(UndeclaredSymbolError):
        parse_ontology(text, strict=True)


def test_grammar_forms():
    c = parse_concept("(not A and (some r.Thing or only s.Nothing))")
    assert c == And(Not(Name("A")), Or(Exists("r", Top()), Forall("s", Bottom())))
    assert parse_axiom("x : A") == ConceptAssertion(Name("A"), "x")
    assert parse_axiom("r(x, y)") == RoleAssertion("r", "x", "y")


def test_and_or_order_preserved():
    assert parse_concept("(A and B)") != parse_concept("(B and A)")


def test_comments_and_blank_lines():
    o = parse_ontology("# family\n\nA SubClassOf B  # trailing\n")
    assert len(o.tbox) == 1


def test_duplicates_dropped_and_counted():
    o = parse_ontology("A SubClassOf B\nA SubClassOf B\nx : A\nx : A")
    assert (len(o.tbox), len(o.abox_concept), o.duplicates_dropped) == (1, 1, 2)


def test_signature_invariants():
    with pytest.raises(ValueError):
        Signature(("A",), ("A",), ())
    with pytest.raises(ValueError):
        Signature(("1bad",), (), ())


def test_free_symbols():
    assert free_symbols(Name("A")) == ({"A"}, frozenset())
    assert free_symbols(Exists("r", Not(Name("B")))) == ({"B"}, {"r"})
    assert free_symbols(And(Top(), Bottom())) == (frozenset(), frozenset())


def test_normalize_tbox():
    o = parse_ontology("C SubClassOf D")
    (t,) = normalize_tbox(o)
    assert t.concept == And(Name("C"), Not(Name("D"))) and t.origin == 0
    assert normalize_tbox(Ontology(Signature())) == []


def test_builtin_family_shape():
    # published shape: 25 TBox axioms, 10 concept names, 2 relation names, one individual per concept
    o = builtin_family()
    assert len(o.tbox) == 25
    assert len(o.signature.concept_names) == 10
    assert len(o.signature.relation_names) == 2
    assert len(o.abox_concept) == 10 and len(o.abox_role) == 0
    assert Subsumption(And(Name("Male"), Name("Female")), Bottom()) in o.tbox
    assert ConceptAssertion(Name("Child"), "a_child") in o.abox_concept


def test_family_normalization_example():
    o = builtin_family()
    targets = normalize_tbox(o)
    assert [t.origin for t in targets] == list(range(25))
    want = And(And(Name("Female"), Name("Parent")), Not(Name("Mother")))
    assert want in [t.concept for t in targets]


@settings(max_examples=200, deadline=None)
@given(concepts())
def test_concept_round_trip(c):
    assert parse_concept(render_concept(c)) == c


@settings(max_examples=100, deadline=None)
@given(ontologies())
def test_ontology_round_trip(o):
    back = parse_ontology(o.render())
    assert back.tbox == o.tbox
    assert back.abox_concept == o.abox_concept
    assert back.abox_role == o.abox_role
    assert set(back.signature.concept_names) <= set(o.signature.concept_names)


@settings(max_examples=50, deadline=None)
@given(ontologies())
def test_normalize_idempotent(o):
    first = normalize_tbox(o)
    again = normalize_tbox(Ontology.build(o.signature, o.axioms))
    assert first == again
    assert len(first) == len(o.tbox)
