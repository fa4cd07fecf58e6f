"""Shared strategies and small fixtures."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from falcon_alc.syntax import (
    And, Bottom, ConceptAssertion, Exists, Forall, Name, Not, Ontology, Or,
    RoleAssertion, Signature, Subsumption, Top,
)

CONCEPTS = ("A", "B", "C", "D")
RELATIONS = ("r", "s")
INDIVIDUALS = ("a", "b", "c")
SIG = Signature(CONCEPTS, RELATIONS, INDIVIDUALS)


def concepts(max_leaves: int = 8, concept_names=CONCEPTS, relation_names=RELATIONS):
    leaves = st.one_of(
        st.sampled_from(concept_names).map(Name),
        st.just(Top()),
        st.just(Bottom()),
    )

    def extend(children):
        rel = st.sampled_from(relation_names)
        return st.one_of(
            children.map(Not),
            st.builds(And, children, children),
            st.builds(Or, children, children),
            st.builds(Exists, rel, children),
            st.builds(Forall, rel, children),
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)


@st.composite
def ontologies(draw):
    tbox = draw(st.lists(st.builds(Subsumption, concepts(4), concepts(4)), max_size=5))
    ca = draw(st.lists(st.builds(ConceptAssertion, concepts(3), st.sampled_from(INDIVIDUALS)),
                       max_size=4))
    ra = draw(st.lists(st.builds(RoleAssertion, st.sampled_from(RELATIONS),
                                 st.sampled_from(INDIVIDUALS), st.sampled_from(INDIVIDUALS)),
                       max_size=4))
    return Ontology.build(SIG, tbox + ca + ra)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record one ``(number, passed, detail)`` line for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number: int, passed: bool, detail: str) -> None:
        lines.append((number, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
