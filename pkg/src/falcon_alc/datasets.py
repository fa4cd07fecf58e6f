"""Built-in ontologies: the Family ontology and a synthetic ranking KG."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .syntax import (
    And,
    Bottom,
    Concept,
    Exists,
    Name,
    Not,
    Ontology,
    Or,
    RoleAssertion,
    Subsumption,
    Top,
    parse_axiom,
    parse_ontology,
)
from .training import TrainConfig

FAMILY_TBOX = """\
Male SubClassOf Person
Female SubClassOf Person
(Male and Female) SubClassOf Nothing
Parent SubClassOf Person
Child SubClassOf Person
(Parent and Child) SubClassOf Nothing
Father SubClassOf Male
Boy SubClassOf Male
(Father and Boy) SubClassOf Nothing
Mother SubClassOf Female
Girl SubClassOf Female
(Mother and Girl) SubClassOf Nothing
Father SubClassOf Parent
Mother SubClassOf Parent
(Father and Mother) SubClassOf Nothing
Boy SubClassOf Child
Girl SubClassOf Child
(Boy and Girl) SubClassOf Nothing
(Female and Parent) SubClassOf Mother
(Male and Parent) SubClassOf Father
(Female and Child) SubClassOf Girl
(Male and Child) SubClassOf Boy
some hasChild.Person SubClassOf Parent
some hasParent.Person SubClassOf Child
Grandma SubClassOf Mother
"""


def family_individual(concept: str) -> str:
    return "a_" + concept.lower()


@lru_cache(maxsize=None)
def builtin_family() -> Ontology:
    """The 25-axiom Family TBox plus one asserted individual per concept
    name (``a_child : Child`` and so on); no role assertions."""
    tbox = parse_ontology(FAMILY_TBOX)
    lines = [FAMILY_TBOX]
    lines += [f"{family_individual(c)} : {c}" for c in tbox.signature.concept_names]
    return parse_ontology("\n".join(lines))


def family_text() -> str:
    return builtin_family().render()


# Concept names each Family individual must belong to in the intended model.
FAMILY_SUPERCLASSES = {
    "Male": ("Person",),
    "Female": ("Person",),
    "Parent": ("Person",),
    "Child": ("Person",),
    "Person": (),
    "Father": ("Male", "Parent", "Person"),
    "Boy": ("Male", "Child", "Person"),
    "Mother": ("Female", "Parent", "Person"),
    "Girl": ("Female", "Child", "Person"),
    "Grandma": ("Mother", "Female", "Parent", "Person"),
}


def family_crisp_model():
    """Hand-built classical model of the Family ontology on its ten named
    individuals: each ``a_x`` belongs to ``X`` and its superclasses only,
    and both relations are empty."""
    from .entailment import CrispInterpretation

    onto = builtin_family()
    members: dict[str, set[str]] = {c: set() for c in onto.signature.concept_names}
    for c, ups in FAMILY_SUPERCLASSES.items():
        a = family_individual(c)
        for d in (c, *ups):
            members[d].add(a)
    names = onto.signature.individual_names
    return CrispInterpretation.build(names, members, {r: () for r in onto.signature.relation_names},
                                     {a: a for a in names})


def family_config(**overrides) -> TrainConfig:
    """Family training settings: dim 50, lr 1e-2, Product t-norm, all 25
    TBox axioms per batch, 2 + 2 anonymous individuals per step, plus the
    loss weights and initialization that make training reliable here."""
    base = dict(dim=50, lr=1e-2, steps=2000, tnorm="product", batch_tbox=25,
                n_gauss=2, n_uniform=2, gauss_std=0.1,
                alpha=FAMILY_ALPHA, beta=FAMILY_BETA,
                embed_init=1.0, hidden_gain=FAMILY_HIDDEN_GAIN)
    base.update(overrides)
    return TrainConfig(**base)


FAMILY_ALPHA = 0.7
FAMILY_BETA = 0.15
FAMILY_HIDDEN_GAIN = 16.0


# The four representative queries: two entailed, one disproved, one unprovable.
FAMILY_QUERIES = {
    "entailed_girl": "(Female and Child) SubClassOf Girl",
    "entailed_mother": "(some hasChild.Person and Female) SubClassOf Mother",
    "disproved": "Person SubClassOf Parent",
    "unprovable": "Mother SubClassOf Grandma",
}
FAMILY_QUERY_LABELS = {
    "entailed_girl": "entailed",
    "entailed_mother": "entailed",
    "disproved": "disproved",
    "unprovable": "unprovable",
}


def family_query(key: str) -> Subsumption:
    return parse_axiom(FAMILY_QUERIES[key], builtin_family().signature)  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# label oracle for quantifier-free queries
# ---------------------------------------------------------------------------


def _truth(c: Concept, valuation: dict[str, bool]) -> bool:
    if isinstance(c, Name):
        return valuation[c.id]
    if isinstance(c, Top):
        return True
    if isinstance(c, Bottom):
        return False
    if isinstance(c, Not):
        return not _truth(c.child, valuation)
    if isinstance(c, And):
        return _truth(c.left, valuation) and _truth(c.right, valuation)
    if isinstance(c, Or):
        return _truth(c.left, valuation) or _truth(c.right, valuation)
    raise ValueError("quantified concepts are not handled by the propositional oracle")


def _quantifier_free(c: Concept) -> bool:
    try:
        _truth(c, _AllTrue())
    except ValueError:
        return False
    return True


class _AllTrue(dict):
    def __missing__(self, key):
        return True


def propositional_valuations(ontology: Ontology):
    """Valuations of the concept names satisfying every quantifier-free TBox
    axiom at a single element.

    TBox axioms with an existential on the left (``some r.C SubClassOf D``)
    hold in any model with empty relations, so for quantifier-free queries
    they never rule out a counterexample and can be ignored here.
    """
    names = ontology.signature.concept_names
    axioms = []
    for ax in ontology.tbox:
        if _quantifier_free(ax.sub) and _quantifier_free(ax.sup):
            axioms.append(ax)
        elif not (isinstance(ax.sub, Exists) and _quantifier_free(ax.sup)):
            raise ValueError(f"oracle does not support axiom {ax}")
    out = []
    for bits in itertools.product((False, True), repeat=len(names)):
        v = dict(zip(names, bits))
        if all(not _truth(ax.sub, v) or _truth(ax.sup, v) for ax in axioms):
            out.append(v)
    return out


def label_subsumption(ontology: Ontology, query: Subsumption) -> str:
    """``entailed``, ``disproved`` or ``unprovable`` for a quantifier-free
    query against an ontology whose existential axioms only appear on the
    left of TBox axioms and whose ABox has only concept-name assertions.

    Entailed: no valuation satisfies ``C and not D``. Disproved: some named
    individual is forced into ``C and not D`` by its own assertions.
    """
    if not (_quantifier_free(query.sub) and _quantifier_free(query.sup)):
        raise ValueError("the propositional oracle only labels quantifier-free queries")
    vals = propositional_valuations(ontology)
    counter = And(query.sub, Not(query.sup))
    if not any(_truth(counter, v) for v in vals):
        return "entailed"
    by_individual: dict[str, list[Concept]] = {}
    for ax in ontology.abox_concept:
        by_individual.setdefault(ax.individual, []).append(ax.concept)
    for concepts in by_individual.values():
        compatible = [v for v in vals if all(_truth(c, v) for c in concepts)]
        if compatible and all(_truth(counter, v) for v in compatible):
            return "disproved"
    return "unprovable"


@dataclass(frozen=True)
class LabeledQueries:
    entailed: tuple[Subsumption, ...]
    unprovable: tuple[Subsumption, ...]


@lru_cache(maxsize=None)
def family_name_queries() -> LabeledQueries:
    """All name-level queries ``A SubClassOf B`` and ``(A and B) SubClassOf
    Nothing`` over the Family concepts that are not TBox axioms, split into
    entailed ones and the rest (unprovable or disproved)."""
    onto = builtin_family()
    names = onto.signature.concept_names
    asserted = set(onto.tbox)
    candidates = []
    for a, b in itertools.permutations(names, 2):
        candidates.append(Subsumption(Name(a), Name(b)))
    for a, b in itertools.combinations(names, 2):
        candidates.append(Subsumption(And(Name(a), Name(b)), Bottom()))
    def is_asserted(q: Subsumption) -> bool:
        if q in asserted:
            return True
        if isinstance(q.sub, And):
            return Subsumption(And(q.sub.right, q.sub.left), q.sup) in asserted
        return False

    entailed, rest = [], []
    for q in candidates:
        if is_asserted(q):
            continue
        (entailed if label_subsumption(onto, q) == "entailed" else rest).append(q)
    return LabeledQueries(tuple(entailed), tuple(rest))


# ---------------------------------------------------------------------------
# synthetic ranking KG
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RankingDataset:
    ontology: Ontology  # training axioms
    test: tuple[RoleAssertion, ...]
    all_true: frozenset[RoleAssertion]


def synthetic_kg(n_groups: int = 4, group_size: int = 5, test_fraction: float = 0.2,
                 seed: int = 0) -> RankingDataset:
    """Individuals in ``n_groups`` ordered chains. ``above`` is the
    transitive closure of each chain (``above(x, y)`` iff ``x`` precedes
    ``y`` in the same chain); ``sameGroup`` links every ordered pair of
    distinct members of a group. A random ``test_fraction`` of the ``above``
    triples is held out."""
    rng = np.random.default_rng(seed)
    members = [[f"e{g}_{i}" for i in range(group_size)] for g in range(n_groups)]
    above, same = [], []
    for chain in members:
        for i, j in itertools.permutations(range(group_size), 2):
            same.append(RoleAssertion("sameGroup", chain[i], chain[j]))
            if i < j:
                above.append(RoleAssertion("above", chain[i], chain[j]))
    n_test = int(round(test_fraction * len(above)))
    test_idx = set(rng.choice(len(above), size=n_test, replace=False).tolist())
    test = tuple(a for i, a in enumerate(above) if i in test_idx)
    train = [a for i, a in enumerate(above) if i not in test_idx] + same
    lines = [
        "declare concept Node",
        "declare relation above, sameGroup",
        "declare individual " + ", ".join(x for chain in members for x in chain),
        "some above.Thing SubClassOf Node",
        "some sameGroup.Thing SubClassOf Node",
    ]
    lines += [str(a) for a in train]
    lines += [f"{x} : Node" for chain in members for x in chain]
    onto = parse_ontology("\n".join(lines))
    return RankingDataset(onto, test, frozenset(above) | frozenset(same))
