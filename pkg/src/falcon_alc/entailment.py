"""Reasoning over ensembles of generated models, plus a crisp model checker.

Every query is answered model by model and the per-model degrees are then
aggregated (minimum by default). Quantifiers range over an evaluation pool:
the named individuals plus uniform anonymous points for neural models, or
the whole universe for lookup-table models.

Subsumption ``C SubClassOf D`` in one model has degree
``1 - max_a m(a, C and not D)``, i.e. one minus the strongest counterexample
in the pool. This equals ``min_a m(a, not C or D)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .interpreter import (
    DEFAULT_EVAL_POOL,
    Evaluator,
    LookupModel,
    ModelHandle,
    eval_pool,
    memberships,
    relation_membership,
)
from .syntax import (
    And,
    Axiom,
    Bottom,
    Concept,
    ConceptAssertion,
    Exists,
    Forall,
    Name,
    Not,
    Ontology,
    Or,
    RoleAssertion,
    Signature,
    Subsumption,
    Top,
    render_axiom,
    render_concept,
)

ENTAILED = "Entailed"
DISPROVED = "Disproved"
UNPROVABLE = "Unprovable"
AGGREGATES = ("min", "mean")


@dataclass(frozen=True)
class Thresholds:
    """``entailed``: aggregate degree needed for Entailed. ``disproved``:
    counterexample degree every model must reach for Disproved."""

    entailed: float = 0.7
    disproved: float = 0.7

    def __post_init__(self):
        for v in (self.entailed, self.disproved):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"threshold {v} outside [0, 1]")

    @classmethod
    def parse(cls, text: str) -> Thresholds:
        """``"0.7"`` (both) or ``"0.7,0.6"`` (entailed, disproved)."""
        parts = [float(p) for p in str(text).split(",") if p.strip()]
        if len(parts) == 1:
            return cls(parts[0], parts[0])
        if len(parts) == 2:
            return cls(*parts)
        raise ValueError(f"expected one or two thresholds, got {text!r}")


@dataclass(frozen=True)
class EntailmentVerdict:
    query: str
    per_model: tuple[float, ...]
    aggregate: float
    classification: str
    thresholds: Thresholds
    aggregate_mode: str = "min"
    counterexamples: tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return len(self.per_model)

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "per_model": list(self.per_model),
            "aggregate": self.aggregate,
            "classification": self.classification,
            "aggregate_mode": self.aggregate_mode,
            "thresholds": {"entailed": self.thresholds.entailed,
                           "disproved": self.thresholds.disproved},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class SatisfiabilityResult:
    query: str
    per_model: tuple[float, ...]
    degree: float  # max over models


def _models(ensemble) -> list:
    models = list(getattr(ensemble, "models", ensemble if isinstance(ensemble, Sequence)
                          else [ensemble]))
    if not models:
        raise ValueError("empty ensemble")
    return models


def _aggregate(values: Sequence[float], mode: str) -> float:
    if mode == "min":
        return float(min(values))
    if mode == "mean":
        return float(np.mean(values))
    raise ValueError(f"unknown aggregate {mode!r}; expected min or mean")


def _pool(model, seed: int, size: int):
    if isinstance(model, ModelHandle):
        return eval_pool(model, seed, size)
    return model.full_pool()


def _named_position(model, pool, individual: str) -> int:
    if individual not in model.signature.individual_names:
        raise KeyError(f"unknown individual {individual!r}")
    if isinstance(model, ModelHandle):
        return pool.named_ids.index(individual)
    return list(pool).index(model.individuals[individual])


def _classify(aggregate: float, counterexamples: Sequence[float], th: Thresholds) -> str:
    if aggregate >= th.entailed:
        return ENTAILED
    if all(c >= th.disproved for c in counterexamples):
        return DISPROVED
    return UNPROVABLE


def _verdict(query: str, per_model, counter, th, mode) -> EntailmentVerdict:
    agg = _aggregate(per_model, mode)
    return EntailmentVerdict(query, tuple(per_model), agg, _classify(agg, counter, th), th, mode,
                             tuple(counter))


def satisfiability_degree(ensemble, c: Concept, eval_pool_seed: int = 0,
                          pool_size: int = DEFAULT_EVAL_POOL) -> SatisfiabilityResult:
    per = [float(np.max(memberships(m, c, _pool(m, eval_pool_seed, pool_size))))
           for m in _models(ensemble)]
    return SatisfiabilityResult(render_concept(c), tuple(per), max(per))


def subsumption_degree(ensemble, c: Concept, d: Concept, eval_pool_seed: int = 0,
                       pool_size: int = DEFAULT_EVAL_POOL, thresholds: Thresholds = Thresholds(),
                       aggregate: str = "min") -> EntailmentVerdict:
    counter = []
    for m in _models(ensemble):
        cx = memberships(m, And(c, Not(d)), _pool(m, eval_pool_seed, pool_size))
        counter.append(float(np.max(cx)))
    per = [1.0 - x for x in counter]
    return _verdict(render_axiom(Subsumption(c, d)), per, counter, thresholds, aggregate)


def instantiation_degree(ensemble, c: Concept, individual: str, eval_pool_seed: int = 0,
                         pool_size: int = DEFAULT_EVAL_POOL,
                         thresholds: Thresholds = Thresholds(),
                         aggregate: str = "min") -> EntailmentVerdict:
    per = []
    for m in _models(ensemble):
        pool = _pool(m, eval_pool_seed, pool_size)
        per.append(float(memberships(m, c, pool)[_named_position(m, pool, individual)]))
    counter = [1.0 - x for x in per]
    return _verdict(render_axiom(ConceptAssertion(c, individual)), per, counter, thresholds,
                    aggregate)


def role_degree(ensemble, relation: str, subject: str, obj: str,
                thresholds: Thresholds = Thresholds(), aggregate: str = "min") -> EntailmentVerdict:
    per = []
    for m in _models(ensemble):
        for a in (subject, obj):
            if a not in m.signature.individual_names:
                raise KeyError(f"unknown individual {a!r}")
        per.append(relation_membership(m, subject, obj, relation))
    counter = [1.0 - x for x in per]
    return _verdict(render_axiom(RoleAssertion(relation, subject, obj)), per, counter,
                    thresholds, aggregate)


def query_degree(ensemble, axiom: Axiom, **kwargs) -> EntailmentVerdict:
    """Dispatch on the axiom form."""
    if isinstance(axiom, Subsumption):
        return subsumption_degree(ensemble, axiom.sub, axiom.sup, **kwargs)
    if isinstance(axiom, ConceptAssertion):
        return instantiation_degree(ensemble, axiom.concept, axiom.individual, **kwargs)
    kwargs.pop("eval_pool_seed", None)
    kwargs.pop("pool_size", None)
    return role_degree(ensemble, axiom.relation, axiom.subject, axiom.object, **kwargs)


def consistency_degree(ensemble, abox: Ontology | Iterable[Axiom], eval_pool_seed: int = 0,
                       pool_size: int = DEFAULT_EVAL_POOL) -> float:
    """Max over models of the weakest ABox assertion's membership. An empty
    ABox has degree 1."""
    if isinstance(abox, Ontology):
        assertions = list(abox.abox_concept) + list(abox.abox_role)
    else:
        assertions = [a for a in abox if not isinstance(a, Subsumption)]
    if not assertions:
        return 1.0
    best = 0.0
    for m in _models(ensemble):
        pool = _pool(m, eval_pool_seed, pool_size)
        cache: dict[Concept, np.ndarray] = {}
        worst = 1.0
        for ax in assertions:
            if isinstance(ax, ConceptAssertion):
                if ax.concept not in cache:
                    cache[ax.concept] = memberships(m, ax.concept, pool)
                v = cache[ax.concept][_named_position(m, pool, ax.individual)]
            else:
                v = relation_membership(m, ax.subject, ax.object, ax.relation)
            worst = min(worst, float(v))
        best = max(best, worst)
    return best


# ---------------------------------------------------------------------------
# crisp interpretations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CrispInterpretation:
    universe: tuple
    concepts: Mapping[str, frozenset]
    relations: Mapping[str, frozenset]
    individuals: Mapping[str, object]

    def __post_init__(self):
        dom = set(self.universe)
        if len(dom) != len(self.universe):
            raise ValueError("universe elements must be distinct")
        for name, ext in self.concepts.items():
            if not set(ext) <= dom:
                raise ValueError(f"extension of {name!r} leaves the universe")
        for name, ext in self.relations.items():
            if any(a not in dom or b not in dom for a, b in ext):
                raise ValueError(f"extension of {name!r} leaves the universe")
        for a, e in self.individuals.items():
            if e not in dom:
                raise ValueError(f"individual {a!r} is assigned outside the universe")

    @classmethod
    def build(cls, universe, concepts=None, relations=None, individuals=None):
        return cls(
            tuple(universe),
            {k: frozenset(v) for k, v in (concepts or {}).items()},
            {k: frozenset(tuple(p) for p in v) for k, v in (relations or {}).items()},
            dict(individuals or {}),
        )

    def extension(self, c: Concept) -> frozenset:
        """Classical extension of a concept description."""
        if isinstance(c, Name):
            return self.concepts.get(c.id, frozenset())
        if isinstance(c, Top):
            return frozenset(self.universe)
        if isinstance(c, Bottom):
            return frozenset()
        if isinstance(c, Not):
            return frozenset(self.universe) - self.extension(c.child)
        if isinstance(c, And):
            return self.extension(c.left) & self.extension(c.right)
        if isinstance(c, Or):
            return self.extension(c.left) | self.extension(c.right)
        if isinstance(c, (Exists, Forall)):
            rel = self.relations.get(c.relation, frozenset())
            filler = self.extension(c.child)
            succ: dict[object, set] = {}
            for a, b in rel:
                succ.setdefault(a, set()).add(b)
            if isinstance(c, Exists):
                return frozenset(x for x in self.universe if succ.get(x, set()) & filler)
            return frozenset(x for x in self.universe if succ.get(x, set()) <= filler)
        raise TypeError(f"not a concept description: {c!r}")

    def holds(self, axiom: Axiom) -> bool:
        if isinstance(axiom, Subsumption):
            return self.extension(axiom.sub) <= self.extension(axiom.sup)
        if isinstance(axiom, ConceptAssertion):
            return self._element(axiom.individual) in self.extension(axiom.concept)
        pair = (self._element(axiom.subject), self._element(axiom.object))
        return pair in self.relations.get(axiom.relation, frozenset())

    def _element(self, individual: str):
        try:
            return self.individuals[individual]
        except KeyError:
            raise KeyError(f"individual {individual!r} is not assigned") from None


@dataclass(frozen=True)
class CrispCheck:
    satisfied: bool
    violated: tuple[Axiom, ...] = field(default_factory=tuple)


def crisp_check(interp: CrispInterpretation, ontology: Ontology,
                axioms: Iterable[Axiom] | None = None) -> CrispCheck:
    """Evaluate every axiom classically; ``axioms`` restricts the check."""
    for a in ontology.signature.individual_names:
        interp._element(a)
    todo = list(ontology.axioms if axioms is None else axioms)
    violated = tuple(ax for ax in todo if not interp.holds(ax))
    return CrispCheck(not violated, violated)


def threshold_model(model, pool=None, tau: float = 0.5) -> CrispInterpretation:
    """Crisp interpretation over ``pool``: ``x`` is in ``A`` iff
    ``m(x, A) >= tau``, likewise for relation pairs."""
    if pool is None:
        pool = model.full_pool()
    graph = ad.Graph()
    frame = model.frame(graph, pool)
    if isinstance(model, ModelHandle):
        universe = tuple(pool.ids())
        assigned = {a: a for a in pool.named_ids}
    else:
        universe = tuple(int(e) for e in pool)
        assigned = {a: e for a, e in model.individuals.items() if e in universe}
    sig = model.signature
    concepts = {}
    for cid in sig.concept_names:
        row = frame.concept_row(cid, "scan").value
        concepts[cid] = frozenset(u for u, v in zip(universe, row) if v >= tau)
    relations = {}
    for rid in sig.relation_names:
        mat = frame.relation_matrix(rid, "scan").value
        idx = np.argwhere(mat >= tau)
        relations[rid] = frozenset((universe[i], universe[j]) for i, j in idx)
    return CrispInterpretation(universe, concepts, relations, assigned)


def encode_lookup(interp: CrispInterpretation, signature: Signature,
                  tnorm="product") -> LookupModel:
    """Lookup-table model with degree 1 on the extensions and 0 elsewhere."""
    position = {u: i for i, u in enumerate(interp.universe)}
    model = LookupModel(signature, len(interp.universe),
                        {a: position[interp._element(a)] for a in signature.individual_names},
                        tnorm=tnorm)
    for cid in signature.concept_names:
        for u in interp.concepts.get(cid, ()):
            model.set_concept(cid, position[u], 1.0)
    for rid in signature.relation_names:
        for a, b in interp.relations.get(rid, ()):
            model.set_relation(rid, position[a], position[b], 1.0)
    return model
