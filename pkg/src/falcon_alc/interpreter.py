"""Fuzzy interpretations: membership degrees of individuals in concepts.

Two interpretations are provided. :class:`ModelHandle` is the trainable one:
an embedding table for every symbol plus two MLPs, one scoring
``(concept, individual)`` pairs and one scoring ``(subject + relation,
object)`` pairs. :class:`LookupModel` stores degrees in explicit tables over
a finite universe and is used to encode crisp models and as a test fixture.

Both expose a *frame* over a finite universe (the individual pool), and
:class:`Evaluator` computes memberships of concept descriptions on that
frame, vectorized over all pool elements at once.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .fuzzy import TNorm, t_norm_node
from .nn import (
    MlpSpec,
    ParamStore,
    dump_checkpoint,
    init_mlp,
    load_checkpoint,
    mlp_forward,
    mlp_pairwise,
)
from .syntax import (
    And,
    Bottom,
    Concept,
    Exists,
    Forall,
    Name,
    Not,
    Or,
    Signature,
    Top,
    free_symbols,
)

log = logging.getLogger(__name__)

CONCEPT_EMB = "emb.concept"
RELATION_EMB = "emb.relation"
INDIVIDUAL_EMB = "emb.individual"
CONCEPT_MLP = "concept_mlp"
RELATION_MLP = "relation_mlp"

DEFAULT_GAUSS_STD = 0.1
DEFAULT_EVAL_POOL = 64


class EmptyPoolError(ValueError):
    pass


@dataclass
class IndividualPool:
    """Named individuals (with their embeddings at sampling time) followed by
    anonymous vectors, which are their own embeddings."""

    named: dict[str, np.ndarray]
    anonymous: np.ndarray

    def __post_init__(self):
        self.anonymous = np.asarray(self.anonymous, dtype=np.float64)
        if self.anonymous.ndim != 2:
            raise ValueError("anonymous individuals must be a (k, n) array")

    @property
    def size(self) -> int:
        return len(self.named) + len(self.anonymous)

    @property
    def named_ids(self) -> list[str]:
        return list(self.named)

    def ids(self) -> list[str]:
        return self.named_ids + [f"anon_{i}" for i in range(len(self.anonymous))]

    def vectors(self) -> np.ndarray:
        parts = [np.stack(list(self.named.values()))] if self.named else []
        parts.append(self.anonymous)
        return np.concatenate(parts, axis=0) if parts else self.anonymous

    def extended(self, vectors: np.ndarray) -> IndividualPool:
        return IndividualPool(dict(self.named), np.concatenate([self.anonymous, vectors], axis=0))


def signature_digest(sig: Signature) -> str:
    payload = json.dumps([sig.concept_names, sig.relation_names, sig.individual_names])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------


class Frame:
    """A finite universe ("scan" side) plus optional separate query subjects.

    Quantifiers always range over the scan side. When no separate subjects
    are given, both sides are the same universe and share caches.
    """

    graph: ad.Graph
    signature: Signature
    same: bool

    def size(self, side: str) -> int:
        raise NotImplementedError

    def concept_row(self, cid: str, side: str) -> ad.Node:
        raise NotImplementedError

    def relation_matrix(self, rid: str, side: str) -> ad.Node:
        raise NotImplementedError

    def index_of(self, individual: str) -> int:
        raise NotImplementedError

    def pair_degrees(self, rids: Sequence[str], subjects: Sequence[str],
                     objects: Sequence[str]) -> ad.Node:
        """Relation membership of named pairs, shape ``(len(rids),)``."""
        raise NotImplementedError

    def side(self, side: str) -> str:
        return "scan" if self.same else side


class NeuralFrame(Frame):
    def __init__(self, model: ModelHandle, graph: ad.Graph, nodes: dict[str, ad.Node],
                 pool: IndividualPool, subjects: np.ndarray | None = None):
        self.model = model
        self.graph = graph
        self.nodes = nodes
        self.pool = pool
        self.signature = model.signature
        ind_index = model.individual_index
        named_idx = []
        for a in pool.named:
            if a not in ind_index:
                raise KeyError(f"unknown individual {a!r}")
            named_idx.append(ind_index[a])
        self._pos = {a: i for i, a in enumerate(pool.named)}
        parts = []
        if named_idx:
            parts.append(ad.take(nodes[INDIVIDUAL_EMB], named_idx, axis=0))
        if len(pool.anonymous):
            parts.append(graph.constant(pool.anonymous))
        if not parts:
            self.universe = graph.constant(np.zeros((0, model.dim)))
        else:
            self.universe = parts[0] if len(parts) == 1 else ad.concat(parts, axis=0)
        self.same = subjects is None
        self.subjects = self.universe if self.same else graph.lift(np.atleast_2d(subjects))
        self._concepts: dict[str, ad.Node] = {}
        self._rows: dict[tuple[str, str], ad.Node] = {}
        self._relations: dict[tuple[str, str], ad.Node] = {}

    def _elements(self, side: str) -> ad.Node:
        return self.universe if side == "scan" else self.subjects

    def size(self, side: str) -> int:
        return self._elements(self.side(side)).shape[0]

    def concept_row(self, cid: str, side: str) -> ad.Node:
        side = self.side(side)
        key = (cid, side)
        row = self._rows.get(key)
        if row is None:
            mat = self._concepts.get(side)
            if mat is None:
                mat = self._concepts[side] = ad.sigmoid(
                    mlp_pairwise(self.nodes, self.model.concept_spec, CONCEPT_MLP,
                                 self.nodes[CONCEPT_EMB], self._elements(side))
                )
            row = self._rows[key] = ad.getitem(mat, self.model.concept_index[cid])
        return row

    def relation_matrix(self, rid: str, side: str) -> ad.Node:
        side = self.side(side)
        key = (rid, side)
        mat = self._relations.get(key)
        if mat is None:
            r = ad.getitem(self.nodes[RELATION_EMB], self.model.relation_index[rid])
            mat = self._relations[key] = ad.sigmoid(
                mlp_pairwise(self.nodes, self.model.relation_spec, RELATION_MLP,
                             ad.add(self._elements(side), r), self.universe)
            )
        return mat

    def index_of(self, individual: str) -> int:
        return self._pos[individual]

    def pair_logits(self, rids, subjects, objects) -> ad.Node:
        m = self.model
        ind = self.nodes[INDIVIDUAL_EMB]
        s = ad.take(ind, [m.individual_index[a] for a in subjects])
        o = ad.take(ind, [m.individual_index[b] for b in objects])
        r = ad.take(self.nodes[RELATION_EMB], [m.relation_index[x] for x in rids])
        x = ad.concat([ad.add(s, r), o], axis=1)
        return mlp_forward(self.nodes, m.relation_spec, RELATION_MLP, x)

    def pair_degrees(self, rids, subjects, objects) -> ad.Node:
        return ad.sigmoid(self.pair_logits(rids, subjects, objects))


class LookupFrame(Frame):
    def __init__(self, model: LookupModel, graph: ad.Graph, pool: Sequence[int] | None = None,
                 subjects: Sequence[int] | None = None):
        self.model = model
        self.graph = graph
        self.signature = model.signature
        self.pool = list(range(model.universe_size)) if pool is None else list(pool)
        self.same = subjects is None
        self.subjects = self.pool if self.same else list(subjects)
        self._cache: dict[tuple, ad.Node] = {}

    def _elements(self, side: str) -> list[int]:
        return self.pool if side == "scan" else self.subjects

    def size(self, side: str) -> int:
        return len(self._elements(self.side(side)))

    def concept_row(self, cid: str, side: str) -> ad.Node:
        side = self.side(side)
        key = ("c", cid, side)
        if key not in self._cache:
            row = self.model.concepts[self.model.concept_index[cid]][self._elements(side)]
            self._cache[key] = self.graph.constant(row)
        return self._cache[key]

    def relation_matrix(self, rid: str, side: str) -> ad.Node:
        side = self.side(side)
        key = ("r", rid, side)
        if key not in self._cache:
            table = self.model.relations[self.model.relation_index[rid]]
            mat = table[np.ix_(self._elements(side), self.pool)]
            self._cache[key] = self.graph.constant(mat)
        return self._cache[key]

    def index_of(self, individual: str) -> int:
        return self.pool.index(self.model.individuals[individual])

    def pair_degrees(self, rids, subjects, objects) -> ad.Node:
        m = self.model
        vals = [
            m.relations[m.relation_index[r], m.individuals[a], m.individuals[b]]
            for r, a, b in zip(rids, subjects, objects)
        ]
        return self.graph.constant(np.array(vals, dtype=np.float64))


# ---------------------------------------------------------------------------
# interpretations
# ---------------------------------------------------------------------------


@dataclass
class ModelHandle:
    """One generated fuzzy model: embeddings for every symbol plus the two MLPs."""

    signature: Signature
    params: ParamStore
    tnorm: TNorm
    dim: int
    concept_spec: MlpSpec
    relation_spec: MlpSpec
    seed: int | None = None
    config: dict = field(default_factory=dict)
    loss_trace: list[float] = field(default_factory=list)
    final_loss: float | None = None

    def __post_init__(self):
        sig = self.signature
        self.concept_index = {c: i for i, c in enumerate(sig.concept_names)}
        self.relation_index = {r: i for i, r in enumerate(sig.relation_names)}
        self.individual_index = {a: i for i, a in enumerate(sig.individual_names)}

    @classmethod
    def initialize(cls, signature: Signature, dim: int, tnorm: TNorm | str,
                   rng: np.random.Generator, hidden_dims=None, seed: int | None = None,
                   config: dict | None = None, embed_init: float | None = None,
                   hidden_gain: float = 1.0) -> ModelHandle:
        """Embeddings ~ uniform(-e, e) with ``e = embed_init`` (default
        ``1/sqrt(dim)``); MLP weights ~ uniform(-1/sqrt(dim), 1/sqrt(dim)),
        the first layer's range multiplied by ``hidden_gain``; biases zero."""
        if dim < 1:
            raise ValueError("dim must be positive")
        s = 1.0 / np.sqrt(dim) if embed_init is None else float(embed_init)
        params = ParamStore()
        params.add(CONCEPT_EMB, rng.uniform(-s, s, size=(len(signature.concept_names), dim)))
        params.add(RELATION_EMB, rng.uniform(-s, s, size=(len(signature.relation_names), dim)))
        params.add(INDIVIDUAL_EMB,
                   rng.uniform(-s, s, size=(len(signature.individual_names), dim)))
        cspec = MlpSpec.for_dim(dim, hidden_dims)
        rspec = MlpSpec.for_dim(dim, hidden_dims)
        for prefix, spec in ((CONCEPT_MLP, cspec), (RELATION_MLP, rspec)):
            init_mlp(params, spec, prefix, rng)
            if hidden_gain != 1.0:
                params[f"{prefix}.W0"] = params[f"{prefix}.W0"] * hidden_gain
        return cls(signature, params, TNorm.parse(tnorm), dim, cspec, rspec, seed,
                   dict(config or {}))

    # -- evaluation ---------------------------------------------------------

    def leaves(self, graph: ad.Graph) -> dict[str, ad.Node]:
        return self.params.leaves(graph)

    def constants(self, graph: ad.Graph) -> dict[str, ad.Node]:
        return {k: graph.constant(v) for k, v in self.params.items()}

    def frame(self, graph: ad.Graph, pool: IndividualPool, nodes: dict | None = None,
              subjects: np.ndarray | None = None) -> NeuralFrame:
        if nodes is None:
            nodes = self.constants(graph)
        return NeuralFrame(self, graph, nodes, pool, subjects)

    def embedding(self, individual: str) -> np.ndarray:
        return self.params[INDIVIDUAL_EMB][self.individual_index[individual]].copy()

    def named_pool(self) -> IndividualPool:
        return IndividualPool(
            {a: self.embedding(a) for a in self.signature.individual_names},
            np.zeros((0, self.dim)),
        )

    def full_pool(self) -> IndividualPool:
        return self.named_pool()

    # -- persistence --------------------------------------------------------

    def to_json(self) -> str:
        sig = self.signature
        meta = {
            "seed": self.seed,
            "tnorm": self.tnorm.value,
            "dim": self.dim,
            "concept_hidden": list(self.concept_spec.hidden_dims),
            "relation_hidden": list(self.relation_spec.hidden_dims),
            "signature": {
                "concepts": list(sig.concept_names),
                "relations": list(sig.relation_names),
                "individuals": list(sig.individual_names),
            },
            "signature_digest": signature_digest(sig),
            "config": self.config,
            "final_loss": self.final_loss,
        }
        return dump_checkpoint(self.params, meta)

    @classmethod
    def from_json(cls, text: str) -> ModelHandle:
        params, meta = load_checkpoint(text)
        s = meta["signature"]
        sig = Signature(tuple(s["concepts"]), tuple(s["relations"]), tuple(s["individuals"]))
        if signature_digest(sig) != meta["signature_digest"]:
            raise ValueError("checkpoint signature digest mismatch")
        dim = meta["dim"]
        return cls(
            sig,
            params,
            TNorm.parse(meta["tnorm"]),
            dim,
            MlpSpec(2 * dim, tuple(meta["concept_hidden"])),
            MlpSpec(2 * dim, tuple(meta["relation_hidden"])),
            meta.get("seed"),
            meta.get("config", {}),
            final_loss=meta.get("final_loss"),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> ModelHandle:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass(eq=False)
class LookupModel:
    """Degrees stored in tables over a finite universe ``0..N-1``.

    ``concepts`` has shape ``(|C|, N)`` and ``relations`` ``(|R|, N, N)``;
    missing tables start at zero. ``individuals`` maps each named individual
    to its element.
    """

    signature: Signature
    universe_size: int
    individuals: dict[str, int]
    concepts: np.ndarray | None = None
    relations: np.ndarray | None = None
    tnorm: TNorm = TNorm.PRODUCT

    def __post_init__(self):
        sig, n = self.signature, self.universe_size
        if self.concepts is None:
            self.concepts = np.zeros((len(sig.concept_names), n))
        if self.relations is None:
            self.relations = np.zeros((len(sig.relation_names), n, n))
        self.concepts = np.asarray(self.concepts, dtype=np.float64)
        self.relations = np.asarray(self.relations, dtype=np.float64)
        self.tnorm = TNorm.parse(self.tnorm)
        if self.concepts.shape != (len(sig.concept_names), n):
            raise ValueError(f"concept table must have shape {(len(sig.concept_names), n)}")
        if self.relations.shape != (len(sig.relation_names), n, n):
            raise ValueError(f"relation table must have shape {(len(sig.relation_names), n, n)}")
        for a in sig.individual_names:
            if not 0 <= self.individuals.get(a, -1) < n:
                raise ValueError(f"individual {a!r} is not assigned an element")
        self.concept_index = {c: i for i, c in enumerate(sig.concept_names)}
        self.relation_index = {r: i for i, r in enumerate(sig.relation_names)}

    def set_concept(self, cid: str, element: int, degree: float) -> None:
        self.concepts[self.concept_index[cid], element] = degree

    def set_relation(self, rid: str, a: int, b: int, degree: float) -> None:
        self.relations[self.relation_index[rid], a, b] = degree

    def frame(self, graph: ad.Graph, pool: Sequence[int] | None = None, nodes=None,
              subjects: Sequence[int] | None = None) -> LookupFrame:
        return LookupFrame(self, graph, pool, subjects)

    def full_pool(self) -> list[int]:
        return list(range(self.universe_size))


# ---------------------------------------------------------------------------
# membership evaluation
# ---------------------------------------------------------------------------


class Evaluator:
    """Memberships of concept descriptions on a frame, memoized per call tree.

    Disjunction and the universal quantifier are evaluated through their
    duals, ``C or D = not(not C and not D)`` and
    ``only r.C = not some r.(not C)``, and ``not not C`` is cancelled
    symbolically. This keeps the De Morgan and quantifier dualities exact
    in floating point; mathematically the values are unchanged.
    """

    def __init__(self, frame: Frame, tnorm: TNorm):
        self.frame = frame
        self.tnorm = tnorm
        self.graph = frame.graph
        self._memo: dict[tuple[Concept, str], ad.Node] = {}

    def __call__(self, c: Concept, side: str = "subj") -> ad.Node:
        side = self.frame.side(side)
        key = (c, side)
        out = self._memo.get(key)
        if out is None:
            out = self._memo[key] = self._eval(c, side)
        return out

    def negated(self, c: Concept, side: str = "subj") -> ad.Node:
        """Membership in ``not c``."""
        return self(c.child, side) if isinstance(c, Not) else self(Not(c), side)

    def _eval(self, c: Concept, side: str) -> ad.Node:
        if isinstance(c, Name):
            return self.frame.concept_row(c.id, side)
        if isinstance(c, Top):
            return self.graph.constant(np.ones(self.frame.size(side)))
        if isinstance(c, Bottom):
            return self.graph.constant(np.zeros(self.frame.size(side)))
        if isinstance(c, Not):
            if isinstance(c.child, Not):
                return self(c.child.child, side)
            return ad.one_minus(self(c.child, side))
        if isinstance(c, And):
            return t_norm_node(self.tnorm, self(c.left, side), self(c.right, side))
        if isinstance(c, Or):
            both = t_norm_node(self.tnorm, self.negated(c.left, side),
                               self.negated(c.right, side))
            return ad.one_minus(both)
        if isinstance(c, Exists):
            return self._exists(c.relation, c.child, side, negate_child=False)
        if isinstance(c, Forall):
            return ad.one_minus(self._exists(c.relation, c.child, side, negate_child=True))
        raise TypeError(f"not a concept description: {c!r}")

    def _exists(self, relation: str, child: Concept, side: str, negate_child: bool) -> ad.Node:
        if self.frame.size("scan") == 0:
            raise EmptyPoolError("quantifier over an empty pool")
        rel = self.frame.relation_matrix(relation, side)
        filler = self.negated(child, "scan") if negate_child else self(child, "scan")
        pairs = t_norm_node(self.tnorm, ad.expand_dims(filler, 0), rel)
        return ad.amax(pairs, axis=1)


def _check_names(model, c: Concept) -> None:
    concepts, relations = free_symbols(c)
    sig = model.signature
    for n in concepts:
        if n not in sig.concept_names:
            raise KeyError(f"unknown concept name {n!r}")
    for r in relations:
        if r not in sig.relation_names:
            raise KeyError(f"unknown relation name {r!r}")


def memberships(model, c: Concept, pool=None) -> np.ndarray:
    """Membership of every pool element in ``c`` (no gradient)."""
    _check_names(model, c)
    graph = ad.Graph()
    frame = model.frame(graph, pool if pool is not None else model.full_pool())
    return Evaluator(frame, model.tnorm)(c).value.copy()


def membership(model, x, c: Concept, pool=None) -> float:
    """Degree of ``x`` in ``c``; quantifiers range over ``pool``.

    For a :class:`ModelHandle`, ``x`` is an embedding vector or a named
    individual; for a :class:`LookupModel` it is an element index or a named
    individual.
    """
    _check_names(model, c)
    graph = ad.Graph()
    pool = pool if pool is not None else model.full_pool()
    if isinstance(x, str):
        if isinstance(model, ModelHandle):
            x = model.embedding(x)
        else:
            x = model.individuals[x]
    subjects = np.atleast_2d(np.asarray(x, dtype=np.float64)) if isinstance(model, ModelHandle) \
        else [int(x)]
    frame = model.frame(graph, pool, subjects=subjects)
    return float(Evaluator(frame, model.tnorm)(c, "subj").value[0])


def relation_logit(model: ModelHandle, x, y, r: str, graph: ad.Graph | None = None,
                   nodes: dict | None = None) -> ad.Node:
    """Pre-sigmoid relation score of the pair ``(x, y)`` as a graph node."""
    if r not in model.relation_index:
        raise KeyError(f"unknown relation {r!r}")
    graph = graph or ad.Graph()
    nodes = nodes if nodes is not None else model.constants(graph)
    xv, yv = graph.lift(x), graph.lift(y)
    if xv.shape != (model.dim,) or yv.shape != (model.dim,):
        raise ValueError(f"individual vectors must have shape ({model.dim},)")
    rv = ad.getitem(nodes[RELATION_EMB], model.relation_index[r])
    inp = ad.concat([ad.add(xv, rv), yv], axis=0)
    return mlp_forward(nodes, model.relation_spec, RELATION_MLP, inp)


def relation_membership(model, x, y, r: str) -> float:
    """Degree of the pair ``(x, y)`` in relation ``r``."""
    if isinstance(model, LookupModel):
        xi = model.individuals[x] if isinstance(x, str) else int(x)
        yi = model.individuals[y] if isinstance(y, str) else int(y)
        return float(model.relations[model.relation_index[r], xi, yi])
    if isinstance(x, str):
        x = model.embedding(x)
    if isinstance(y, str):
        y = model.embedding(y)
    return float(ad.sigmoid(relation_logit(model, x, y, r)).value)


def sample_pool(model: ModelHandle, rng: np.random.Generator, n_gauss: int = 2,
                n_uniform: int = 2, gauss_std: float = DEFAULT_GAUSS_STD) -> IndividualPool:
    """All named individuals plus ``n_gauss`` noisy copies of randomly chosen
    named embeddings and ``n_uniform`` points uniform in ``(-1, 1)^n``."""
    named = {a: model.embedding(a) for a in model.signature.individual_names}
    n = model.dim
    if n_gauss > 0 and not named:
        log.warning("no named individuals to perturb; sampling %d uniform points instead",
                    n_gauss)
        n_uniform += n_gauss
        n_gauss = 0
    parts = []
    if n_gauss > 0:
        table = model.params[INDIVIDUAL_EMB]
        base = rng.integers(0, len(named), size=n_gauss)
        noise = rng.normal(0.0, gauss_std, size=(n_gauss, n))
        parts.append(table[base] + noise)
    if n_uniform > 0:
        parts.append(rng.uniform(-1.0, 1.0, size=(n_uniform, n)))
    anon = np.concatenate(parts, axis=0) if parts else np.zeros((0, n))
    return IndividualPool(named, anon)


def eval_pool(model: ModelHandle, seed: int, size: int = DEFAULT_EVAL_POOL) -> IndividualPool:
    """Named individuals plus ``size`` uniform points drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    return sample_pool(model, rng, 0, size)
