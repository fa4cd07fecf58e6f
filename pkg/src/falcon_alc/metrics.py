"""Scores for entailment and ranking experiments, and inconsistency injection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .interpreter import relation_membership
from .syntax import And, Bottom, ConceptAssertion, Name, Ontology, RoleAssertion


class MetricError(ValueError):
    pass


def mae_entailed(scores: Sequence[float]) -> float:
    """Mean of ``1 - score`` over entailed axioms."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise MetricError("no scores")
    return float(np.mean(1.0 - s))


def _split(labels, scores):
    y = np.asarray(labels, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise MetricError("labels and scores must be 1-d and equally long")
    if y.all() or not y.any():
        raise MetricError("need at least one positive and one negative")
    return y, s


def auc(labels, scores) -> float:
    """P(random positive outscores random negative), ties counted 1/2."""
    y, s = _split(labels, scores)
    pos, neg = s[y], s[~y]
    gt = (pos[:, None] > neg[None, :]).sum()
    eq = (pos[:, None] == neg[None, :]).sum()
    return float((gt + 0.5 * eq) / (pos.size * neg.size))


def auc_rank_sum(labels, scores) -> float:
    """Mann-Whitney form of :func:`auc` using average ranks for ties."""
    y, s = _split(labels, scores)
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(labels, scores) -> float:
    """Area under the precision-recall curve by step integration.

    Thresholds are the distinct scores, highest first; each step adds
    ``(recall gain) * precision`` at that threshold.
    """
    y, s = _split(labels, scores)
    n_pos = int(y.sum())
    area, prev_recall = 0.0, 0.0
    for t in np.unique(s)[::-1]:
        pred = s >= t
        tp = int((pred & y).sum())
        recall = tp / n_pos
        area += (recall - prev_recall) * (tp / int(pred.sum()))
        prev_recall = recall
    return float(area)


def f1_at(labels, scores, tau: float) -> float:
    y, s = _split(labels, scores)
    pred = s >= tau
    tp = int((pred & y).sum())
    if tp == 0:
        return 0.0
    precision, recall = tp / int(pred.sum()), tp / int(y.sum())
    return 2 * precision * recall / (precision + recall)


def fmax(labels, scores, step: float = 0.01) -> float:
    """Max F1 over thresholds ``0, step, 2*step, ..., 1``."""
    n = int(round(1.0 / step))
    return max(f1_at(labels, scores, i / n) for i in range(n + 1))


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RankingQuery:
    """Rank ``positive.object`` among ``candidates`` as objects of
    ``(positive.relation, positive.subject, ?)``. ``known_true`` lists other
    correct objects, removed in filtered mode."""

    positive: RoleAssertion
    candidates: tuple[str, ...]
    known_true: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.positive.object not in self.candidates:
            raise MetricError("the positive object must be a candidate")
        if not self.known_true <= set(self.candidates):
            raise MetricError("known-true objects must be candidates")


RANK_KS = (3, 10, 100)


def rank_of(scores: Mapping[str, float], query: RankingQuery, filtered: bool) -> int:
    """1-based rank of the positive; ties go against it."""
    target = query.positive.object
    mine = scores[target]
    rank = 1
    for cand in query.candidates:
        if cand == target or (filtered and cand in query.known_true):
            continue
        if scores[cand] >= mine:
            rank += 1
    return rank


def rank_metrics(score_fn: Callable[[RankingQuery], Mapping[str, float]],
                 queries: Sequence[RankingQuery], mode: str = "filtered",
                 ks: Iterable[int] = RANK_KS) -> dict[str, float]:
    """MRR and Hits@k. ``score_fn(query)`` returns a score per candidate."""
    if mode not in ("raw", "filtered"):
        raise MetricError(f"mode must be raw or filtered, got {mode!r}")
    if not queries:
        raise MetricError("no queries")
    ks = tuple(ks)
    ranks = np.array([rank_of(score_fn(q), q, mode == "filtered") for q in queries], dtype=float)
    out = {"MRR": float(np.mean(1.0 / ranks))}
    for k in ks:
        out[f"H@{k}"] = float(np.mean(ranks <= k))
    return out


def random_mrr(n_candidates: int) -> float:
    """Expected MRR of a uniformly random ranking of ``n`` candidates."""
    if n_candidates < 1:
        raise MetricError("need at least one candidate")
    return float(sum(1.0 / r for r in range(1, n_candidates + 1)) / n_candidates)


def random_mrr_for(queries: Sequence[RankingQuery], mode: str = "raw") -> float:
    """Expected MRR of a random ranker over ``queries``; in filtered mode each
    query only counts the candidates that survive filtering."""
    if mode not in ("raw", "filtered"):
        raise MetricError("mode must be 'raw' or 'filtered'")
    if not queries:
        raise MetricError("no ranking queries")
    vals = []
    for q in queries:
        n = len(q.candidates)
        if mode == "filtered":
            n -= len(q.known_true - {q.positive.object})
        vals.append(random_mrr(n))
    return float(np.mean(vals))


def model_scorer(model) -> Callable[[RankingQuery], dict[str, float]]:
    """Score candidates by relation membership under one model."""
    def score(q: RankingQuery) -> dict[str, float]:
        p = q.positive
        return {c: relation_membership(model, p.subject, c, p.relation) for c in q.candidates}

    return score


# ---------------------------------------------------------------------------
# inconsistency injection
# ---------------------------------------------------------------------------


def disjoint_pairs(ontology: Ontology) -> list[tuple[str, str]]:
    """Concept-name pairs declared disjoint by ``(A and B) SubClassOf Nothing``."""
    out = []
    for ax in ontology.tbox:
        s = ax.sub
        if (isinstance(ax.sup, Bottom) and isinstance(s, And)
                and isinstance(s.left, Name) and isinstance(s.right, Name)):
            out.append((s.left.id, s.right.id))
    return out


@dataclass(frozen=True)
class Injection:
    ontology: Ontology
    individuals: tuple[str, ...]
    assertions: tuple[ConceptAssertion, ...]

    def manifest(self) -> dict:
        return {"individuals": list(self.individuals),
                "assertions": [str(a) for a in self.assertions]}


def inject_inconsistency(ontology: Ontology, n: int, rng: np.random.Generator,
                         prefix: str = "inc_") -> Injection:
    """Add ``n`` fresh individuals, each asserted into both concepts of a
    randomly chosen disjoint pair."""
    if n < 0:
        raise MetricError("n must be non-negative")
    if n == 0:
        return Injection(ontology, (), ())
    pairs = disjoint_pairs(ontology)
    if not pairs:
        raise MetricError("ontology has no disjointness axiom to contradict")
    taken = set(ontology.signature.individual_names)
    names, added = [], []
    i = 0
    while len(names) < n:
        name = f"{prefix}{i}"
        i += 1
        if name in taken:
            continue
        a, b = pairs[int(rng.integers(len(pairs)))]
        names.append(name)
        added += [ConceptAssertion(Name(a), name), ConceptAssertion(Name(b), name)]
    return Injection(ontology.extended(added, names), tuple(names), tuple(added))


__all__ = [
    "MetricError", "mae_entailed", "auc", "auc_rank_sum", "aupr", "f1_at", "fmax",
    "RankingQuery", "rank_of", "rank_metrics", "random_mrr", "random_mrr_for", "model_scorer",
    "disjoint_pairs", "Injection", "inject_inconsistency",
]
