from __future__ import annotations

import math

import numpy as np
import pytest

from falcon_alc.datasets import builtin_family
from falcon_alc.entailment import CrispInterpretation, crisp_check
from falcon_alc.metrics import (
    MetricError, RankingQuery, auc, auc_rank_sum, aupr, disjoint_pairs, f1_at, fmax,
    inject_inconsistency, mae_entailed, random_mrr, rank_metrics, rank_of,
)
from falcon_alc.syntax import Name, RoleAssertion


def brute_auc(y, s):
    num = den = 0.0
    for i in range(len(y)):
        for j in range(len(y)):
            if y[i] and not y[j]:
                den += 1
                num += 1.0 if s[i] > s[j] else 0.5 if s[i] == s[j] else 0.0
    return num / den


def brute_ap(y, s):
    # mean over positives of the precision at that positive's score
    vals = []
    for i in range(len(y)):
        if y[i]:
            above = [k for k in range(len(y)) if s[k] >= s[i]]
            vals.append(sum(y[k] for k in above) / len(above))
    return sum(vals) / len(vals)


def brute_fmax(y, s):
    best = 0.0
    for t in range(101):
        tau = t / 100
        tp = sum(1 for a, b in zip(y, s) if a and b >= tau)
        fp = sum(1 for a, b in zip(y, s) if not a and b >= tau)
        fn = sum(1 for a, b in zip(y, s) if a and b < tau)
        if tp:
            best = max(best, 2 * tp / (2 * tp + fp + fn))
    return best


def random_instance(rng):
    n = int(rng.integers(2, 30))
    y = rng.integers(0, 2, size=n).astype(bool)
    y[0], y[1] = True, False
    # coarse scores so ties occur
    s = np.round(rng.random(n), int(rng.integers(1, 3)))
    return y, s


def test_classification_metrics_against_brute_force(rng):
    for _ in range(100):
        y, s = random_instance(rng)
        assert auc(y, s) == pytest.approx(brute_auc(y, s), abs=1e-12)
        assert auc_rank_sum(y, s) == pytest.approx(auc(y, s), abs=1e-12)
        assert aupr(y, s) == pytest.approx(brute_ap(y, s), abs=1e-12)
        assert fmax(y, s) == pytest.approx(brute_fmax(y, s), abs=1e-12)


def test_fmax_properties(rng):
    for _ in range(50):
        y, s = random_instance(rng)
        f = fmax(y, s)
        for tau in rng.random(5):
            assert f >= f1_at(y, s, tau) - 1e-12 or tau * 100 % 1 != 0
        assert fmax(y, s, step=0.005) >= f - 1e-12


def test_metric_examples_and_errors():
    assert mae_entailed([1.0, 0.8, 0.9]) == pytest.approx(0.1)
    assert auc([1, 0], [0.9, 0.1]) == 1.0
    assert auc([1, 0], [0.5, 0.5]) == 0.5
    assert aupr([1, 0, 1], [0.9, 0.8, 0.1]) == pytest.approx((1 + 2 / 3) / 2)
    with pytest.raises(MetricError):
        auc([1, 1], [0.1, 0.2])
    with pytest.raises(MetricError):
        mae_entailed([])
    with pytest.raises(MetricError):
        auc([1, 0], [0.1])


def brute_rank(scores, q, filtered):
    others = [c for c in q.candidates if c != q.positive.object
              and not (filtered and c in q.known_true)]
    ordered = sorted(others + [q.positive.object], key=lambda c: -scores[c])
    # pessimistic: the positive goes after every candidate with an equal score
    ties = sum(1 for c in others if scores[c] == scores[q.positive.object])
    return ordered.index(q.positive.object) + 1 + ties - sum(
        1 for c in ordered[:ordered.index(q.positive.object)] if scores[c] == scores[q.positive.object])


def test_ranking_against_brute_force(rng):
    for _ in range(100):
        n = int(rng.integers(2, 15))
        cands = tuple(f"e{i}" for i in range(n))
        target = cands[int(rng.integers(n))]
        others = [c for c in cands if c != target]
        known = frozenset(c for c in others if rng.random() < 0.3)
        q = RankingQuery(RoleAssertion("r", "s", target), cands, known)
        scores = {c: float(np.round(rng.random(), 1)) for c in cands}
        raw, filt = rank_of(scores, q, False), rank_of(scores, q, True)
        assert raw == brute_rank(scores, q, False)
        assert filt == brute_rank(scores, q, True)
        m_raw = rank_metrics(lambda _: scores, [q], "raw", ks=(1, 3, 10))
        m_f = rank_metrics(lambda _: scores, [q], "filtered", ks=(1, 3, 10))
        assert m_raw["MRR"] == pytest.approx(1 / raw)
        for k in (1, 3, 10):
            assert m_raw[f"H@{k}"] == float(raw <= k)
            assert m_f[f"H@{k}"] >= m_raw[f"H@{k}"]


def test_ranking_validation():
    with pytest.raises(MetricError):
        RankingQuery(RoleAssertion("r", "s", "x"), ("a", "b"))
    q = RankingQuery(RoleAssertion("r", "s", "a"), ("a", "b"))
    with pytest.raises(MetricError):
        rank_metrics(lambda _: {"a": 1, "b": 0}, [q], mode="weird")
    with pytest.raises(MetricError):
        rank_metrics(lambda _: {}, [], mode="raw")


def test_random_mrr_matches_enumeration():
    # expected reciprocal rank of a uniformly placed positive among n candidates
    for n in (1, 2, 5, 20):
        assert random_mrr(n) == pytest.approx(sum(1 / r for r in range(1, n + 1)) / n)
    assert random_mrr(20) == pytest.approx(0.17988698, abs=1e-8)


def test_injection(rng):
    family = builtin_family()
    assert inject_inconsistency(family, 0, rng).ontology is family
    assert ("Male", "Female") in disjoint_pairs(family)
    assert len(disjoint_pairs(family)) == 6
    for n in (1, 5, 10):
        inj = inject_inconsistency(family, n, rng)
        o = inj.ontology
        assert len(o.abox_concept) == len(family.abox_concept) + 2 * n
        assert len(o.signature.individual_names) == len(family.signature.individual_names) + n
        assert len(inj.manifest()["individuals"]) == n
    inj = inject_inconsistency(family, 1, rng)
    (x,) = inj.individuals
    pair = {a.concept.id for a in inj.assertions}
    assert tuple(sorted(pair)) in {tuple(sorted(p)) for p in disjoint_pairs(family)}
    with pytest.raises(MetricError):
        inject_inconsistency(family, -1, rng)


def test_injected_ontology_has_no_crisp_model_on_small_universes(rng):
    # every interpretation over two elements with x mapped somewhere violates an axiom
    from falcon_alc.syntax import parse_ontology
    o = parse_ontology("(A and B) SubClassOf Nothing\nA SubClassOf Thing")
    inj = inject_inconsistency(o, 1, rng)
    x = inj.individuals[0]
    for a_ext in ([], [0], [1], [0, 1]):
        for b_ext in ([], [0], [1], [0, 1]):
            for e in (0, 1):
                interp = CrispInterpretation.build([0, 1], {"A": a_ext, "B": b_ext}, {}, {x: e})
                assert not crisp_check(interp, inj.ontology).satisfied


def test_random_mrr_for_counts_filtered_candidates():
    cands = ("a", "b", "c", "d")
    q1 = RankingQuery(RoleAssertion("r", "s", "a"), cands, frozenset({"b", "c"}))
    q2 = RankingQuery(RoleAssertion("r", "s", "b"), cands)
    from falcon_alc.metrics import random_mrr_for
    assert random_mrr_for([q1, q2], "raw") == pytest.approx(random_mrr(4))
    assert random_mrr_for([q1, q2], "filtered") == pytest.approx((random_mrr(2) + random_mrr(4)) / 2)
    with pytest.raises(MetricError):
        random_mrr_for([], "raw")
