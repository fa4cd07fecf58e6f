"""Loss functions, the single-model training loop, and k-model ensembles.

The objective is a weighted sum of three parts:

* TBox: mean membership of pool elements in ``C and not D`` for every axiom
  ``C SubClassOf D`` (this should be 0 everywhere),
* concept assertions: mean of ``1 - m(a, C)``,
* role assertions: mean of ``1 - m((a, b), R)``, or a BPR ranking loss
  against corrupted objects in ``ranking`` mode.

Weights are ``alpha``, ``beta`` and ``1 - alpha - beta``. Parts with no
axioms are dropped and the remaining weights renormalized.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .fuzzy import DEFAULT_TNORM, TNorm
from .interpreter import (
    DEFAULT_EVAL_POOL,
    DEFAULT_GAUSS_STD,
    Evaluator,
    Frame,
    LookupModel,
    ModelHandle,
    sample_pool,
)
from .nn import AdamState, adam_step
from .syntax import ConceptAssertion, Ontology, RoleAssertion, UnsatTarget, normalize_tbox

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


MODES = ("entailment", "ranking")
AGGREGATES = ("min", "mean")

# keys read by the entailment/CLI layers, accepted in config files
EVAL_KEYS = {"eval_pool_size", "aggregate", "entail_threshold", "disprove_threshold", "k", "jobs"}


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for generating one model. Defaults follow the Family
    settings: dim 50, lr 1e-2, Product t-norm, 2 Gaussian + 2 uniform
    anonymous individuals per step."""

    dim: int = 50
    lr: float = 1e-2
    steps: int = 2000
    tnorm: TNorm = DEFAULT_TNORM
    alpha: float = 1.0 / 3.0
    beta: float = 1.0 / 3.0
    n_gauss: int = 2
    n_uniform: int = 2
    gauss_std: float = DEFAULT_GAUSS_STD
    seed: int = 0
    mode: str = "entailment"
    negatives: int = 8
    batch_tbox: int = 256
    batch_concept: int = 64
    batch_role: int = 64
    hidden_dims: tuple[int, ...] | None = None
    embed_init: float | None = None
    hidden_gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "tnorm", TNorm.parse(self.tnorm))
        if self.hidden_dims is not None:
            object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        validate_weights(self.alpha, self.beta)
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        for name in ("n_gauss", "n_uniform", "negatives"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("batch_tbox", "batch_concept", "batch_role"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.gauss_std < 0:
            raise ConfigError("gauss_std must be >= 0")
        if self.embed_init is not None and not self.embed_init > 0:
            raise ConfigError("embed_init must be positive")
        if not self.hidden_gain > 0:
            raise ConfigError("hidden_gain must be positive")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object], strict: bool = True) -> TrainConfig:
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in known:
                if strict and key not in EVAL_KEYS:
                    raise ConfigError(f"unknown config key {key!r}")
                continue
            kwargs[key] = _coerce(key, value)
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tnorm"] = self.tnorm.value
        d["hidden_dims"] = list(self.hidden_dims) if self.hidden_dims is not None else None
        return d

    def with_(self, **changes) -> TrainConfig:
        return replace(self, **changes)


def _coerce(key: str, value):
    ints = {"dim", "steps", "n_gauss", "n_uniform", "seed", "negatives",
            "batch_tbox", "batch_concept", "batch_role"}
    floats = {"lr", "alpha", "beta", "gauss_std", "hidden_gain"}
    try:
        if key in ints:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if key in floats:
            return float(value)
        if key == "embed_init":
            return None if value is None or value == "" else float(value)
        if key == "hidden_dims":
            if value is None or value == "":
                return None
            if isinstance(value, str):
                value = [v for v in value.replace("[", "").replace("]", "").split(",") if v.strip()]
            return tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


def validate_weights(alpha: float, beta: float) -> None:
    if not (0.0 <= alpha <= 1.0 and 0.0 <= beta <= 1.0):
        raise ConfigError(f"loss weights must lie in [0, 1], got alpha={alpha}, beta={beta}")
    if not alpha + beta < 1.0:
        raise ConfigError(f"alpha + beta must be < 1, got {alpha + beta}")


def parse_config_text(text: str) -> dict[str, object]:
    """Parse ``key = value`` lines (``#`` comments). Values are numbers,
    ``true``/``false``, ``[a, b]`` lists, or bare/quoted strings."""
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key.isidentifier():
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        out[key] = _parse_scalar(value)
    return out


def _parse_scalar(text: str):
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        return [_parse_scalar(v.strip()) for v in inner.split(",")] if inner else []
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def load_config(path) -> dict[str, object]:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


# ---------------------------------------------------------------------------
# losses on frames (graph level)
# ---------------------------------------------------------------------------


def tbox_loss_node(ev: Evaluator, targets: Sequence[UnsatTarget]) -> ad.Node | None:
    if not targets:
        return None
    if ev.frame.size("scan") == 0:
        raise ValueError("TBox loss needs a nonempty pool")
    rows = [ev(t.concept, "scan") for t in targets]
    return ad.mean(ad.stack(rows, axis=0))


def abox_concept_loss_node(ev: Evaluator, assertions: Sequence[ConceptAssertion]) -> ad.Node | None:
    if not assertions:
        return None
    frame = ev.frame
    concepts = list(dict.fromkeys(a.concept for a in assertions))
    row_of = {c: i for i, c in enumerate(concepts)}
    table = ad.stack([ev(c, "scan") for c in concepts], axis=0)
    picked = ad.getitem(
        table,
        (np.array([row_of[a.concept] for a in assertions]),
         np.array([frame.index_of(a.individual) for a in assertions])),
    )
    return ad.one_minus(ad.mean(picked))


def abox_role_loss_node(frame: Frame, assertions: Sequence[RoleAssertion]) -> ad.Node | None:
    if not assertions:
        return None
    deg = frame.pair_degrees([a.relation for a in assertions],
                             [a.subject for a in assertions],
                             [a.object for a in assertions])
    return ad.one_minus(ad.mean(deg))


def corrupt_objects(positives: Sequence[RoleAssertion], individuals: Sequence[str],
                    rng: np.random.Generator, per_positive: int) -> list[tuple[int, str]]:
    """Uniform negatives: for each positive, ``per_positive`` objects drawn
    from the other named individuals. Returns ``(positive index, object)``."""
    n = len(individuals)
    if n < 2:
        raise ValueError("negative sampling needs at least two individuals")
    index = {a: i for i, a in enumerate(individuals)}
    out = []
    for i, pos in enumerate(positives):
        draws = rng.integers(0, n - 1, size=per_positive)
        skip = index[pos.object]
        for d in draws:
            j = int(d) + (1 if d >= skip else 0)
            out.append((i, individuals[j]))
    return out


def bpr_loss_node(frame, positives: Sequence[RoleAssertion], rng: np.random.Generator,
                  per_positive: int) -> ad.Node | None:
    """Mean of ``-ln sigmoid(score(pos) - score(neg))`` over sampled pairs,
    with scores the pre-sigmoid relation outputs."""
    if not positives or per_positive == 0:
        return None
    negs = corrupt_objects(positives, frame.signature.individual_names, rng, per_positive)
    pos_idx = [i for i, _ in negs]
    rels = [positives[i].relation for i in pos_idx]
    subs = [positives[i].subject for i in pos_idx]
    pos = frame.pair_logits(rels, subs, [positives[i].object for i in pos_idx])
    neg = frame.pair_logits(rels, subs, [o for _, o in negs])
    return ad.mean(ad.neg_log_sigmoid(ad.sub(pos, neg)))


def combine(parts: Sequence[ad.Node | float | None], alpha: float, beta: float):
    """Weighted sum with weights ``(alpha, beta, 1 - alpha - beta)``; parts
    that are ``None`` are dropped and the remaining weights renormalized."""
    validate_weights(alpha, beta)
    weights = (alpha, beta, 1.0 - alpha - beta)
    present = [(w, p) for w, p in zip(weights, parts) if p is not None]
    total_w = sum(w for w, _ in present)
    if not present or total_w == 0.0:
        return 0.0
    out = None
    for w, p in present:
        term = p * (w / total_w)
        out = term if out is None else out + term
    return out


def combine_losses(l_tbox, l_concept, l_role, alpha: float = 1 / 3, beta: float = 1 / 3) -> float:
    """Scalar version of :func:`combine` (``None`` marks an absent part)."""
    out = combine([l_tbox, l_concept, l_role], alpha, beta)
    return float(out)


# ---------------------------------------------------------------------------
# public scalar losses
# ---------------------------------------------------------------------------


def _frame(model, pool, graph):
    if pool is None:
        pool = model.full_pool()
    return model.frame(graph, pool)


def tbox_loss(model, targets: Sequence[UnsatTarget], pool=None) -> float:
    """``(1/|E|)(1/|T|) sum_axioms sum_e m(e, C and not D)`` over pool ``E``."""
    g = ad.Graph()
    ev = Evaluator(_frame(model, pool, g), model.tnorm)
    node = tbox_loss_node(ev, targets)
    return 0.0 if node is None else float(node.value)


def abox_concept_loss(model, assertions: Sequence[ConceptAssertion], pool=None) -> float:
    g = ad.Graph()
    ev = Evaluator(_frame(model, pool, g), model.tnorm)
    node = abox_concept_loss_node(ev, assertions)
    return 0.0 if node is None else float(node.value)


def abox_role_loss(model, assertions: Sequence[RoleAssertion]) -> float:
    g = ad.Graph()
    node = abox_role_loss_node(_frame(model, None, g), assertions)
    return 0.0 if node is None else float(node.value)


def bpr_abox_loss(model: ModelHandle, positives: Sequence[RoleAssertion],
                  rng: np.random.Generator, negatives_per_positive: int = 8) -> float:
    g = ad.Graph()
    node = bpr_loss_node(_frame(model, None, g), positives, rng, negatives_per_positive)
    return 0.0 if node is None else float(node.value)


def total_loss(model, ontology: Ontology, pool=None, alpha: float = 1 / 3,
               beta: float = 1 / 3) -> float:
    """Weighted loss of ``model`` against ``ontology`` on ``pool``
    (default: all named individuals / the whole lookup universe)."""
    validate_weights(alpha, beta)
    g = ad.Graph()
    ev = Evaluator(_frame(model, pool, g), model.tnorm)
    parts = [
        tbox_loss_node(ev, normalize_tbox(ontology)),
        abox_concept_loss_node(ev, ontology.abox_concept),
        abox_role_loss_node(ev.frame, ontology.abox_role),
    ]
    out = combine(parts, alpha, beta)
    return float(out.value) if isinstance(out, ad.Node) else float(out)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _batch(items: Sequence, size: int, rng: np.random.Generator) -> list:
    if len(items) <= size:
        return list(items)
    idx = np.sort(rng.choice(len(items), size=size, replace=False))
    return [items[i] for i in idx]


def objective_node(model: ModelHandle, frame: Frame, ontology: Ontology,
                   targets: Sequence[UnsatTarget], config: TrainConfig,
                   rng: np.random.Generator):
    """Training objective on one sampled pool (minibatched where needed)."""
    ev = Evaluator(frame, model.tnorm)
    t = tbox_loss_node(ev, _batch(targets, config.batch_tbox, rng))
    c = abox_concept_loss_node(ev, _batch(ontology.abox_concept, config.batch_concept, rng))
    roles = _batch(ontology.abox_role, config.batch_role, rng)
    if config.mode == "ranking":
        r = bpr_loss_node(frame, roles, rng, config.negatives)
    else:
        r = abox_role_loss_node(frame, roles)
    out = combine([t, c, r], config.alpha, config.beta)
    if not isinstance(out, ad.Node):
        out = frame.graph.constant(out)
    return out


def init_model(ontology: Ontology, config: TrainConfig, seed: int) -> tuple[ModelHandle, np.random.Generator]:
    rng = np.random.default_rng(seed)
    model = ModelHandle.initialize(
        ontology.signature, config.dim, config.tnorm, rng, config.hidden_dims, seed,
        config.to_dict(), embed_init=config.embed_init, hidden_gain=config.hidden_gain,
    )
    return model, rng


def evaluate_objective(model: ModelHandle, ontology: Ontology, config: TrainConfig,
                       seed: int) -> float:
    """Objective on a fresh training-style pool drawn from a seed stream
    separate from the training stream."""
    rng = np.random.default_rng([seed, 1])
    pool = sample_pool(model, rng, config.n_gauss, config.n_uniform, config.gauss_std)
    g = ad.Graph()
    node = objective_node(model, model.frame(g, pool), ontology, normalize_tbox(ontology),
                          config, rng)
    return float(node.value)


def train_model(ontology: Ontology, config: TrainConfig | None = None,
                seed: int | None = None) -> ModelHandle:
    """Generate one fuzzy model of ``ontology`` by Adam on the objective.

    Each step resamples the anonymous individuals, evaluates the objective,
    backpropagates, and takes one Adam step. Deterministic for a given
    ``(config, seed)``.
    """
    config = config or TrainConfig()
    seed = config.seed if seed is None else int(seed)
    model, rng = init_model(ontology, config, seed)
    targets = normalize_tbox(ontology)
    adam = AdamState(lr=config.lr)
    trace = []
    for step in range(config.steps):
        pool = sample_pool(model, rng, config.n_gauss, config.n_uniform, config.gauss_std)
        graph = ad.Graph()
        leaves = model.leaves(graph)
        loss = objective_node(model, model.frame(graph, pool, leaves), ontology, targets,
                              config, rng)
        value = float(loss.value)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss at step {step} (seed {seed})")
        trace.append(value)
        grads = ad.backward(graph, loss, leaves)
        try:
            adam_step(adam, model.params, grads)
        except FloatingPointError as exc:
            raise TrainingError(f"step {step} (seed {seed}): {exc}") from exc
    model.loss_trace = trace
    model.final_loss = evaluate_objective(model, ontology, config, seed)
    return model


@dataclass
class ModelEnsemble:
    models: list[ModelHandle]
    base_seed: int = 0
    final_losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.models:
            raise ValueError("an ensemble needs at least one model")
        if not self.final_losses:
            self.final_losses = [m.final_loss for m in self.models]

    @property
    def k(self) -> int:
        return len(self.models)

    @property
    def signature(self):
        return self.models[0].signature

    def __len__(self) -> int:
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def subset(self, k: int) -> ModelEnsemble:
        """The first ``k`` members (nested ensembles share a prefix)."""
        return ModelEnsemble(self.models[:k], self.base_seed, self.final_losses[:k])


def _train_one(args):
    ontology, config, seed = args
    return train_model(ontology, config, seed)


def train_ensemble(ontology: Ontology, config: TrainConfig | None = None, k: int = 1,
                   jobs: int = 1, base_seed: int | None = None) -> ModelEnsemble:
    """Train ``k`` independent models with seeds ``base_seed + i``."""
    config = config or TrainConfig()
    if k < 1:
        raise ConfigError("k must be >= 1")
    base = config.seed if base_seed is None else int(base_seed)
    seeds = [base + i for i in range(k)]
    work = [(ontology, config, s) for s in seeds]
    models: list[ModelHandle] = []
    if jobs <= 1 or k == 1:
        for i, item in enumerate(work):
            try:
                models.append(_train_one(item))
            except Exception as exc:
                raise TrainingError(f"ensemble member {i} (seed {seeds[i]}) failed: {exc}") from exc
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_train_one, item) for item in work]
            for i, fut in enumerate(futures):
                try:
                    models.append(fut.result())
                except Exception as exc:
                    raise TrainingError(
                        f"ensemble member {i} (seed {seeds[i]}) failed: {exc}") from exc
    return ModelEnsemble(models, base)


def lookup_losses(model: LookupModel, ontology: Ontology) -> tuple[float, float, float]:
    """The three loss parts of a lookup-table model over its whole universe."""
    return (
        tbox_loss(model, normalize_tbox(ontology)),
        abox_concept_loss(model, ontology.abox_concept),
        abox_role_loss(model, ontology.abox_role),
    )
