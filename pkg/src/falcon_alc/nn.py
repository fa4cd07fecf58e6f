"""Parameters, MLPs, Adam, finite differences and checkpoint files."""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

from . import autodiff as ad

CHECKPOINT_FORMAT = "falcon-alc-checkpoint"
CHECKPOINT_VERSION = 1


class ParamStore:
    """Named float64 arrays with fixed shapes."""

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None):
        self._arrays: dict[str, np.ndarray] = {}
        for name, value in (arrays or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> None:
        if name in self._arrays:
            raise KeyError(f"duplicate parameter {name!r}")
        self._arrays[name] = np.array(value, dtype=np.float64)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self._arrays[name].shape:
            raise ValueError(
                f"shape of {name!r} is fixed at {self._arrays[name].shape}, got {value.shape}"
            )
        self._arrays[name] = value.copy()

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def items(self):
        return self._arrays.items()

    def names(self) -> list[str]:
        return list(self._arrays)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self._arrays.items()}

    def copy(self) -> ParamStore:
        return ParamStore({k: v.copy() for k, v in self._arrays.items()})

    def size(self) -> int:
        return sum(v.size for v in self._arrays.values())

    def check_finite(self) -> None:
        for name, v in self._arrays.items():
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"parameter {name!r} has non-finite values")

    def leaves(self, graph: ad.Graph) -> dict[str, ad.Node]:
        return {k: graph.leaf(v, name=k) for k, v in self._arrays.items()}

    def equal(self, other: ParamStore) -> bool:
        """Bit-for-bit equality of names, shapes and values."""
        if self.names() != other.names():
            return False
        return all(
            self[k].shape == other[k].shape and self[k].tobytes() == other[k].tobytes()
            for k in self
        )


# ---------------------------------------------------------------------------
# MLPs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MlpSpec:
    """Fully connected net: tanh hidden layers, one raw (pre-sigmoid) output."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int = 1

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"invalid MLP dimensions: {self}")

    @classmethod
    def for_dim(cls, n: int, hidden_dims=None) -> MlpSpec:
        hidden = (2 * n,) if hidden_dims is None else tuple(hidden_dims)
        return cls(2 * n, hidden)

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    def param_names(self, prefix: str) -> list[str]:
        out = []
        for i in range(len(self.layer_dims)):
            out += [f"{prefix}.W{i}", f"{prefix}.b{i}"]
        return out


def init_mlp(params: ParamStore, spec: MlpSpec, prefix: str, rng: np.random.Generator,
             scale: float | None = None) -> None:
    """Weights ~ uniform(-scale, scale), biases zero.

    ``scale`` defaults to ``1/sqrt(fan_in / 2)``, i.e. ``1/sqrt(n)`` for the
    concatenated two-embedding input.
    """
    for i, (fan_out, fan_in) in enumerate(spec.layer_dims):
        s = scale if scale is not None else 1.0 / math.sqrt(max(fan_in // 2, 1))
        params.add(f"{prefix}.W{i}", rng.uniform(-s, s, size=(fan_out, fan_in)))
        params.add(f"{prefix}.b{i}", np.zeros(fan_out))


def _layers(nodes: Mapping[str, ad.Node], spec: MlpSpec, prefix: str):
    return [
        (nodes[f"{prefix}.W{i}"], nodes[f"{prefix}.b{i}"]) for i in range(len(spec.layer_dims))
    ]


def mlp_forward(nodes: Mapping[str, ad.Node], spec: MlpSpec, prefix: str, x: ad.Node) -> ad.Node:
    """Apply the MLP over the last axis of ``x``; the output axis is dropped
    when ``output_dim == 1``."""
    if x.shape[-1] != spec.input_dim:
        raise ValueError(f"MLP input has width {x.shape[-1]}, expected {spec.input_dim}")
    h = x
    layers = _layers(nodes, spec, prefix)
    for i, (w, b) in enumerate(layers):
        h = ad.linear(h, w, b)
        if i < len(layers) - 1:
            h = ad.tanh(h)
    if spec.output_dim == 1:
        h = ad.reshape(h, h.shape[:-1])
    return h


def mlp_apply(params: ParamStore, spec: MlpSpec, input, prefix: str = "mlp",
              graph: ad.Graph | None = None, nodes: Mapping[str, ad.Node] | None = None) -> ad.Node:
    """Evaluate the MLP on one input vector and return the scalar output node.

    Without ``nodes`` a fresh graph is built with every parameter as a leaf;
    pass ``nodes`` to reuse leaves already on a graph.
    """
    if nodes is None:
        graph = graph or ad.Graph()
        nodes = {k: graph.leaf(params[k], name=k) for k in spec.param_names(prefix)}
    else:
        graph = next(iter(nodes.values())).graph
    x = graph.lift(input)
    if x.shape != (spec.input_dim,):
        raise ValueError(f"MLP input has shape {x.shape}, expected ({spec.input_dim},)")
    return mlp_forward(nodes, spec, prefix, x)


def mlp_pairwise(nodes: Mapping[str, ad.Node], spec: MlpSpec, prefix: str,
                 left: ad.Node, right: ad.Node) -> ad.Node:
    """Outputs for every (left row, right row) pair: shape ``(len(left), len(right))``.

    Equal to running the MLP on ``concat(left[i], right[j])`` for each pair;
    the first layer is split so no ``(A, B, 2n)`` input is materialized.
    """
    n = left.shape[-1]
    if right.shape[-1] != n or spec.input_dim != 2 * n:
        raise ValueError("pairwise MLP inputs must both have width input_dim / 2")
    layers = _layers(nodes, spec, prefix)
    w0, b0 = layers[0]
    hl = ad.linear(left, w0[:, :n])
    hr = ad.linear(right, w0[:, n:], b0)
    h = ad.add(ad.expand_dims(hl, 1), ad.expand_dims(hr, 0))
    for w, b in layers[1:]:
        h = ad.linear(ad.tanh(h), w, b)
    if spec.output_dim == 1:
        h = ad.reshape(h, h.shape[:-1])
    return h


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: ParamStore, grads: Mapping[str, np.ndarray]) -> ParamStore:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    for name in params:
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != params[name].shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, "
                             f"parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.check_finite()
    return params


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def finite_difference_grad(loss_fn: Callable, params, h: float = 1e-5):
    """Central differences of ``loss_fn`` w.r.t. every coordinate of ``params``.

    ``params`` may be a float, a numpy array, or a ParamStore / dict of arrays;
    the result has the same structure. ``loss_fn`` is called on perturbed
    copies and must not keep references to them.
    """
    if isinstance(params, (int, float)):
        return (loss_fn(params + h) - loss_fn(params - h)) / (2 * h)
    if isinstance(params, np.ndarray):
        x = params.astype(np.float64).copy()
        out = np.zeros_like(x)
        flat, gflat = x.reshape(-1), out.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn(x)
            flat[i] = orig - h
            fm = loss_fn(x)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        return out
    work = params.copy() if isinstance(params, ParamStore) else {k: np.array(v, dtype=np.float64)
                                                               for k, v in params.items()}
    grads = {}
    for name in list(work):
        arr = work[name]
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn(work)
            flat[i] = orig - h
            fm = loss_fn(work)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        grads[name] = g
    return grads


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def _encode(arr: np.ndarray) -> dict:
    return {
        "shape": list(arr.shape),
        "dtype": "<f8",
        "data": base64.b64encode(arr.astype("<f8").tobytes()).decode("ascii"),
    }


def _decode(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)


def dump_checkpoint(params: ParamStore, meta: dict) -> str:
    """Serialize parameters plus metadata to a JSON string (arrays as
    base64 little-endian float64, so values round-trip bit-exactly)."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        **meta,
        "params": {k: _encode(v) for k, v in params.items()},
    }
    return json.dumps(doc, indent=1, sort_keys=False)


def load_checkpoint(text: str) -> tuple[ParamStore, dict]:
    doc = json.loads(text)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a falcon-alc checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    params = ParamStore({k: _decode(v) for k, v in doc.pop("params").items()})
    return params, doc
