"""t-norms, t-conorms and the standard strong negation.

The t-conorm of every family is defined from its t-norm,
``conorm(x, y) = 1 - tnorm(1 - x, 1 - y)``, so De Morgan duality holds by
construction rather than by a separate closed form.
"""

from __future__ import annotations

import enum

import numpy as np

from . import autodiff as ad

DOMAIN_TOL = 1e-9


class TNorm(str, enum.Enum):
    GOEDEL = "goedel"
    PRODUCT = "product"
    LUKASIEWICZ = "lukasiewicz"

    @property
    def strict(self) -> bool:
        """Whether ``tnorm(x, y) = 0`` only when ``x = 0`` or ``y = 0``."""
        return self is not TNorm.LUKASIEWICZ

    @classmethod
    def parse(cls, value: "str | TNorm") -> "TNorm":
        if isinstance(value, TNorm):
            return value
        key = str(value).strip().lower()
        aliases = {"godel": "goedel", "gödel": "goedel", "min": "goedel", "luk": "lukasiewicz"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(
                f"unknown t-norm {value!r}; expected goedel, product or lukasiewicz"
            ) from None


DEFAULT_TNORM = TNorm.PRODUCT


def _degree(x):
    arr = np.asarray(x, dtype=np.float64)
    if np.any(np.isnan(arr)) or np.any(arr < -DOMAIN_TOL) or np.any(arr > 1.0 + DOMAIN_TOL):
        raise ValueError(f"degree outside [0, 1]: {x!r}")
    arr = np.clip(arr, 0.0, 1.0)
    return float(arr) if arr.ndim == 0 else arr


def _tnorm_raw(family: TNorm, x, y):
    if family is TNorm.GOEDEL:
        return np.minimum(x, y)
    if family is TNorm.PRODUCT:
        return x * y
    # x + (y - 1) keeps tnorm(x, 1) == x exact in floating point
    return np.maximum(x + (y - 1.0), 0.0)


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def t_norm(family: TNorm | str, x, y):
    """Fuzzy conjunction of two degrees (scalars or arrays)."""
    family = TNorm.parse(family)
    return _out(_tnorm_raw(family, _degree(x), _degree(y)))


def t_conorm(family: TNorm | str, x, y):
    """Fuzzy disjunction, the dual of :func:`t_norm` under ``1 - x``."""
    family = TNorm.parse(family)
    x, y = _degree(x), _degree(y)
    return _out(1.0 - _tnorm_raw(family, 1.0 - x, 1.0 - y))


def negation(x):
    return _out(1.0 - _degree(x))


# ---------------------------------------------------------------------------
# graph versions, used by the interpreter
# ---------------------------------------------------------------------------


def t_norm_node(family: TNorm, a: ad.Node, b: ad.Node) -> ad.Node:
    if family is TNorm.GOEDEL:
        return ad.minimum(a, b)
    if family is TNorm.PRODUCT:
        return ad.mul(a, b)
    return ad.maximum(ad.add(a, ad.sub(b, 1.0)), 0.0)


def negation_node(a: ad.Node) -> ad.Node:
    return ad.one_minus(a)


def t_conorm_node(family: TNorm, a: ad.Node, b: ad.Node) -> ad.Node:
    return ad.one_minus(t_norm_node(family, ad.one_minus(a), ad.one_minus(b)))
