"""Volatility functions with the regularity constants the existence theory needs.

A :class:`VolatilityFn` carries a certified lower bound ``sigma0`` and a linear
growth constant ``K`` (``sigma(x) <= K (1 + x)``).  Both are spot-checked on a
grid when the object is built; :func:`certify` runs the same check and reports
instead of raising.

Supported kinds:

``constant``
    ``{"constant": c}``
``piecewise``
    ``{"edges": [0, e1, ...], "values": [s0, s1, ...]}``; bin ``k`` is
    ``[edges[k], edges[k+1])`` and the last bin is unbounded.  Right-continuous.
``closed-form``
    ``{"family": name, ...}`` for the families in :data:`FAMILIES`.
``callable``
    any vectorised Python function (not serialisable).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

CERTIFY_GRID_N = 2001
CERTIFY_X_MAX = 100.0
_REL_SLACK = 1e-12


def _affine(a: float, b: float):
    return lambda x: a + b * x


def _power(a: float, p: float):
    # a * (1 + x)**p, linear growth for p <= 1
    return lambda x: a * (1.0 + x) ** p


def _exp(a: float, b: float):
    return lambda x: a * np.exp(b * x)


def _identity():
    return lambda x: np.asarray(x, dtype=float) * 1.0


FAMILIES: dict[str, tuple[Callable, tuple[str, ...]]] = {
    "affine": (_affine, ("a", "b")),
    "power": (_power, ("a", "p")),
    "exp": (_exp, ("a", "b")),
    "identity": (_identity, ()),
}


@dataclass(frozen=True)
class CertificationReport:
    min_sigma: float
    argmin_sigma: float
    max_growth_ratio: float
    argmax_growth_ratio: float
    sigma0: float
    K: float
    lower_bound_ok: bool
    growth_ok: bool
    grid_n: int
    x_max: float

    @property
    def passed(self) -> bool:
        return self.lower_bound_ok and self.growth_ok

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


@dataclass(frozen=True, eq=False)
class VolatilityFn:
    """Immutable volatility function with its construction record.

    Build instances with :meth:`constant`, :meth:`piecewise`,
    :meth:`closed_form`, :meth:`from_callable` or :meth:`from_spec`.
    """

    kind: str
    spec: dict
    sigma0: float
    K: float
    _fn: Callable = field(repr=False, compare=False)

    # ---- constructors -------------------------------------------------
    @classmethod
    def constant(cls, c: float, sigma0: float | None = None, K: float | None = None,
                 validate: bool = True) -> "VolatilityFn":
        c = float(c)
        fn = lambda x: np.full(np.shape(x), c)  # noqa: E731
        return cls._build("constant", {"constant": c}, fn,
                          c if sigma0 is None else sigma0, c if K is None else K, validate)

    @classmethod
    def piecewise(cls, edges, values, sigma0: float | None = None, K: float | None = None,
                  validate: bool = True) -> "VolatilityFn":
        edges = np.array(edges, dtype=float)
        values = np.array(values, dtype=float)
        if edges.ndim != 1 or edges.size == 0 or edges[0] != 0.0:
            raise ValueError("piecewise edges must be a non-empty list starting at 0")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("piecewise edges must be strictly ascending")
        if values.shape != edges.shape:
            raise ValueError("need one value per bin (len(values) == len(edges))")
        edges.setflags(write=False)
        values.setflags(write=False)

        def fn(x):
            k = np.searchsorted(edges, x, side="right") - 1
            return values[k]

        spec = {"edges": edges.tolist(), "values": values.tolist()}
        return cls._build("piecewise", spec, fn,
                          float(values.min()) if sigma0 is None else sigma0,
                          float(values.max()) if K is None else K, validate)

    @classmethod
    def closed_form(cls, family: str, sigma0: float, K: float, validate: bool = True,
                    **params) -> "VolatilityFn":
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}")
        make, names = FAMILIES[family]
        missing = set(names) - set(params)
        if missing:
            raise ValueError(f"family {family!r} needs parameters {sorted(missing)}")
        args = [float(params[n]) for n in names]
        spec = {"family": family, **dict(zip(names, args))}
        return cls._build("closed-form", spec, make(*args), sigma0, K, validate)

    @classmethod
    def affine(cls, a: float, b: float, validate: bool = True) -> "VolatilityFn":
        """``a + b x`` with ``a > 0, b >= 0``; sigma0 = a, K = max(a, b)."""
        return cls.closed_form("affine", sigma0=a, K=max(a, b), validate=validate, a=a, b=b)

    @classmethod
    def from_callable(cls, fn: Callable, sigma0: float, K: float, name: str = "callable",
                      validate: bool = True) -> "VolatilityFn":
        return cls._build("callable", {"name": name}, fn, sigma0, K, validate)

    @classmethod
    def from_spec(cls, spec: dict | str, validate: bool = True) -> "VolatilityFn":
        """Build from a JSON-style dict (or JSON text)."""
        if isinstance(spec, str):
            spec = json.loads(spec)
        spec = dict(spec)
        sigma0 = spec.pop("sigma0", None)
        K = spec.pop("K", None)
        if "constant" in spec:
            return cls.constant(spec["constant"], sigma0, K, validate)
        if "edges" in spec:
            return cls.piecewise(spec["edges"], spec["values"], sigma0, K, validate)
        if "family" in spec:
            family = spec.pop("family")
            if family == "affine" and sigma0 is None and K is None:
                return cls.affine(spec["a"], spec["b"], validate)
            if sigma0 is None or K is None:
                raise ValueError(f"family {family!r} needs explicit sigma0 and K")
            return cls.closed_form(family, sigma0, K, validate, **spec)
        raise ValueError(f"unrecognised volatility spec: {spec}")

    @classmethod
    def _build(cls, kind, spec, fn, sigma0, K, validate) -> "VolatilityFn":
        sigma0, K = float(sigma0), float(K)
        if not (sigma0 > 0 and K > 0):
            raise ValueError("sigma0 and K must be positive")
        obj = cls(kind, spec, sigma0, K, fn)
        if validate:
            rep = certify(obj)
            if not rep.passed:
                raise ValueError(
                    f"volatility violates its claimed constants: min sigma {rep.min_sigma:g} "
                    f"(sigma0={sigma0:g}), max sigma/(1+x) {rep.max_growth_ratio:g} (K={K:g})")
        return obj

    # ---- evaluation ---------------------------------------------------
    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(np.isnan(arr)) or np.any(arr < 0):
            raise ValueError("volatility is defined on x >= 0")
        out = np.asarray(self._fn(arr), dtype=float)
        return float(out) if out.ndim == 0 else out

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    @property
    def is_reference(self) -> bool:
        return self.kind == "constant" and self.spec["constant"] == 1.0

    def to_spec(self) -> dict:
        if self.kind == "callable":
            raise TypeError("callable volatility functions are not serialisable")
        return {**self.spec, "sigma0": self.sigma0, "K": self.K}

    def to_json(self) -> str:
        return json.dumps(self.to_spec())


def evaluate(v: VolatilityFn, x):
    """``sigma(x)`` for ``x >= 0``."""
    return v(x)


def certify(v: VolatilityFn, grid_n: int = CERTIFY_GRID_N,
            x_max: float = CERTIFY_X_MAX) -> CertificationReport:
    """Check ``sigma >= sigma0`` and ``sigma <= K (1 + x)`` on a grid over ``[0, x_max]``.

    Piecewise edges (and the points just below them) are added to the grid.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    x = np.linspace(0.0, x_max, grid_n)
    if v.kind == "piecewise":
        e = np.asarray(v.spec["edges"])
        e = e[e <= x_max]
        x = np.unique(np.concatenate([x, e, np.nextafter(e[1:], -np.inf)]))
    with np.errstate(over="ignore", invalid="ignore"):
        s = np.asarray(v._fn(x), dtype=float) * np.ones_like(x)
        ratio = s / (1.0 + x)
    bad_s = ~np.isfinite(s)
    s_min = np.where(bad_s, -np.inf, s)
    ratio = np.where(bad_s, np.inf, ratio)
    i_min = int(np.argmin(s_min))
    i_max = int(np.argmax(ratio))
    return CertificationReport(
        min_sigma=float(s_min[i_min]),
        argmin_sigma=float(x[i_min]),
        max_growth_ratio=float(ratio[i_max]),
        argmax_growth_ratio=float(x[i_max]),
        sigma0=v.sigma0,
        K=v.K,
        lower_bound_ok=bool(s_min[i_min] >= v.sigma0 * (1 - _REL_SLACK)),
        growth_ok=bool(ratio[i_max] <= v.K * (1 + _REL_SLACK)),
        grid_n=int(grid_n),
        x_max=float(x_max),
    )
