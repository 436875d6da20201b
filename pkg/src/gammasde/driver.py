"""Gamma subordinator: Levy density, tail mass, exact increments, jump series.

The driver ``L`` has Levy density ``v(x) = alpha / x * exp(-beta x)`` and
``L_t - L_s ~ Gamma(alpha (t - s), beta)`` (shape, rate).  Two samplers are
provided:

* :func:`sample_increment` draws exact marginal increments (Marsaglia-Tsang
  rejection with the ``U**(1/a)`` boost for shape ``a < 1``);
* :func:`sample_jump_series` keeps every jump larger than ``eps``; the count is
  Poisson with mean ``T * levy_tail(eps)`` and the sizes are drawn by
  inverting the normalised tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .special import EULER_GAMMA, exp1, exp1_scaled

# bracket width above eps, in units of 1/beta; leaves tail mass < 1e-20
TAIL_BRACKET = 50.0
TAIL_RTOL = 1e-10
_NEWTON_MAX_ITER = 200


@dataclass(frozen=True)
class GammaParams:
    """Parameters ``(alpha, beta)`` of the gamma driver."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ValueError(f"{name} must be a positive finite number, got {val!r}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta}


def _positive(x, what: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0):
        raise ValueError(f"{what} must be > 0")
    return arr


def levy_density(p: GammaParams, x):
    """``alpha * x**-1 * exp(-beta x)`` for ``x > 0``."""
    arr = _positive(x)
    out = p.alpha / arr * np.exp(-p.beta * arr)
    return float(out) if out.ndim == 0 else out


def levy_tail(p: GammaParams, x):
    """Levy measure of ``(x, inf)``, i.e. ``alpha * E1(beta x)``."""
    arr = _positive(x)
    out = p.alpha * np.asarray(exp1(p.beta * arr))
    return float(out) if out.ndim == 0 else out


def small_jump_mean(p: GammaParams, eps: float) -> float:
    """Mean mass per unit time of jumps of size ``<= eps``."""
    return p.alpha / p.beta * -np.expm1(-p.beta * eps)


# --------------------------------------------------------------------------
# exact increments

def _mt_gamma_ge1(shape: float, size: int, rng: np.random.Generator) -> np.ndarray:
    # Marsaglia & Tsang (2000), shape >= 1
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(size)
    todo = np.arange(size)
    while todo.size:
        m = todo.size
        z = rng.standard_normal(m)
        u = rng.random(m)
        v = (1.0 + c * z) ** 3
        ok = v > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            accept = ok & (
                (u < 1.0 - 0.0331 * z**4)
                | (np.log(u) < 0.5 * z * z + d * (1.0 - v + np.log(v)))
            )
        out[todo[accept]] = d * v[accept]
        todo = todo[~accept]
    return out


def standard_gamma(shape: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Gamma(shape, 1) variates for any ``shape > 0``."""
    if not shape > 0:
        raise ValueError(f"shape must be > 0, got {shape}")
    if shape >= 1.0:
        return _mt_gamma_ge1(shape, size, rng)
    g = _mt_gamma_ge1(shape + 1.0, size, rng)
    u = 1.0 - rng.random(size)  # (0, 1]
    return g * np.exp(np.log(u) / shape)


def sample_increment(p: GammaParams, dt: float, rng: np.random.Generator, size=None):
    """Draw ``L_{t+dt} - L_t ~ Gamma(alpha dt, beta)``.

    Returns a float when ``size`` is None, otherwise an array of ``size`` draws
    (``size`` may be a shape tuple).
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    shape = p.alpha * dt
    if size is None:
        return float(standard_gamma(shape, 1, rng)[0] / p.beta)
    n = int(np.prod(size))
    return (standard_gamma(shape, n, rng) / p.beta).reshape(size)


# --------------------------------------------------------------------------
# jump series

def invert_tail(p: GammaParams, eps: float, u: np.ndarray) -> np.ndarray:
    """Solve ``levy_tail(x) = u * levy_tail(eps)`` for ``x`` in ``[eps, eps + 50/beta]``.

    Safeguarded Newton on ``log E1(exp(s))`` with ``s = log(beta x)``: a Newton
    step that leaves the current bracket is replaced by bisection.
    """
    u = np.asarray(u, dtype=float)
    y_lo = p.beta * eps
    y_hi = y_lo + TAIL_BRACKET
    log_target = np.log(u) + np.log(exp1(y_lo))
    lo = np.full(u.shape, np.log(y_lo))
    hi = np.full(u.shape, np.log(y_hi))
    # target below the bracket's tail mass: pin to the upper end
    beyond = log_target <= np.log(exp1(y_hi))
    # asymptotic starting points: E1(y) ~ -gamma - log y (small y), exp(-y)/y (large y)
    target = np.exp(log_target)
    big = target > 0.3
    with np.errstate(divide="ignore", invalid="ignore"):
        s_small = -EULER_GAMMA - target
        w = -log_target
        s_large = np.log(np.maximum(w - np.log(np.maximum(w, 1.0)), 1e-300))
    s = np.where(big, s_small, s_large)
    s = np.where((s > lo) & (s < hi), s, 0.5 * (lo + hi))
    active = ~beyond
    s[beyond] = hi[beyond]
    for _ in range(_NEWTON_MAX_ITER):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        si = s[idx]
        y = np.exp(si)
        g = np.log(exp1(y)) - log_target[idx]
        dg = -1.0 / exp1_scaled(y)
        right = g > 0  # root lies above si
        lo[idx[right]] = si[right]
        hi[idx[~right]] = si[~right]
        cand = si - g / dg
        bad = ~((cand >= lo[idx]) & (cand <= hi[idx]))
        cand[bad] = 0.5 * (lo[idx[bad]] + hi[idx[bad]])
        step = np.abs(cand - si)
        s[idx] = cand
        done = (step < TAIL_RTOL * 1e-2) | (hi[idx] - lo[idx] < TAIL_RTOL * 1e-2)
        active[idx[done]] = False
    x = np.exp(s) / p.beta
    return np.clip(x, np.nextafter(eps, np.inf), y_hi / p.beta)


@dataclass
class DriverJumps:
    """Jumps of the truncated driver on ``(0, T]``.

    ``times`` ascend strictly; every size exceeds ``eps``.  When
    ``compensated`` the mean of the discarded jumps enters as ``drift`` per
    unit time.
    """

    T: float
    times: np.ndarray
    sizes: np.ndarray
    eps: float
    compensated: bool = False
    drift: float = 0.0

    def value(self, t):
        """Path value ``L_t``."""
        t = np.asarray(t, dtype=float)
        csum = np.concatenate([[0.0], np.cumsum(self.sizes)])
        k = np.searchsorted(self.times, t, side="right")
        out = self.drift * t + csum[k]
        return float(out) if out.ndim == 0 else out

    @property
    def terminal(self) -> float:
        return self.value(self.T)

    def __len__(self) -> int:
        return self.times.size


@dataclass
class DriverBatch:
    """``n`` independent truncated driver paths stored flat.

    Jumps of path ``i`` occupy ``slice(offsets[i], offsets[i+1])`` in
    ``times`` / ``sizes`` and are sorted by time within the path.
    """

    T: float
    eps: float
    counts: np.ndarray
    times: np.ndarray
    sizes: np.ndarray
    offsets: np.ndarray = field(init=False)

    def __post_init__(self):
        self.offsets = np.concatenate([[0], np.cumsum(self.counts)]).astype(np.int64)

    @property
    def n(self) -> int:
        return self.counts.size

    @property
    def path_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), self.counts)

    def path(self, i: int) -> DriverJumps:
        sl = slice(self.offsets[i], self.offsets[i + 1])
        return DriverJumps(self.T, self.times[sl].copy(), self.sizes[sl].copy(), self.eps)

    def restrict(self, eps: float) -> "DriverBatch":
        """Drop jumps of size ``<= eps``; exact coupling across truncation levels."""
        if eps < self.eps:
            raise ValueError("can only coarsen the truncation level")
        keep = self.sizes > eps
        counts = np.bincount(self.path_index[keep], minlength=self.n)
        return DriverBatch(self.T, eps, counts, self.times[keep], self.sizes[keep])


def _check_series_args(T: float, eps: float):
    if not T > 0:
        raise ValueError(f"T must be > 0, got {T}")
    if not eps > 0:
        raise ValueError("eps must be > 0: the gamma process has infinitely many small jumps")


def sample_jump_batch(p: GammaParams, T: float, eps: float, n: int,
                      rng: np.random.Generator) -> DriverBatch:
    """Draw ``n`` independent truncated driver paths (no compensation)."""
    _check_series_args(T, eps)
    lam = T * levy_tail(p, eps)
    counts = rng.poisson(lam, size=n)
    total = int(counts.sum())
    u = 1.0 - rng.random(total)
    sizes = invert_tail(p, eps, u)
    times = T * (1.0 - rng.random(total))  # (0, T]
    pid = np.repeat(np.arange(n), counts)
    order = np.lexsort((times, pid))
    return DriverBatch(T, eps, counts, times[order], sizes[order])


def sample_jump_series(p: GammaParams, T: float, eps: float, compensate: bool,
                       rng: np.random.Generator) -> DriverJumps:
    """One truncated driver path on ``(0, T]`` keeping jumps larger than ``eps``."""
    b = sample_jump_batch(p, T, eps, 1, rng)
    d = b.path(0)
    if compensate:
        d.compensated = True
        d.drift = small_jump_mean(p, eps)
    return d
