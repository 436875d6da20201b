"""Density of the law of ``X`` under ``sigma`` relative to the ``sigma == 1`` law.

For an observed jump path::

    log Z_T = sum_j log Y_j  -  alpha * int_0^T log sigma(X_{t-}) dt

where ``log Y_j = -beta * dX_j * (1/sigma(X_{t_j-}) - 1)``.  The time integral
uses ``int_0^inf (Y - 1) v(x) dx = alpha log sigma`` (Frullani) and is exact
because ``X_{t-}`` is piecewise constant.  Everything is kept in log space.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .driver import GammaParams, levy_density
from .sde import GridPath, JumpPath, PathBatch
from .volatility import VolatilityFn

SHORTCUT_RTOL = 1e-10


class InvalidModelError(ValueError):
    """Raised when sigma is not strictly positive where the path needs it."""


@dataclass(frozen=True)
class LikelihoodResult:
    log_jump_term: float
    log_comp_term: float
    log_Z: float
    eps_used: float = 0.0

    @property
    def Z(self) -> float:
        return float(np.exp(self.log_Z))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **extra) -> str:
        return json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True)


def _sigma_checked(v: VolatilityFn, x) -> np.ndarray:
    s = np.asarray(v(x), dtype=float)
    if np.any(~(s > 0)):
        raise InvalidModelError("sigma must be > 0 at every pre-jump state")
    return s


def log_y_ratio(v: VolatilityFn, pre_state, x, p: GammaParams):
    """``log Y = -beta x (1/sigma(pre) - 1)``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("jump size must be > 0")
    s = _sigma_checked(v, pre_state)
    out = -p.beta * x * (1.0 / s - 1.0)
    return float(out) if np.ndim(out) == 0 else out


def y_ratio(v: VolatilityFn, pre_state, x, p: GammaParams):
    """Ratio of the tilted to the reference Levy density at jump size ``x``."""
    return np.exp(log_y_ratio(v, pre_state, x, p))


def sigma_levy_density(v: VolatilityFn, pre_state, x, p: GammaParams):
    """Levy density of the jumps of ``X`` given ``X_{t-} = pre_state``."""
    s = _sigma_checked(v, pre_state)
    return levy_density(p, np.asarray(x, dtype=float) / s) / s


def _window(levels, durations, starts, window):
    if window is None:
        return durations
    t0, t1 = window
    ends = starts + durations
    return np.clip(np.minimum(ends, t1) - np.maximum(starts, t0), 0.0, None)


def compensator_term(v: VolatilityFn, path: JumpPath, p: GammaParams,
                     window: tuple[float, float] | None = None) -> float:
    """``alpha * int log sigma(X_{t-}) dt`` over ``(0, T]`` (or ``window``)."""
    levels, durations = path.occupation()
    starts = np.concatenate([[0.0], path.times])
    durations = _window(levels, durations, starts, window)
    return float(p.alpha * np.sum(np.log(_sigma_checked(v, levels)) * durations))


def compensator_term_grid(v: VolatilityFn, grid: GridPath, p: GammaParams) -> float:
    """Left-endpoint Riemann sum of the compensator for a grid-observed path."""
    dt = np.diff(grid.times)
    return float(p.alpha * np.sum(np.log(_sigma_checked(v, grid.values[:-1])) * dt))


def log_density(v: VolatilityFn, path: JumpPath, p: GammaParams,
                window: tuple[float, float] | None = None) -> LikelihoodResult:
    """``log dP^sigma_T / dP^1_T`` at ``path``, split into its two terms.

    With ``window=(t0, t1)`` only jumps and occupation time in ``(t0, t1]``
    count, giving the log of the density on that segment.
    """
    eps = float(path.meta.get("eps", 0.0) or 0.0)
    if v.is_reference:
        return LikelihoodResult(0.0, 0.0, 0.0, eps)
    x = path.x_jumps
    pre = path.pre_states
    if window is not None:
        t0, t1 = window
        sel = (path.times > t0) & (path.times <= t1)
        x, pre = x[sel], pre[sel]
    s = _sigma_checked(v, pre) if x.size else np.zeros(0)
    jump = float(np.sum(-p.beta * x * (1.0 / s - 1.0)))
    if x.size:
        # cross-check against beta * (X - L) with L rebuilt under the candidate sigma
        x_sum = float(np.sum(x))
        l_sum = float(np.sum(x / s))
        shortcut = p.beta * (x_sum - l_sum)
        scale = p.beta * (x_sum + l_sum)
        if abs(shortcut - jump) > SHORTCUT_RTOL * max(scale, np.finfo(float).tiny):
            raise ArithmeticError(
                f"jump-term shortcut mismatch: {jump!r} vs beta*(X-L) = {shortcut!r}")
    comp = compensator_term(v, path, p, window)
    return LikelihoodResult(jump, comp, jump - comp, eps)


def log_density_batch(v: VolatilityFn, batch: PathBatch, p: GammaParams) -> np.ndarray:
    """``log Z_T`` for every path of a batch."""
    if v.is_reference:
        return np.zeros(batch.n)
    pid = batch.path_index
    s = _sigma_checked(v, batch.pre_states)
    jump = np.bincount(pid, -p.beta * batch.x_jumps * (1.0 / s - 1.0), minlength=batch.n)
    seg_pid, seg_level, seg_dur = batch.segments()
    comp = p.alpha * np.bincount(seg_pid, np.log(_sigma_checked(v, seg_level)) * seg_dur,
                                 minlength=batch.n)
    return jump - comp


def hellinger_rate(v: VolatilityFn, pre_state, p: GammaParams):
    """Inner Hellinger integral ``log((1 + sigma)^2 / (4 sigma))`` at ``sigma(pre_state)``.

    Independent of ``beta``; zero iff ``sigma == 1``; invariant under
    ``sigma -> 1/sigma``.
    """
    s = _sigma_checked(v, pre_state)
    out = 2.0 * np.log1p(s) - np.log(4.0 * s)
    out = np.where(s == 1.0, 0.0, np.maximum(out, 0.0))
    return float(out) if np.ndim(out) == 0 else out


def hellinger_H(v: VolatilityFn, path: JumpPath, p: GammaParams) -> float:
    """``H_T = alpha * int_0^T h_t dt`` along the path."""
    levels, durations = path.occupation()
    return float(p.alpha * np.sum(hellinger_rate(v, levels, p) * durations))
