"""Piecewise-constant volatility estimation from one observed jump path.

For ``sigma = s_k`` on state bin ``k`` the log-density separates into

    sum_k  -beta S_k / s_k + beta S_k - alpha T_k log s_k

where ``T_k`` is the time ``X_{t-}`` spends in bin ``k`` and ``S_k`` the total
size of jumps taken from bin ``k``.  Each term is maximised at
``s_k = beta S_k / (alpha T_k)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .driver import GammaParams
from .likelihood import log_density
from .sde import JumpPath
from .volatility import VolatilityFn

DEFAULT_SIGMA_FLOOR = 1e-6


class NoDataError(ValueError):
    pass


@dataclass(frozen=True)
class BinStats:
    edges: np.ndarray
    occupation: np.ndarray  # T_k
    mass: np.ndarray  # S_k
    count: np.ndarray  # n_k
    T: float

    @property
    def n_bins(self) -> int:
        return self.edges.size

    def scaled(self, c: float) -> "BinStats":
        """Statistics of the path ``c X`` on edges ``c * edges``."""
        return BinStats(c * self.edges, self.occupation.copy(), c * self.mass,
                        self.count.copy(), self.T)


def _check_edges(edges) -> np.ndarray:
    e = np.asarray(edges, dtype=float)
    if e.ndim != 1 or e.size == 0 or e[0] != 0.0 or np.any(np.diff(e) <= 0):
        raise ValueError("edges must start at 0 and be strictly ascending")
    return e


def bin_stats(path: JumpPath, edges) -> BinStats:
    """Occupation times, jump mass and jump count per state bin."""
    e = _check_edges(edges)
    levels, durations = path.occupation()
    k_level = np.searchsorted(e, levels, side="right") - 1
    k_jump = np.searchsorted(e, path.pre_states, side="right") - 1
    nb = e.size
    return BinStats(
        edges=e,
        occupation=np.bincount(k_level, durations, minlength=nb),
        mass=np.bincount(k_jump, path.x_jumps, minlength=nb),
        count=np.bincount(k_jump, minlength=nb),
        T=path.T,
    )


def bin_loglik(sigma, occupation, mass, p: GammaParams):
    """Per-bin log-likelihood ``-beta S / s + beta S - alpha T log s``."""
    s = np.asarray(sigma, dtype=float)
    return -p.beta * mass / s + p.beta * mass - p.alpha * occupation * np.log(s)


def stats_loglik(stats: BinStats, values, p: GammaParams) -> float:
    """Log-density of a piecewise-constant sigma from the sufficient statistics alone."""
    values = np.asarray(values, dtype=float)
    used = stats.occupation > 0
    return float(np.sum(bin_loglik(values[used], stats.occupation[used], stats.mass[used], p)))


@dataclass(frozen=True)
class FitResult:
    edges: np.ndarray
    values: np.ndarray  # NaN where unidentified
    identified: np.ndarray
    clamped: np.ndarray
    loglik: float
    loglik_init: float  # at sigma == 1
    information: np.ndarray  # observed information per bin, -d2 loglik / d sigma^2
    sigma_floor: float

    def to_volatility(self) -> VolatilityFn:
        if not self.identified.all():
            raise ValueError("cannot build a volatility function with unidentified bins")
        return VolatilityFn.piecewise(self.edges, self.values)

    def to_dict(self) -> dict:
        nan_to_none = lambda a: [None if not np.isfinite(x) else float(x) for x in a]  # noqa: E731
        return {
            "edges": self.edges.tolist(),
            "values": nan_to_none(self.values),
            "identified": self.identified.tolist(),
            "clamped": self.clamped.tolist(),
            "loglik": self.loglik,
            "loglik_init": self.loglik_init,
            "information": nan_to_none(self.information),
            "sigma_floor": self.sigma_floor,
        }

    def to_json(self, **extra) -> str:
        return json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True)


def mle_piecewise(stats: BinStats, p: GammaParams,
                  sigma_floor: float = DEFAULT_SIGMA_FLOOR) -> FitResult:
    """Closed-form maximiser ``beta S_k / (alpha T_k)``, clamped below at ``sigma_floor``.

    Bins never visited (``T_k == 0``) are reported as unidentified.
    """
    if not sigma_floor > 0:
        raise ValueError("sigma_floor must be > 0")
    if not np.any(stats.occupation > 0):
        raise NoDataError("no occupation time in any bin")
    ident = stats.occupation > 0
    values = np.full(stats.n_bins, np.nan)
    raw = p.beta * stats.mass[ident] / (p.alpha * stats.occupation[ident])
    values[ident] = np.maximum(raw, sigma_floor)
    clamped = np.zeros(stats.n_bins, dtype=bool)
    clamped[ident] = raw < sigma_floor
    info = np.full(stats.n_bins, np.nan)
    s = values[ident]
    info[ident] = (2.0 * p.beta * stats.mass[ident] / s**3
                   - p.alpha * stats.occupation[ident] / s**2)
    return FitResult(
        edges=stats.edges.copy(),
        values=values,
        identified=ident,
        clamped=clamped,
        loglik=stats_loglik(stats, np.where(ident, values, 1.0), p),
        loglik_init=0.0,
        information=info,
        sigma_floor=float(sigma_floor),
    )


def fit(path: JumpPath, edges, p: GammaParams,
        sigma_floor: float = DEFAULT_SIGMA_FLOOR) -> FitResult:
    return mle_piecewise(bin_stats(path, edges), p, sigma_floor)


def profile_likelihood(path: JumpPath, p: GammaParams, edges, sigma_grid,
                       sigma_floor: float = DEFAULT_SIGMA_FLOOR) -> dict:
    """Log-likelihood along ``sigma_grid`` in each bin, other bins held at the MLE.

    Returns ``{"grid", "profiles" (n_bins x len(grid)), "mle", "loglik_mle"}``.
    Entries of unidentified bins are NaN.
    """
    grid = np.asarray(sigma_grid, dtype=float)
    if np.any(grid < sigma_floor):
        raise ValueError("grid values must be >= sigma_floor")
    stats = bin_stats(path, edges)
    res = mle_piecewise(stats, p, sigma_floor)
    base = np.where(res.identified, res.values, 1.0)
    per_bin = np.where(stats.occupation > 0,
                       bin_loglik(base, stats.occupation, stats.mass, p), 0.0)
    total = float(per_bin.sum())
    profiles = np.full((stats.n_bins, grid.size), np.nan)
    for k in np.flatnonzero(res.identified):
        others = total - per_bin[k]
        profiles[k] = others + bin_loglik(grid, stats.occupation[k], stats.mass[k], p)
    return {"grid": grid, "profiles": profiles, "mle": res.values, "loglik_mle": res.loglik}


def loglik_from_path(path: JumpPath, edges, values, p: GammaParams) -> float:
    """Same quantity as :func:`stats_loglik`, through the general likelihood code."""
    return log_density(VolatilityFn.piecewise(edges, values, validate=False), path, p).log_Z
