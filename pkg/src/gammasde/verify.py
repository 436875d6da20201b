"""Analytic and Monte-Carlo checks of the change of measure between solution laws.

Monte-Carlo replicates are processed in blocks of :data:`BLOCK`; block ``b`` of
check ``key`` draws from ``substream(seed, key, b)``, so results do not depend
on the thread count.  Reductions use numpy's pairwise summation over arrays
assembled in block order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .driver import GammaParams, sample_increment, sample_jump_batch
from .likelihood import log_density, log_density_batch, log_y_ratio
from .rng import substream
from .sde import JumpPath, PathBatch, solve_batch
from .volatility import VolatilityFn

BLOCK = 10_000
BAND = 3.0
ESS_MIN_FRACTION = 0.01

REFERENCE = VolatilityFn.constant(1.0)


# --------------------------------------------------------------------------
# closed forms

def f_forward(p: GammaParams, sigma_val):
    """``alpha (sigma - 1 - log sigma)``: exponent integrand against ``v``."""
    s = np.asarray(sigma_val, dtype=float)
    if np.any(~(s > 0)):
        raise ValueError("sigma must be > 0")
    out = p.alpha * (s - 1.0 - np.log(s))
    return float(out) if out.ndim == 0 else out


def f_reverse(p: GammaParams, sigma_val):
    """``alpha (1/sigma - 1 + log sigma)``: the same with the roles of the laws swapped."""
    s = np.asarray(sigma_val, dtype=float)
    if np.any(~(s > 0)):
        raise ValueError("sigma must be > 0")
    out = p.alpha * (1.0 / s - 1.0 + np.log(s))
    return float(out) if out.ndim == 0 else out


def exponent(v: VolatilityFn, path: JumpPath, p: GammaParams,
             window: tuple[float, float] | None = None, reverse: bool = False) -> float:
    """``int f(sigma(X_{t-})) dt`` along ``path`` (``f_reverse`` if ``reverse``)."""
    levels, durations = path.occupation()
    if window is not None:
        starts = np.concatenate([[0.0], path.times])
        t0, t1 = window
        durations = np.clip(np.minimum(starts + durations, t1) - np.maximum(starts, t0), 0, None)
    f = f_reverse if reverse else f_forward
    return float(np.sum(f(p, v(levels)) * durations))


@dataclass(frozen=True)
class SegmentationPlan:
    """Split of ``[0, T]`` into ``N`` equal pieces short enough for the exponential-moment bounds."""

    T: float
    N: int
    delta: float
    forward_threshold: float  # N must exceed alpha K T / beta
    reverse_threshold: float  # N must exceed alpha T / 2

    @property
    def boundaries(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.delta * self.T

    @property
    def windows(self) -> list[tuple[float, float]]:
        b = self.boundaries
        b[-1] = self.T
        return list(zip(b[:-1].tolist(), b[1:].tolist()))

    def to_dict(self) -> dict:
        return asdict(self)


def segmentation_plan(p: GammaParams, v: VolatilityFn, T: float) -> SegmentationPlan:
    """Smallest ``N`` with ``N > alpha K T / beta`` and ``N > alpha T / 2``."""
    if not T > 0:
        raise ValueError("T must be > 0")
    fwd = p.alpha * v.K * T / p.beta
    rev = p.alpha * T / 2.0
    N = int(math.floor(max(fwd, rev))) + 1
    return SegmentationPlan(float(T), N, 1.0 / N, fwd, rev)


def segment_exponents(plan: SegmentationPlan, v: VolatilityFn, path: JumpPath,
                      p: GammaParams, reverse: bool = False) -> np.ndarray:
    return np.array([exponent(v, path, p, w, reverse) for w in plan.windows])


def segment_log_densities(plan: SegmentationPlan, v: VolatilityFn, path: JumpPath,
                          p: GammaParams) -> np.ndarray:
    """``log Z^n`` of the density restricted to each segment; they sum to ``log Z_T``."""
    return np.array([log_density(v, path, p, w).log_Z for w in plan.windows])


def doleans_product(v: VolatilityFn, path: JumpPath, p: GammaParams) -> float:
    """Solve ``dZ = Z_- int (Y - 1)(mu - v dx dt)`` jump by jump, in linear space.

    Between jumps ``Z`` decays by ``exp(-alpha log sigma * dt)``; at a jump it
    gains ``Z_- (Y - 1)``.
    """
    z = 1.0
    t_prev = 0.0
    for t, dx, pre in zip(path.times.tolist(), path.x_jumps.tolist(), path.pre_states.tolist()):
        z *= math.exp(-p.alpha * math.log(v(pre)) * (t - t_prev))
        z += z * (math.exp(log_y_ratio(v, pre, dx, p)) - 1.0)
        t_prev = t
    z *= math.exp(-p.alpha * math.log(v(path.terminal)) * (path.T - t_prev))
    return z


# --------------------------------------------------------------------------
# Monte Carlo

@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int
    seed: int

    @classmethod
    def of(cls, samples: np.ndarray, seed: int) -> "McEstimate":
        n = samples.size
        if n < 2:
            raise ValueError("need at least two replicates")
        mean = float(np.sum(samples) / n)
        return cls(mean, float(np.std(samples, ddof=1) / math.sqrt(n)), int(n), int(seed))

    def to_dict(self) -> dict:
        return asdict(self)


def ess(w: np.ndarray) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2``."""
    s2 = float(np.sum(w * w))
    return float(np.sum(w)) ** 2 / s2 if s2 > 0 else 0.0


def run_blocks(fn: Callable[[np.random.Generator, int], dict], n: int, seed: int, key: int,
               threads: int = 1) -> dict[str, np.ndarray]:
    """Run ``fn(rng, size)`` over replicate blocks and concatenate outputs in block order."""
    sizes = [min(BLOCK, n - start) for start in range(0, n, BLOCK)]

    def one(b):
        return fn(substream(seed, key, b), sizes[b])

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    else:
        parts = [one(b) for b in range(len(sizes))]
    return {k: np.concatenate([part[k] for part in parts]) for k in parts[0]}


@dataclass
class CheckResult:
    name: str
    estimate: float
    stderr: float
    band: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "estimate": self.estimate, "stderr": self.stderr,
                "band": self.band, "pass": bool(self.passed), **self.details}


@dataclass(frozen=True)
class MartingaleCheck:
    estimate: McEstimate
    ess: float
    target: float = 1.0

    @property
    def band(self) -> float:
        return BAND * self.estimate.stderr

    @property
    def ess_ok(self) -> bool:
        return bool(self.ess >= ESS_MIN_FRACTION * self.estimate.n)

    @property
    def passed(self) -> bool:
        return abs(self.estimate.mean - self.target) <= self.band and self.ess_ok


def _weights_forward(v, p, T, eps):
    def fn(rng, size):
        ref = solve_batch(REFERENCE, sample_jump_batch(p, T, eps, size, rng))
        return {"log_z": log_density_batch(v, ref, p)}
    return fn


def _weights_reverse(v, p, T, eps):
    def fn(rng, size):
        paths = solve_batch(v, sample_jump_batch(p, T, eps, size, rng))
        return {"log_z": -log_density_batch(v, paths, p)}
    return fn


def check_martingale(v: VolatilityFn, p: GammaParams, T: float, n: int, eps: float,
                     seed: int, reverse: bool = False, key: int = 0,
                     threads: int = 1) -> MartingaleCheck:
    """Estimate ``E[Z_T]`` under the reference law (``E[1/Z_T]`` under ``sigma`` if ``reverse``)."""
    if n < 100:
        raise ValueError("use at least 100 replicates")
    make = _weights_reverse if reverse else _weights_forward
    out = run_blocks(make(v, p, T, eps), n, seed, key, threads)
    w = np.exp(out["log_z"])
    return MartingaleCheck(McEstimate.of(w, seed), ess(w))


FUNCTIONALS = ("terminal", "log1p_terminal", "jump_count_above")


def _functional(name: str, batch: PathBatch, level: float) -> np.ndarray:
    if name == "terminal":
        return batch.terminal.copy()
    if name == "log1p_terminal":
        return np.log1p(batch.terminal)
    if name == "jump_count_above":
        big = batch.x_jumps > level
        return np.bincount(batch.path_index[big], minlength=batch.n).astype(float)
    raise ValueError(f"unknown functional {name!r}; choose from {FUNCTIONALS}")


@dataclass(frozen=True)
class TransferCheck:
    direct: McEstimate
    weighted: McEstimate
    paired_stderr: float
    ess: float

    @property
    def band(self) -> float:
        return BAND * math.hypot(self.direct.stderr, self.weighted.stderr)

    @property
    def passed(self) -> bool:
        return abs(self.direct.mean - self.weighted.mean) <= self.band


def check_transfer(v: VolatilityFn, p: GammaParams, T: float, functional: str, n: int,
                   eps: float, seed: int, level: float = 1.0, key: int = 0,
                   threads: int = 1) -> TransferCheck:
    """``E[g(X)]`` under ``sigma`` two ways: simulated directly, and as ``E[g(L) Z_T]``.

    Both estimators share the driver draws, so for ``sigma == 1`` they agree
    path by path.
    """
    if functional not in FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}; choose from {FUNCTIONALS}")

    def fn(rng, size):
        d = sample_jump_batch(p, T, eps, size, rng)
        direct = solve_batch(v, d)
        ref = solve_batch(REFERENCE, d)
        w = np.exp(log_density_batch(v, ref, p))
        return {"direct": _functional(functional, direct, level),
                "weighted": _functional(functional, ref, level) * w, "w": w}

    out = run_blocks(fn, n, seed, key, threads)
    diff = out["direct"] - out["weighted"]
    return TransferCheck(McEstimate.of(out["direct"], seed), McEstimate.of(out["weighted"], seed),
                         float(np.std(diff, ddof=1) / math.sqrt(n)), ess(out["w"]))


@dataclass(frozen=True)
class MomentCheck:
    small: McEstimate
    large: McEstimate
    hill_index: float  # tail index estimate of X_T^2; large means light tail

    @property
    def band(self) -> float:
        return BAND * math.hypot(self.small.stderr, self.large.stderr)

    @property
    def passed(self) -> bool:
        return (math.isfinite(self.large.mean)
                and abs(self.small.mean - self.large.mean) <= self.band)


def hill_estimator(x: np.ndarray, k: int) -> float:
    """Hill tail-index estimate from the ``k`` largest values of ``x > 0``."""
    xs = np.sort(x[x > 0])[::-1]
    k = min(k, xs.size - 1)
    if k < 1:
        return float("nan")
    gamma = float(np.mean(np.log(xs[:k])) - math.log(xs[k]))
    return 1.0 / gamma if gamma > 0 else float("inf")


def moment_sanity(v: VolatilityFn, p: GammaParams, T: float, n: int, eps: float,
                  seed: int, key: int = 0, threads: int = 1) -> MomentCheck:
    """``E[X_T^2]`` under ``sigma`` at ``n // 10`` and ``n`` replicates (independent streams)."""
    def fn(rng, size):
        paths = solve_batch(v, sample_jump_batch(p, T, eps, size, rng))
        return {"x2": paths.terminal ** 2}

    small = run_blocks(fn, max(n // 10, 2), seed, 2 * key, threads)["x2"]
    large = run_blocks(fn, n, seed, 2 * key + 1, threads)["x2"]
    k = max(int(math.sqrt(large.size)), 10)
    return MomentCheck(McEstimate.of(small, seed), McEstimate.of(large, seed),
                       hill_estimator(large, k))


def truncation_study(v: VolatilityFn, p: GammaParams, T: float, eps_levels, n: int,
                     seed: int, key: int = 0) -> dict:
    """``log Z_T`` on coupled drivers at decreasing truncation levels.

    The driver is drawn once at the finest level and coarsened by dropping
    jumps, so each level sees the exact truncated law.  Returns the levels,
    per-level mean ``log Z`` and the mean absolute increments between
    consecutive levels.
    """
    eps_levels = sorted(float(e) for e in eps_levels)[::-1]
    fine = sample_jump_batch(p, T, eps_levels[-1], n, substream(seed, key, 0))
    logs = []
    for e in eps_levels:
        d = fine.restrict(e) if e > fine.eps else fine
        logs.append(log_density_batch(v, solve_batch(REFERENCE, d), p))
    logs = np.array(logs)
    incr = np.mean(np.abs(np.diff(logs, axis=0)), axis=1)
    return {"eps": eps_levels, "mean_log_z": logs.mean(axis=1).tolist(),
            "mean_abs_increment": incr.tolist()}


def driver_marginal_check(p: GammaParams, dt: float, n: int, seed: int, key: int = 0,
                          level: float = 0.01) -> CheckResult:
    """KS test of exact increments against ``Gamma(alpha dt, beta)``."""
    x = sample_increment(p, dt, substream(seed, key, 0), size=n)
    ks = stats.kstest(x, stats.gamma(p.alpha * dt, scale=1.0 / p.beta).cdf)
    return CheckResult(f"driver_ks[alpha={p.alpha:g},beta={p.beta:g},dt={dt:g}]",
                       float(ks.statistic), 0.0, level, bool(ks.pvalue > level),
                       {"pvalue": float(ks.pvalue), "n": n})


# --------------------------------------------------------------------------
# suite

@dataclass
class SuiteConfig:
    alpha: float = 1.0
    beta: float = 1.0
    T: float = 1.0
    eps: float = 1e-4
    n: int = 20_000
    seed: int = 20240611
    threads: int = 1
    sigmas: dict = field(default_factory=lambda: {
        "const2": {"constant": 2.0},
        "affine": {"family": "affine", "a": 1.0, "b": 0.1},
    })


def _mart_result(name, chk: MartingaleCheck) -> CheckResult:
    e = chk.estimate
    return CheckResult(name, e.mean, e.stderr, chk.band, chk.passed,
                       {"ess": chk.ess, "ess_ok": chk.ess_ok, "n": e.n, "seed": e.seed})


def run_suite(cfg: SuiteConfig) -> dict:
    """Run every check; returns a JSON-ready report."""
    p = GammaParams(cfg.alpha, cfg.beta)
    sig = {k: VolatilityFn.from_spec(s) for k, s in cfg.sigmas.items()}
    checks: list[CheckResult] = []
    key = iter(range(1, 10_000))

    for params, dt in ((p, 0.7), (GammaParams(2.0, 3.0), 0.05)):
        checks.append(driver_marginal_check(params, dt, cfg.n, cfg.seed, next(key)))

    for name, v in sig.items():
        chk = check_martingale(v, p, cfg.T, cfg.n, cfg.eps, cfg.seed, key=next(key),
                               threads=cfg.threads)
        checks.append(_mart_result(f"martingale[{name}]", chk))
        chk = check_martingale(v, p, cfg.T, cfg.n, cfg.eps, cfg.seed, reverse=True,
                               key=next(key), threads=cfg.threads)
        checks.append(_mart_result(f"martingale_reverse[{name}]", chk))

    for name, v in sig.items():
        for g in ("terminal", "log1p_terminal"):
            t = check_transfer(v, p, cfg.T, g, cfg.n, cfg.eps, cfg.seed, key=next(key),
                               threads=cfg.threads)
            checks.append(CheckResult(
                f"transfer[{name},{g}]", t.direct.mean - t.weighted.mean,
                math.hypot(t.direct.stderr, t.weighted.stderr), t.band, t.passed,
                {"direct": t.direct.to_dict(), "weighted": t.weighted.to_dict(),
                 "paired_stderr": t.paired_stderr, "ess": t.ess}))

    for name, v in sig.items():
        m = moment_sanity(v, p, cfg.T, cfg.n, cfg.eps, cfg.seed, key=next(key),
                          threads=cfg.threads)
        checks.append(CheckResult(f"second_moment[{name}]", m.large.mean, m.large.stderr,
                                  m.band, m.passed,
                                  {"small_n": m.small.to_dict(), "hill_index": m.hill_index}))

    # Doleans recursion vs explicit formula, and segment additivity, on 100 paths
    d = sample_jump_batch(p, cfg.T, cfg.eps, 100, substream(cfg.seed, next(key), 0))
    for name, v in sig.items():
        paths = solve_batch(v, d)
        worst = 0.0
        worst_exp = 0.0
        worst_seg = 0.0
        plan = segmentation_plan(p, v, cfg.T)
        for i in range(paths.n):
            path = paths.path(i)
            lz = log_density(v, path, p).log_Z
            worst = max(worst, abs(doleans_product(v, path, p) / math.exp(lz) - 1.0))
            full = exponent(v, path, p)
            worst_exp = max(worst_exp, abs(full - segment_exponents(plan, v, path, p).sum()))
            worst_seg = max(worst_seg, abs(lz - segment_log_densities(plan, v, path, p).sum()))
        checks.append(CheckResult(f"doleans_consistency[{name}]", worst, 0.0, 1e-8,
                                  worst <= 1e-8, {"paths": paths.n}))
        checks.append(CheckResult(f"segment_additivity[{name}]", max(worst_exp, worst_seg), 0.0,
                                  1e-10, max(worst_exp, worst_seg) <= 1e-10,
                                  {"N": plan.N, "delta": plan.delta}))

    grid = np.linspace(0.1, 10.0, 991)
    dual = float(np.max(np.abs(f_reverse(p, grid) - f_forward(p, 1.0 / grid))))
    checks.append(CheckResult("f_duality", dual, 0.0, 1e-12, dual <= 1e-12))

    report = {
        "config": asdict(cfg),
        "checks": [c.to_dict() for c in checks],
        "passed": all(c.passed for c in checks),
    }
    return report


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n"
