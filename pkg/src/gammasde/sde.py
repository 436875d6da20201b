"""Pathwise solutions of ``dX_t = sigma(X_{t-}) dL_t``, ``X_0 = 0``.

With a truncated driver, ``L`` is piecewise constant, so stepping through its
jumps in time order solves the equation exactly:
``X_{t_j} = X_{t_j-} + sigma(X_{t_j-}) * dL_j``.  The grid scheme
:func:`solve_euler` uses exact gamma increments and freezes ``sigma`` at the
left grid point.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .driver import DriverBatch, DriverJumps, GammaParams, sample_increment
from .volatility import VolatilityFn

CSV_HEADER = ("time", "x_jump", "l_jump", "pre_state")


def fmt(x: float) -> str:
    """17 significant digits: lossless for float64."""
    return format(float(x), ".17g")


@dataclass
class JumpPath:
    """Jumps of ``X`` on ``(0, T]`` with the driver jumps that produced them."""

    T: float
    times: np.ndarray
    x_jumps: np.ndarray
    l_jumps: np.ndarray
    pre_states: np.ndarray
    terminal: float
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.times.size

    @property
    def X_T(self) -> float:
        return self.terminal

    def value(self, t):
        t = np.asarray(t, dtype=float)
        levels = np.concatenate([[0.0], self.pre_states[1:], [self.terminal]]) \
            if len(self) else np.zeros(1)
        k = np.searchsorted(self.times, t, side="right")
        out = levels[k]
        return float(out) if out.ndim == 0 else out

    def occupation(self) -> tuple[np.ndarray, np.ndarray]:
        """Levels of ``X_{t-}`` and the time spent at each.

        Level ``j < n`` is ``pre_states[j]`` held on ``(t_{j-1}, t_j]``; the last
        level is ``X_T`` held on ``(t_{n-1}, T]``.
        """
        levels = np.concatenate([self.pre_states, [self.terminal]])
        durations = np.diff(np.concatenate([[0.0], self.times, [self.T]]))
        return levels, durations

    def scaled(self, c: float) -> "JumpPath":
        """The path ``c * X`` (same driver jumps)."""
        return JumpPath(self.T, self.times.copy(), c * self.x_jumps, self.l_jumps.copy(),
                        c * self.pre_states, c * self.terminal, dict(self.meta))

    @classmethod
    def from_observed(cls, T: float, times, x_jumps, meta: dict | None = None) -> "JumpPath":
        """Path from observed ``X`` jumps only; driver jumps left as NaN."""
        times = np.asarray(times, dtype=float)
        x = np.asarray(x_jumps, dtype=float)
        if times.shape != x.shape:
            raise ValueError("times and x_jumps must have equal length")
        order = np.argsort(times, kind="stable")
        times, x = times[order], x[order]
        pre, terminal = _partial_sums(x)
        path = cls(float(T), times, x, np.full_like(x, np.nan), pre, terminal, dict(meta or {}))
        validate_path(path)
        return path


def _partial_sums(x: np.ndarray) -> tuple[np.ndarray, float]:
    # sequential accumulation, same order as the solver
    pre = np.empty_like(x)
    s = 0.0
    for j, dx in enumerate(x.tolist()):
        pre[j] = s
        s = s + dx
    return pre, float(s)


def validate_path(path: JumpPath) -> None:
    if not path.T > 0:
        raise ValueError("path horizon must be positive")
    t = path.times
    if t.size:
        if t[0] <= 0 or t[-1] > path.T:
            raise ValueError("jump times must lie in (0, T]")
        if np.any(np.diff(t) < 0):
            raise ValueError("jump times must be ascending")
        if np.any(~(path.x_jumps > 0)):
            raise ValueError("jumps of X must be positive")


@dataclass
class PathBatch:
    """``n`` solved paths stored flat (same layout as :class:`DriverBatch`)."""

    T: float
    eps: float
    counts: np.ndarray
    offsets: np.ndarray
    times: np.ndarray
    x_jumps: np.ndarray
    l_jumps: np.ndarray
    pre_states: np.ndarray
    terminal: np.ndarray
    driver_terminal: np.ndarray

    @property
    def n(self) -> int:
        return self.counts.size

    @property
    def path_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), self.counts)

    def path(self, i: int) -> JumpPath:
        sl = slice(self.offsets[i], self.offsets[i + 1])
        return JumpPath(self.T, self.times[sl].copy(), self.x_jumps[sl].copy(),
                        self.l_jumps[sl].copy(), self.pre_states[sl].copy(),
                        float(self.terminal[i]), {"eps": self.eps})

    def segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flat ``(path id, level, duration)`` of every constancy interval of ``X_{t-}``."""
        pid = self.path_index
        prev = np.empty_like(self.times)
        if self.times.size:
            prev[1:] = self.times[:-1]
            first = self.offsets[:-1][self.counts > 0]
            prev[first] = 0.0
        last_time = np.zeros(self.n)
        has = self.counts > 0
        last_time[has] = self.times[self.offsets[1:][has] - 1]
        seg_pid = np.concatenate([pid, np.arange(self.n)])
        seg_level = np.concatenate([self.pre_states, self.terminal])
        seg_dur = np.concatenate([self.times - prev, self.T - last_time])
        return seg_pid, seg_level, seg_dur

    def values_at(self, t: np.ndarray) -> np.ndarray:
        """``X_t`` for every path at each time in ``t``; shape ``(n, len(t))``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros((self.n, t.size))
        pid = self.path_index
        for k, tk in enumerate(t):
            mask = self.times <= tk
            out[:, k] = np.bincount(pid[mask], self.x_jumps[mask], minlength=self.n)
        return out


def solve_batch(v: VolatilityFn, d: DriverBatch) -> PathBatch:
    """Push every path of ``d`` through ``sigma``, jump by jump."""
    n = d.n
    J = d.sizes.size
    pre = np.empty(J)
    x = np.empty(J)
    state = np.zeros(n)
    lsum = np.zeros(n)
    alive = np.arange(n)
    max_count = int(d.counts.max()) if n else 0
    for k in range(max_count):
        alive = alive[d.counts[alive] > k]
        idx = d.offsets[alive] + k
        s = state[alive]
        dl = d.sizes[idx]
        dx = np.asarray(v(s)) * dl
        pre[idx] = s
        x[idx] = dx
        state[alive] = s + dx
        lsum[alive] = lsum[alive] + dl
    return PathBatch(d.T, d.eps, d.counts.copy(), d.offsets.copy(), d.times.copy(), x,
                     d.sizes.copy(), pre, state, lsum)


def solve_jumpwise(v: VolatilityFn, d: DriverJumps) -> JumpPath:
    """Exact solution driven by the truncated driver ``d``."""
    if d.compensated:
        raise ValueError("compensated drivers carry a drift; solve_jumpwise needs a pure-jump driver")
    batch = DriverBatch(d.T, d.eps, np.array([len(d)]), d.times, d.sizes)
    path = solve_batch(v, batch).path(0)
    path.meta = {"eps": d.eps}
    return path


# --------------------------------------------------------------------------
# grid scheme

@dataclass
class GridPath:
    times: np.ndarray
    values: np.ndarray
    increments: np.ndarray

    @property
    def X_T(self) -> float:
        return float(self.values[-1])


def solve_euler_batch(v: VolatilityFn, p: GammaParams, T: float, m: int, n: int,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``n`` grid paths; returns ``(values (n, m+1), increments (n, m))``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not T > 0:
        raise ValueError("T must be > 0")
    dl = sample_increment(p, T / m, rng, size=(n, m))
    xs = np.zeros((n, m + 1))
    for i in range(m):
        xs[:, i + 1] = xs[:, i] + np.asarray(v(xs[:, i])) * dl[:, i]
    return xs, dl


def solve_euler(v: VolatilityFn, p: GammaParams, T: float, m: int,
                rng: np.random.Generator) -> GridPath:
    """Grid path on ``m`` uniform steps with exact ``Gamma(alpha T/m, beta)`` increments."""
    xs, dl = solve_euler_batch(v, p, T, m, 1, rng)
    return GridPath(np.linspace(0.0, T, m + 1), xs[0], dl[0])


# --------------------------------------------------------------------------
# serialisation

def sidecar_path(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_jump_path(path: JumpPath, csv_path: str | Path, meta: dict | None = None) -> Path:
    """Write ``time,x_jump,l_jump,pre_state`` rows plus a JSON sidecar."""
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in zip(path.times, path.x_jumps, path.l_jumps, path.pre_states):
            w.writerow([fmt(r) for r in row])
    side = {"T": path.T, **path.meta, **(meta or {})}
    sidecar_path(csv_path).write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return csv_path


def read_jump_path(csv_path: str | Path, T: float | None = None) -> JumpPath:
    """Load a path CSV (and its sidecar if present).

    Only ``time`` and ``x_jump`` are required; missing ``pre_state`` is rebuilt
    from partial sums and missing ``l_jump`` is left as NaN.
    """
    csv_path = Path(csv_path)
    try:
        text = csv_path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read path CSV {csv_path}: {exc}") from exc
    side = sidecar_path(csv_path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    if T is None:
        if "T" not in meta:
            raise ValueError(f"{csv_path}: horizon T missing (no sidecar) - pass it explicitly")
        T = meta["T"]
    rows = list(csv.DictReader(text.splitlines()))
    if rows and not {"time", "x_jump"} <= set(rows[0]):
        raise ValueError(f"{csv_path}: need at least columns time,x_jump")
    col = lambda name: np.array([float(r[name]) for r in rows]) if rows and name in rows[0] \
        else None  # noqa: E731
    times = col("time") if rows else np.zeros(0)
    x = col("x_jump") if rows else np.zeros(0)
    path = JumpPath.from_observed(T, times, x, meta)
    lj = col("l_jump")
    if lj is not None:
        path.l_jumps = lj
    pre = col("pre_state")
    if pre is not None:
        path.pre_states = pre
        path.terminal = float(pre[-1] + x[-1]) if x.size else 0.0
    return path
