"""Command-line entry point: ``gammasde {simulate,likelihood,verify,fit,report}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .driver import GammaParams, sample_jump_batch, sample_jump_series
from .inference import fit
from .likelihood import log_density
from .rng import MASK64, substream
from .sde import fmt, read_jump_path, solve_batch, solve_euler, solve_jumpwise, write_jump_path
from .verify import SuiteConfig, report_json, run_suite
from .volatility import VolatilityFn

COMMANDS = ("simulate", "likelihood", "verify", "fit", "report")
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    alpha: float = 1.0
    beta: float = 1.0
    sigma: dict = field(default_factory=lambda: {"constant": 1.0})
    T: float = 1.0
    eps: float = 1e-3
    m: int | None = None
    n: int = 1000
    seed: int = 42
    input: str | None = None
    out: str | None = None
    format: str = "csv"
    threads: int = 1
    edges: list | None = None
    sigma_floor: float = 1e-6

    def validate(self) -> None:
        def need(ok, name, msg):
            if not ok:
                raise UsageError(f"--{name}: {msg}")

        need(self.command in COMMANDS, "command", f"must be one of {COMMANDS}")
        need(self.alpha > 0, "alpha", "must be > 0")
        need(self.beta > 0, "beta", "must be > 0")
        need(self.T > 0, "T", "must be > 0")
        need(self.eps > 0, "eps", "must be > 0")
        need(self.m is None or self.m >= 1, "grid-m", "must be >= 1")
        need(self.n >= 1, "n", "must be >= 1")
        need(0 <= self.seed <= MASK64, "seed", "must be a 64-bit unsigned integer")
        need(self.format in ("csv", "json"), "format", "must be csv or json")
        need(self.threads >= 1, "threads", "must be >= 1")
        need(self.sigma_floor > 0, "sigma-floor", "must be > 0")
        if self.command in ("likelihood", "fit"):
            need(self.input is not None, "input", f"required for {self.command}")
        if self.command == "fit":
            need(self.edges is not None, "edges", "required for fit")
        if self.command == "verify":
            need(self.n >= 100, "n", "verify needs at least 100 replicates")
        try:
            VolatilityFn.from_spec(self.sigma)
        except (ValueError, TypeError, KeyError) as exc:
            raise UsageError(f"--sigma: {exc}") from exc

    @property
    def params(self) -> GammaParams:
        return GammaParams(self.alpha, self.beta)

    @property
    def volatility(self) -> VolatilityFn:
        return VolatilityFn.from_spec(self.sigma)


def parse_sigma(text: str) -> dict:
    """JSON spec, a path to a JSON file, or a bare number for a constant."""
    p = Path(text)
    if not text.lstrip().startswith("{") and p.exists():
        text = p.read_text()
    try:
        val = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--sigma: not valid JSON or a readable file: {text!r}") from exc
    if isinstance(val, (int, float)):
        return {"constant": float(val)}
    if not isinstance(val, dict):
        raise UsageError("--sigma: expected a JSON object")
    return val


def parse_edges(text: str) -> list:
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise UsageError(f"--edges: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gammasde", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--T", type=float)
    ap.add_argument("--eps", type=float)
    ap.add_argument("--grid-m", type=int, dest="m")
    ap.add_argument("--n", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--sigma", help="JSON spec, JSON file, or a number")
    ap.add_argument("--edges", help="comma-separated bin edges starting at 0")
    ap.add_argument("--sigma-floor", type=float, dest="sigma_floor")
    ap.add_argument("--input")
    ap.add_argument("--out")
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--threads", type=int)
    return ap


def config_from_args(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(args.command)
    if args.command == "verify":
        cfg.eps, cfg.n, cfg.seed = SuiteConfig.eps, SuiteConfig.n, SuiteConfig.seed
        cfg.threads = os.cpu_count() or 1
    for name in ("alpha", "beta", "T", "eps", "m", "n", "seed", "input", "out", "format",
                 "threads", "sigma_floor"):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg, name, val)
    if args.sigma is not None:
        cfg.sigma = parse_sigma(args.sigma)
    if args.edges is not None:
        cfg.edges = parse_edges(args.edges)
    return cfg


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc}") from exc


def _echo(cfg: RunConfig) -> dict:
    return {"config": asdict(cfg)}


def cmd_simulate(cfg: RunConfig) -> int:
    v, p = cfg.volatility, cfg.params
    rng = substream(cfg.seed, 0)
    if cfg.m is not None:
        g = solve_euler(v, p, cfg.T, cfg.m, rng)
        rows = ["time,value,l_increment"] + [
            f"{fmt(t)},{fmt(x)},{'' if i == 0 else fmt(g.increments[i - 1])}"
            for i, (t, x) in enumerate(zip(g.times, g.values))]
        _write("\n".join(rows) + "\n", cfg.out)
        if cfg.out:
            Path(cfg.out).with_suffix(".json").write_text(
                json.dumps(_echo(cfg), indent=2, sort_keys=True) + "\n")
        return 0
    path = solve_jumpwise(v, sample_jump_series(p, cfg.T, cfg.eps, False, rng))
    meta = {"params": p.to_dict(), "sigma": v.to_spec(), "seed": cfg.seed, "eps": cfg.eps,
            **_echo(cfg)}
    if cfg.format == "json" or cfg.out is None:
        doc = {"T": path.T, **meta,
               "jumps": [[fmt(a), fmt(b), fmt(c), fmt(d)] for a, b, c, d in
                         zip(path.times, path.x_jumps, path.l_jumps, path.pre_states)]}
        _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", cfg.out)
    else:
        path.meta = {}
        write_jump_path(path, cfg.out, meta)
    return 0


def cmd_likelihood(cfg: RunConfig) -> int:
    path = read_jump_path(cfg.input)
    res = log_density(cfg.volatility, path, cfg.params)
    _write(res.to_json(**_echo(cfg)) + "\n", cfg.out)
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    path = read_jump_path(cfg.input)
    res = fit(path, cfg.edges, cfg.params, cfg.sigma_floor)
    _write(res.to_json(**_echo(cfg)) + "\n", cfg.out)
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    suite = SuiteConfig(alpha=cfg.alpha, beta=cfg.beta, T=cfg.T, eps=cfg.eps, n=cfg.n,
                        seed=cfg.seed, threads=cfg.threads)
    report = run_suite(suite)
    _write(report_json(report), cfg.out)
    return 0 if report["passed"] else 1


def cmd_report(cfg: RunConfig) -> int:
    """Per-time summaries of ``n`` simulated paths, plot-ready CSV."""
    v, p = cfg.volatility, cfg.params
    m = cfg.m or 100
    d = sample_jump_batch(p, cfg.T, cfg.eps, cfg.n, substream(cfg.seed, 0))
    paths = solve_batch(v, d)
    t = np.linspace(0.0, cfg.T, m + 1)
    vals = paths.values_at(t)
    q = np.quantile(vals, QUANTILES, axis=0)
    header = ["time", "mean"] + [f"q{int(round(100 * a)):02d}" for a in QUANTILES]
    lines = [",".join(header)]
    for k in range(t.size):
        lines.append(",".join(fmt(x) for x in [t[k], vals[:, k].mean(), *q[:, k]]))
    _write("\n".join(lines) + "\n", cfg.out)
    if cfg.out:
        Path(cfg.out).with_suffix(".json").write_text(
            json.dumps(_echo(cfg), indent=2, sort_keys=True) + "\n")
    return 0


HANDLERS = {"simulate": cmd_simulate, "likelihood": cmd_likelihood, "verify": cmd_verify,
            "fit": cmd_fit, "report": cmd_report}


def run(cfg: RunConfig) -> int:
    cfg.validate()
    return HANDLERS[cfg.command](cfg)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        return run(cfg)
    except UsageError as exc:
        print(f"gammasde: usage error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"gammasde: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
