"""Simulation studies shared by the unit and acceptance tests."""

import numpy as np

from gammasde import GammaParams, VolatilityFn, substream
from gammasde.driver import sample_jump_batch
from gammasde.inference import fit
from gammasde.sde import solve_batch

TRUTH = np.array([2.0, 3.0])


def two_bin_edges(p: GammaParams, T: float) -> list:
    # X crosses the edge around T/2, so both bins collect occupation time growing with T
    return [0.0, p.alpha * T / p.beta]


def two_bin_fits(T: float, R: int, seed: int, key: int, eps: float = 1e-3,
                 p: GammaParams = GammaParams(1.0, 1.0)) -> np.ndarray:
    """Fitted (sigma_0, sigma_1) for R independent datasets under the two-level truth."""
    edges = two_bin_edges(p, T)
    v = VolatilityFn.piecewise(edges, TRUTH)
    paths = solve_batch(v, sample_jump_batch(p, T, eps, R, substream(seed, key)))
    out = np.empty((R, 2))
    for i in range(R):
        res = fit(paths.path(i), edges, p)
        out[i] = res.values
    return out


def rms_rel_error(fits: np.ndarray) -> np.ndarray:
    return np.sqrt(np.nanmean(((fits - TRUTH) / TRUTH) ** 2, axis=0))


def consistency_study(seed: int, R: int = 50, horizons=(200.0, 400.0)) -> dict:
    """Per-bin RMS relative error at each horizon (independent datasets per horizon)."""
    errs = [rms_rel_error(two_bin_fits(T, R, seed, k)) for k, T in enumerate(horizons)]
    shrinks = bool(np.all(errs[0] > errs[1]))
    return {"seed": seed, "errors": [e.tolist() for e in errs], "shrinks": shrinks}
