"""Gamma-driven SDEs: simulation, likelihood ratios, change-of-measure checks, estimation."""

from .driver import (DriverBatch, DriverJumps, GammaParams, levy_density, levy_tail,
                     sample_increment, sample_jump_batch, sample_jump_series)
from .inference import BinStats, FitResult, bin_stats, mle_piecewise, profile_likelihood
from .likelihood import (LikelihoodResult, compensator_term, hellinger_H, hellinger_rate,
                         log_density, sigma_levy_density, y_ratio)
from .rng import substream
from .sde import GridPath, JumpPath, PathBatch, solve_batch, solve_euler, solve_jumpwise
from .special import exp1
from .verify import (McEstimate, SegmentationPlan, check_martingale, check_transfer, f_forward,
                     f_reverse, moment_sanity, segmentation_plan)
from .volatility import VolatilityFn, certify

__all__ = [
    "BinStats", "DriverBatch", "DriverJumps", "FitResult", "GammaParams", "GridPath",
    "JumpPath", "LikelihoodResult", "McEstimate", "PathBatch", "SegmentationPlan",
    "VolatilityFn", "bin_stats", "certify", "check_martingale", "check_transfer",
    "compensator_term", "exp1", "f_forward", "f_reverse", "hellinger_H", "hellinger_rate",
    "levy_density", "levy_tail", "log_density", "mle_piecewise", "moment_sanity",
    "profile_likelihood", "sample_increment", "sample_jump_batch", "sample_jump_series",
    "segmentation_plan", "sigma_levy_density", "solve_batch", "solve_euler", "solve_jumpwise",
    "substream", "y_ratio",
]
