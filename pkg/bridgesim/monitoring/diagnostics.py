"""
Diagnostics for guides whose diffusion does not match the target at T.
"""
import logging
import math
from typing import Dict, Sequence

import numpy as np
from scipy import integrate

from bridgesim.core.errors import ArgumentError
from bridgesim.core.logger import log_event
from bridgesim.core.rng import RngSpec
from bridgesim.guide.cache import build_guide_cache
from bridgesim.guide.linear import LinearGuide
from bridgesim.samplers.importance import effective_sample_size, importance_ensemble
from bridgesim.sde.grid import make_bridge_grid
from bridgesim.sde.models import BridgeSpec, DiffusionModel
from bridgesim.workers.batch import BatchRunner

logger = logging.getLogger("bridgesim.monitoring.diagnostics")


def _inner(alpha: float, T: float, s: float) -> float:
    """int_0^s (T - tau)^(-2 alpha) dtau"""
    if abs(2 * alpha - 1) < 1e-12:
        return math.log(T / (T - s))
    return ((T - s) ** (1 - 2 * alpha) - T ** (1 - 2 * alpha)) / (2 * alpha - 1)


def singular_guide_log_divergence(alpha: float, T: float, t: float) -> float:
    """
    E[log dP°_t/dP*_t] on [0, t] for the bridge of b = 0, sigma = 1 guided by
    a Brownian guide with sigma~^2 = 1/alpha. Zero for alpha = 1 and
    unbounded as t -> T otherwise.
    """
    if not alpha > 0:
        raise ArgumentError(f"alpha must be positive, got {alpha}")
    if not 0.0 <= t < T:
        raise ArgumentError(f"need 0 <= t < T, got t={t}, T={T}")
    if alpha == 1.0 or t == 0.0:
        return 0.0
    value, _ = integrate.quad(
        lambda s: (T - s) ** (-2 + 2 * alpha) * _inner(alpha, T, s), 0.0, t, limit=200,
    )
    return 0.5 * (alpha - 1) ** 2 * value


def ess_by_grid_size(
    model: DiffusionModel,
    guide: LinearGuide,
    spec: BridgeSpec,
    steps: Sequence[int],
    n_paths: int,
    rng: RngSpec,
    runner: BatchRunner = None,
) -> Dict[int, float]:
    """ESS / n of the importance ensemble for each grid size N."""
    out = {}
    for i, N in enumerate(steps):
        grid = make_bridge_grid(spec.T, N)
        cache = build_guide_cache(guide, spec, grid)
        ensemble = importance_ensemble(model, guide, cache, n_paths, rng.child(i), runner)
        out[int(N)] = effective_sample_size(ensemble) / n_paths
    log_event(logger, "ess_by_grid_size", {"guide": guide.name, "ess_fraction": out})
    return out
