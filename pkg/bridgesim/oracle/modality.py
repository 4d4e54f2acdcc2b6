"""
Silverman's bandwidth test for multimodality of a scalar sample: the critical
bandwidth is the smallest Gaussian-kernel bandwidth with a unimodal density
estimate, and the p-value is the share of smoothed bootstrap samples that
still show more than one mode at that bandwidth.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from bridgesim.core.errors import ArgumentError
from bridgesim.core.logger import log_event
from bridgesim.core.rng import RngSpec

logger = logging.getLogger("bridgesim.oracle.modality")

GRID_POINTS = 512
BISECTION_STEPS = 40


@dataclass(frozen=True)
class ModalityTest:
    critical_bandwidth: float
    p_value: float
    n_boot: int

    def multimodal(self, level: float = 0.05) -> bool:
        return self.p_value < level


def count_modes(xs: np.ndarray, bandwidth: float) -> int:
    """Local maxima of the Gaussian kernel estimate of xs with the given absolute bandwidth."""
    scale = float(np.std(xs, ddof=1))
    kde = stats.gaussian_kde(xs, bw_method=bandwidth / scale)
    grid = np.linspace(xs.min() - 3 * bandwidth, xs.max() + 3 * bandwidth, GRID_POINTS)
    f = kde(grid)
    return int(np.sum((f[1:-1] > f[:-2]) & (f[1:-1] >= f[2:])))


def critical_bandwidth(xs: np.ndarray) -> float:
    lo, hi = 1e-3 * float(np.std(xs, ddof=1)), 2.0 * float(np.std(xs, ddof=1))
    if count_modes(xs, lo) <= 1:
        return lo
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if count_modes(xs, mid) > 1:
            lo = mid
        else:
            hi = mid
    return hi


def silverman_test(samples, rng: RngSpec, n_boot: int = 200) -> ModalityTest:
    xs = np.asarray(samples, dtype=float).ravel()
    if xs.size < 10 or np.ptp(xs) == 0.0:
        raise ArgumentError(f"modality test needs at least 10 distinct-valued samples, got {xs.size}")
    h = critical_bandwidth(xs)
    gen = rng.generator()
    mean, var = xs.mean(), xs.var(ddof=1)
    shrink = 1.0 / np.sqrt(1.0 + h * h / var)
    exceed = 0
    for _ in range(n_boot):
        draw = gen.choice(xs, size=xs.size, replace=True) + h * gen.standard_normal(xs.size)
        if count_modes(mean + shrink * (draw - mean), h) > 1:
            exceed += 1
    result = ModalityTest(critical_bandwidth=h, p_value=exceed / n_boot, n_boot=n_boot)
    log_event(logger, "modality_test", {
        "n": int(xs.size), "critical_bandwidth": h, "p_value": result.p_value,
    }, level=logging.DEBUG)
    return result
