"""
KL(P* || P°_theta) over a grid of theta values, estimated from one reference
batch drawn under theta_ref:

    KL(theta) = E*[h_theta] - log p,   E*[f] ~ sum_m w_m f(X_m),  w ∝ exp(h_ref)

with log p the transition density estimate from the same batch. Every theta
re-weights the same paths, so the scan curve is smooth in theta.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from bridgesim.core.constants import KL_MIN_ESS_FRACTION
from bridgesim.core.errors import ArgumentError
from bridgesim.core.logger import log_event
from bridgesim.core.rng import RngSpec
from bridgesim.engines.guided import PathTerms, estimate_transition_density
from bridgesim.guide.cache import build_guide_cache
from bridgesim.sde.models import BridgeSpec, DiffusionModel, TimeGrid
from .tuner import GuideFamily, TuningProblem

logger = logging.getLogger("bridgesim.tuning.kl")


@dataclass(frozen=True)
class KLScan:
    thetas: np.ndarray     # [m, p]
    kl: np.ndarray         # [m]
    std_err: np.ndarray    # [m]
    ess: float
    low_ess: bool
    log_p: float

    @property
    def argmin(self) -> np.ndarray:
        return self.thetas[int(np.nanargmin(self.kl))]


def _weighted_estimate(weights: np.ndarray, values: np.ndarray):
    mean = float(np.sum(weights * values))
    se = float(np.sqrt(np.sum(weights ** 2 * (values - mean) ** 2)))
    return mean, se


def kl_scan(
    model: DiffusionModel,
    family: GuideFamily,
    spec: BridgeSpec,
    grid: TimeGrid,
    thetas: Sequence,
    theta_ref,
    n_mc: int,
    rng: RngSpec,
    threads: int = 1,
) -> KLScan:
    if n_mc < 2:
        raise ArgumentError(f"n_mc must be >= 2, got {n_mc}")
    thetas = np.asarray(thetas, dtype=float)
    thetas = thetas[:, None] if thetas.ndim == 1 else thetas
    if thetas.shape[0] == 0:
        raise ArgumentError("empty theta grid")

    problem = TuningProblem(model, family, spec, grid)
    guide_ref = problem.guide(theta_ref)
    reference = estimate_transition_density(
        model, guide_ref, build_guide_cache(guide_ref, spec, grid), n_mc, rng,
    )
    terms = PathTerms.from_batch(model, reference.batch)
    h_ref = reference.batch.log_weights
    log_p = reference.log_p
    weights = np.exp(h_ref - logsumexp(h_ref))
    ess = float(1.0 / np.sum(weights ** 2))
    low_ess = ess < KL_MIN_ESS_FRACTION * n_mc
    if low_ess:
        log_event(logger, "kl_scan_low_ess", {
            "ess": ess, "n_mc": n_mc, "theta_ref": theta_ref,
        }, level=logging.WARNING)

    def evaluate(theta):
        return _weighted_estimate(weights, problem.h(theta, terms))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(evaluate, thetas))

    kl = np.array([m for m, _ in results]) - log_p
    se = np.array([s for _, s in results])
    return KLScan(thetas=thetas, kl=kl, std_err=se, ess=ess, low_ess=low_ess, log_p=log_p)
