"""
Stochastic-gradient information projection: tune the guide parameter theta
towards argmin KL(P* || P°_theta).

With h_theta(X) = log p~_theta(0, u) + log psi_theta(T)(X) we have
dP*/dP°_theta = exp(h_theta) / p, so

    grad KL = E_{theta_n}[ (dP°_theta / dP°_{theta_n}) (dP*/dP°_theta) grad h_theta ]

for proposals drawn under a reference theta_n. The unknown p(0, u; T, v) is
replaced by the running mean of exp(h_{theta_n}) over every proposal drawn so
far, which is unbiased for p under any theta_n.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.special import logsumexp

from bridgesim.core.constants import FD_RELATIVE_STEP, LOG_CLAMP, TUNER_ALPHA0, TUNER_GAMMA
from bridgesim.core.errors import ArgumentError
from bridgesim.core.logger import log_event
from bridgesim.core.rng import RngSpec
from bridgesim.engines.guided import BridgeBatch, PathTerms, evaluate_log_psi, simulate_guided_bridges
from bridgesim.guide.cache import build_guide_cache, cache_log_density
from bridgesim.guide.linear import LinearGuide
from bridgesim.sde.models import BridgeSpec, DiffusionModel, TimeGrid

logger = logging.getLogger("bridgesim.tuning.tuner")

GuideFamily = Callable[[np.ndarray], LinearGuide]
Decay = Callable[[int, int], float]


def decay_harmonic(alpha0: float = TUNER_ALPHA0, gamma: float = TUNER_GAMMA) -> Decay:
    """alpha(n, k) = alpha0 * gamma / (gamma + n), constant in k."""
    return lambda n, k: alpha0 * gamma / (gamma + n)


def decay_inverse_linear(n: int, k: int) -> float:
    return 1.0 / (10.0 + 2.0 * n)


@dataclass
class TunerConfig:
    theta0: np.ndarray
    M: int = 1
    K: int = 1
    decay: Decay = field(default_factory=decay_harmonic)
    n_outer: int = 1000
    fd_step: Optional[float] = None

    def __post_init__(self):
        self.theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=float))
        if self.M < 1 or self.K < 1:
            raise ArgumentError(f"batch size M and inner steps K must be >= 1, got M={self.M}, K={self.K}")
        if self.n_outer < 0:
            raise ArgumentError(f"n_outer must be >= 0, got {self.n_outer}")
        first, second = self.decay(1, 1), self.decay(2, 1)
        if not first > 0:
            raise ArgumentError("decay weights must be positive")
        if second > first:
            raise ArgumentError(f"decay weights must be nonincreasing in n, got alpha(1)={first}, alpha(2)={second}")

    def step_for(self, theta: np.ndarray) -> np.ndarray:
        if self.fd_step is not None:
            return np.full_like(theta, self.fd_step)
        return FD_RELATIVE_STEP * (1.0 + np.abs(theta))


@dataclass(frozen=True)
class TuningProblem:
    model: DiffusionModel
    family: GuideFamily
    spec: BridgeSpec
    grid: TimeGrid

    def guide(self, theta) -> LinearGuide:
        return self.family(np.atleast_1d(np.asarray(theta, dtype=float)))

    def sample(self, theta, n: int, rng: RngSpec) -> BridgeBatch:
        guide = self.guide(theta)
        cache = build_guide_cache(guide, self.spec, self.grid)
        return simulate_guided_bridges(self.model, guide, cache, n, rng)

    def h(self, theta, terms: PathTerms) -> np.ndarray:
        """h_theta = log p~_theta(0, u) + log psi_theta(T) along fixed paths."""
        guide = self.guide(theta)
        cache = build_guide_cache(guide, self.spec, self.grid)
        return float(cache_log_density(cache, 0, self.spec.u)) + evaluate_log_psi(guide, cache, terms)


def fd_gradient(fn: Callable[[np.ndarray], np.ndarray], theta: np.ndarray, step, stencil: int = 3) -> np.ndarray:
    """
    Central finite-difference gradient of a vector-valued fn (one value per
    path). Returns [n, p]. stencil is 3 (second order) or 5 (fourth order).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    step = np.broadcast_to(np.asarray(step, dtype=float), theta.shape)
    if stencil not in (3, 5):
        raise ArgumentError(f"stencil must be 3 or 5, got {stencil}")
    columns = []
    for i in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[i] = step[i]
        if stencil == 3:
            g = (fn(theta + e) - fn(theta - e)) / (2 * step[i])
        else:
            g = (-fn(theta + 2 * e) + 8 * fn(theta + e) - 8 * fn(theta - e) + fn(theta - 2 * e)) / (12 * step[i])
        columns.append(g)
    return np.stack(columns, axis=-1)


@dataclass(frozen=True)
class GradientStep:
    theta: np.ndarray
    measure_change: np.ndarray   # dP°_theta / dP°_{theta_n} per path
    clamped: bool


def theta_gradient_step(
    problem: TuningProblem,
    theta: np.ndarray,
    theta_n: np.ndarray,
    batch: BridgeBatch,
    terms: PathTerms,
    cfg: TunerConfig,
    log_p_ref: float,
    n: int = 1,
    k: int = 1,
) -> GradientStep:
    """
    One update theta <- theta - alpha(n, k) (1/M) sum_m c_m w_m grad h_theta(X_m)
    on a batch sampled under theta_n, where c_m = exp(h_{theta_n} - h_theta)
    and w_m = exp(h_theta - log p_ref).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_n = np.atleast_1d(np.asarray(theta_n, dtype=float))
    if len(batch) == 0:
        raise ArgumentError("empty proposal batch")
    h_n = batch.log_weights
    h_theta = h_n if np.array_equal(theta, theta_n) else problem.h(theta, terms)

    log_change = h_n - h_theta
    clamped = bool(np.any(np.abs(log_change) > LOG_CLAMP))
    log_change = np.clip(log_change, -LOG_CLAMP, LOG_CLAMP)
    log_weight = np.clip(log_change + h_theta - log_p_ref, -LOG_CLAMP, LOG_CLAMP)
    if clamped:
        log_event(logger, "tuner_reweight_clamped", {"n": n, "k": k, "theta": theta}, level=logging.WARNING)

    grad_h = fd_gradient(lambda th: problem.h(th, terms), theta, cfg.step_for(theta))
    direction = np.mean(np.exp(log_weight)[:, None] * grad_h, axis=0)
    return GradientStep(
        theta=theta - cfg.decay(n, k) * direction,
        measure_change=np.exp(log_change),
        clamped=clamped,
    )


@dataclass(frozen=True)
class TunerResult:
    trace: np.ndarray          # [n_outer + 1, p]
    log_p_estimate: float
    clamped_steps: int

    @property
    def theta(self) -> np.ndarray:
        return self.trace[-1]

    def tail_mean(self, fraction: float = 0.5) -> np.ndarray:
        start = int(math.floor(self.trace.shape[0] * (1 - fraction)))
        return self.trace[start:].mean(axis=0)


def run_tuner(
    model: DiffusionModel,
    family: GuideFamily,
    spec: BridgeSpec,
    grid: TimeGrid,
    cfg: TunerConfig,
    rng: RngSpec,
) -> TunerResult:
    problem = TuningProblem(model, family, spec, grid)
    theta = cfg.theta0.copy()
    trace: List[np.ndarray] = [theta.copy()]
    log_sum, count = -np.inf, 0
    clamped_steps = 0

    for n in range(1, cfg.n_outer + 1):
        theta_n = theta.copy()
        batch = problem.sample(theta_n, cfg.M, rng.child(n))
        terms = PathTerms.from_batch(model, batch)
        log_sum = float(np.logaddexp(log_sum, logsumexp(batch.log_weights)))
        count += len(batch)
        log_p_ref = log_sum - math.log(count)

        for k in range(1, cfg.K + 1):
            step = theta_gradient_step(problem, theta, theta_n, batch, terms, cfg, log_p_ref, n, k)
            theta = step.theta
            clamped_steps += int(step.clamped)
        if not np.all(np.isfinite(theta)):
            raise ArgumentError(f"tuner diverged at outer step {n}: theta={theta}")
        trace.append(theta.copy())
        log_event(logger, "tuner_step", {"n": n, "theta": theta, "log_p_ref": log_p_ref}, level=logging.DEBUG)

    return TunerResult(
        trace=np.stack(trace),
        log_p_estimate=(log_sum - math.log(count)) if count else float("nan"),
        clamped_steps=clamped_steps,
    )
