"""
Guided proposals

    dX°_t = b°(t, X°_t) dt + sigma(t, X°_t) dW_t,   b° = b + a r~

and their log-weights log psi(T) = int_0^T G(s, X°_s) ds with

    G = (b - b~)' r~ - 1/2 tr[(a - a~)(H~ - r~ r~')].

Paths step with explicit Euler-Maruyama on nodes 0..N-1 and are pinned to v
at t_N; the weight integral is the left Riemann sum on the same nodes.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from bridgesim.core.constants import ENDPOINT_MATCH_TOLERANCE
from bridgesim.core.errors import NumericalError
from bridgesim.core.logger import log_event
from bridgesim.core.rng import RngSpec
from bridgesim.guide.cache import GuideCache, cache_log_density, guide_curvature, guide_score
from bridgesim.guide.linear import LinearGuide
from bridgesim.sde.integrator import check_finite, integrate, sample_brownian_increments
from bridgesim.sde.models import BridgeSpec, DiffusionModel, Path, PathBatch, TimeGrid

logger = logging.getLogger("bridgesim.engines.guided")


@dataclass(frozen=True)
class WeightedPath:
    path: Path
    log_psi: float
    log_ptilde0: float
    endpoint_mismatch: bool = False

    @property
    def log_weight(self) -> float:
        """log p~(0, u; T, v) + log psi(T); equals log p(0, u; T, v) + log dP*/dP°."""
        return self.log_ptilde0 + self.log_psi


@dataclass(frozen=True)
class BridgeBatch(PathBatch):
    log_psi: Optional[np.ndarray] = None
    log_ptilde0: float = 0.0
    endpoint_mismatch: bool = False

    def weighted(self, i: int) -> WeightedPath:
        return WeightedPath(self.path(i), float(self.log_psi[i]), self.log_ptilde0, self.endpoint_mismatch)

    def weighted_paths(self):
        return [self.weighted(i) for i in range(len(self))]

    @property
    def log_weights(self) -> np.ndarray:
        return self.log_ptilde0 + self.log_psi


def endpoint_mismatch(model: DiffusionModel, guide: LinearGuide, spec: BridgeSpec) -> float:
    """max |a~(T) - a(T, v)|; zero is required for P* << P°."""
    return float(np.max(np.abs(guide.a(spec.T) - model.a(spec.T, spec.v))))


def _guiding_terms(model: DiffusionModel, cache: GuideCache, k: int, xs: np.ndarray):
    t = float(cache.grid.nodes[k])
    r = guide_score(cache, k, xs)
    b = model.drift(t, xs)
    a = model.diffusion_matrix(t, xs)
    check_finite(b, "drift", k, t, xs)
    check_finite(a, "diffusion matrix", k, t, xs)
    return t, r, b, a


def _drift_from_terms(r: np.ndarray, b: np.ndarray, a: np.ndarray) -> np.ndarray:
    return b + np.einsum("nij,nj->ni", a, r)


def _G_from_terms(guide: LinearGuide, cache: GuideCache, k: int, t: float, xs, r, b, a) -> np.ndarray:
    db = b - guide.drift_batch(t, xs)
    da = a - guide.a(t)[None]
    H = guide_curvature(cache, k)
    trace_H = np.einsum("ij,nij->n", H, da)
    trace_rr = np.einsum("ni,nij,nj->n", r, da, r)
    return np.sum(db * r, axis=1) - 0.5 * (trace_H - trace_rr)


def guided_drift(model: DiffusionModel, cache: GuideCache, k: int, x) -> np.ndarray:
    """b°(t_k, x) = b(t_k, x) + a(t_k, x) r~(t_k, x); x is [d] or [n, d]."""
    x = np.asarray(x, dtype=float)
    xs = np.atleast_2d(x)
    _, r, b, a = _guiding_terms(model, cache, k, xs)
    out = _drift_from_terms(r, b, a)
    return out[0] if x.ndim == 1 else out


def G_functional(model: DiffusionModel, guide: LinearGuide, cache: GuideCache, k: int, x) -> np.ndarray:
    """G(t_k, x), the integrand of log psi; x is [d] or [n, d]."""
    x = np.asarray(x, dtype=float)
    xs = np.atleast_2d(x)
    t, r, b, a = _guiding_terms(model, cache, k, xs)
    out = _G_from_terms(guide, cache, k, t, xs, r, b, a)
    return out[0] if x.ndim == 1 else out


def simulate_guided_bridges(
    model: DiffusionModel,
    guide: LinearGuide,
    cache: GuideCache,
    n_paths: int,
    rng: RngSpec,
    increments: Optional[np.ndarray] = None,
) -> BridgeBatch:
    spec, grid = cache.spec, cache.grid
    N = grid.N
    steps = grid.steps

    mismatch = endpoint_mismatch(model, guide, spec)
    flagged = mismatch > ENDPOINT_MATCH_TOLERANCE
    if flagged:
        log_event(logger, "guide_endpoint_mismatch", {
            "guide": guide.name, "model": model.name, "max_abs_diff": mismatch,
        }, level=logging.WARNING)

    dW = increments if increments is not None else sample_brownian_increments(grid, model.dW, rng, n_paths)
    n = dW.shape[0]
    log_psi = np.zeros(n)

    def drift(k, t, xs):
        _, r, b, a = _guiding_terms(model, cache, k, xs)
        log_psi[:] += _G_from_terms(guide, cache, k, t, xs, r, b, a) * steps[k]
        return _drift_from_terms(r, b, a)

    # Drift at t_0..t_{N-2} moves the state; G at t_{N-1} closes the weight sum.
    states = integrate(model, drift, spec.u, grid, dW, n_steps=N - 1)
    xs = states[:, N - 1, :]
    t, r, b, a = _guiding_terms(model, cache, N - 1, xs)
    log_psi += _G_from_terms(guide, cache, N - 1, t, xs, r, b, a) * steps[N - 1]
    states[:, N, :] = spec.v

    if not np.all(np.isfinite(log_psi)):
        bad = int(np.flatnonzero(~np.isfinite(log_psi))[0])
        raise NumericalError("non-finite log psi", node=N - 1, state=states[bad, N - 1])

    log_ptilde0 = float(cache_log_density(cache, 0, spec.u))
    return BridgeBatch(
        grid=grid, states=states, log_psi=log_psi, log_ptilde0=log_ptilde0,
        endpoint_mismatch=flagged,
    )


def simulate_guided_bridge(
    model: DiffusionModel, guide: LinearGuide, cache: GuideCache, rng: RngSpec,
) -> WeightedPath:
    return simulate_guided_bridges(model, guide, cache, 1, rng).weighted(0)


def log_likelihood_ratio(batch: BridgeBatch, log_p: float) -> np.ndarray:
    """log dP*/dP° per path = log p~(0, u) + log psi(T) - log p(0, u)."""
    return batch.log_weights - log_p


@dataclass(frozen=True)
class TransitionEstimate:
    """p(0, u; T, v) as the Monte Carlo mean of p~(0, u) psi(T)."""
    log_p: float
    std_err: float          # of the estimate of p, natural scale
    batch: BridgeBatch

    @classmethod
    def from_batch(cls, batch: BridgeBatch) -> "TransitionEstimate":
        log_p, se = log_mean_exp_with_se(batch.log_weights)
        return cls(log_p=log_p, std_err=se, batch=batch)

    @property
    def relative_std_err(self) -> float:
        return self.std_err / float(np.exp(self.log_p))


def estimate_transition_density(
    model: DiffusionModel, guide: LinearGuide, cache: GuideCache, n_paths: int, rng: RngSpec,
    runner=None,
) -> TransitionEstimate:
    """
    Draws n_paths guided bridges (through runner.run when given) and returns
    the estimate together with the batch it came from.
    """
    def simulate(n, child):
        return simulate_guided_bridges(model, guide, cache, n, child)

    batch = simulate(n_paths, rng) if runner is None else runner.run(simulate, n_paths, rng)
    return TransitionEstimate.from_batch(batch)


def log_mean_exp_with_se(log_values: np.ndarray):
    n = log_values.shape[0]
    log_mean = float(logsumexp(log_values) - np.log(n))
    scaled = np.exp(log_values - log_values.max())
    se = float(np.std(scaled, ddof=1) / np.sqrt(n) * np.exp(log_values.max())) if n > 1 else float("nan")
    return log_mean, se


@dataclass(frozen=True)
class PathTerms:
    """
    Model drift and diffusion matrix at nodes 0..N-1 of stored paths. They do
    not depend on the guide, so re-weighting a fixed batch under many guides
    evaluates the model only once.
    """
    grid: TimeGrid
    states: np.ndarray   # [n, N, d]
    b: np.ndarray        # [n, N, d]
    a: np.ndarray        # [n, N, d, d]

    @classmethod
    def from_batch(cls, model: DiffusionModel, batch: PathBatch) -> "PathTerms":
        grid = batch.grid
        N = grid.N
        xs = batch.states[:, :N, :]
        b = np.empty_like(xs)
        a = np.empty(xs.shape + (xs.shape[-1],))
        for k in range(N):
            t = float(grid.nodes[k])
            b[:, k] = model.drift(t, xs[:, k])
            a[:, k] = model.diffusion_matrix(t, xs[:, k])
        return cls(grid=grid, states=xs, b=b, a=a)


def evaluate_log_psi(guide: LinearGuide, cache: GuideCache, terms: PathTerms) -> np.ndarray:
    """
    log psi(T) of fixed paths under another guide: left Riemann sum of G over
    nodes 0..N-1, all nodes solved at once against the stacked L~(t_k).
    """
    N = cache.N
    nodes = cache.grid.nodes[:N]
    Bs = np.stack([guide.B(t) for t in nodes])
    betas = np.stack([guide.beta(t) for t in nodes])
    a_guide = np.stack([guide.a(t) for t in nodes])
    L = cache.Hinv[:N][None]
    resid = cache.vpull[:N][None] - terms.states
    r = np.linalg.solve(L, resid[..., None])[..., 0]
    H = np.linalg.solve(cache.Hinv[:N], np.broadcast_to(np.eye(cache.d), cache.Hinv[:N].shape))
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    db = terms.b - (np.einsum("kij,nkj->nki", Bs, terms.states) + betas[None])
    da = terms.a - a_guide[None]
    G = (
        np.sum(db * r, axis=-1)
        - 0.5 * (np.einsum("kij,nkij->nk", H, da) - np.einsum("nki,nkij,nkj->nk", r, da, r))
    )
    log_psi = G @ cache.grid.steps
    if not np.all(np.isfinite(log_psi)):
        raise NumericalError(f"non-finite log psi when re-weighting under guide {guide.name}")
    return log_psi
