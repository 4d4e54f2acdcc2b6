import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from bridgesim.core.constants import DELTA_MIN_FACTOR, SUBGRID_POINTS, RK4_MAX_STEP
from bridgesim.core.errors import ArgumentError, NumericalError
from bridgesim.core.logger import log_event
from bridgesim.sde.models import BridgeSpec, TimeGrid
from .linear import (
    LinearGuide, affine_integral, check_positive_definite, rk4_left_propagator,
    symmetrize, trapezoid, van_loan,
)

logger = logging.getLogger("bridgesim.guide.cache")

LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class GuideCache:
    """
    Guiding quantities at every node of a bridge grid. Arrays are indexed by
    node k = 0..N; node N is analytic (v(T) = v, Phi(T, T) = I, L~(T) = 0)
    and the drift is never evaluated there. Read-only, safe to share.
    """
    grid: TimeGrid
    spec: BridgeSpec
    Phi_T: np.ndarray       # [N+1, d, d] Phi(T, t_k)
    Hinv: np.ndarray        # [N+1, d, d] L~(t_k) = H~(t_k)^{-1}
    chol: np.ndarray        # [N+1, d, d] lower Cholesky factor of L~(t_k), zero at N
    vpull: np.ndarray       # [N+1, d] v(t_k)
    logdetK: np.ndarray     # [N+1] log |K(t_k)|, -inf at N
    vT_exact: bool = True
    constant_fast_path: bool = False

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def d(self) -> int:
        return self.vpull.shape[1]


def _readonly(*arrays):
    for arr in arrays:
        arr.setflags(write=False)


def _constant_pass(guide: LinearGuide, spec: BridgeSpec, remaining: np.ndarray):
    B = guide.B(0.0)
    # L~(s) = int_0^{T-s} e^{-Bu} a~ e^{-B'u} du and e^{-B(T-s)} = Phi(s, T)
    Hinv, phi_sT = van_loan(-B, guide.a(0.0), remaining)
    Phi_T = linalg.expm(remaining[:, None, None] * B)
    vpull = np.einsum("kij,j->ki", phi_sT, spec.v) - affine_integral(-B, guide.beta(0.0), remaining)
    return Phi_T, Hinv, vpull


def _recursive_pass(guide: LinearGuide, spec: BridgeSpec, grid: TimeGrid):
    """Backward recursion over grid intervals with RK4 + trapezoid on a sub-grid."""
    N, d = grid.N, guide.d
    nodes = grid.nodes
    Phi_T = np.empty((N, d, d))
    Hinv = np.empty((N, d, d))
    vpull = np.empty((N, d))
    phi_next = np.eye(d)          # Phi(T, t_{k+1})
    hinv_next = np.zeros((d, d))  # L~(t_{k+1})
    v_next = spec.v.copy()        # v(t_{k+1})
    for k in range(N - 1, -1, -1):
        t0, t1 = float(nodes[k]), float(nodes[k + 1])
        m = max(SUBGRID_POINTS, int(math.ceil((t1 - t0) / RK4_MAX_STEP)))
        psi = rk4_left_propagator(guide.B, t0, t1, m)        # Phi(t_k, tau_j)
        taus = np.linspace(t0, t1, m + 1)
        h = (t1 - t0) / m
        a = np.stack([guide.a(tau) for tau in taus])
        betas = np.stack([guide.beta(tau) for tau in taus])
        step = psi[-1]                                       # Phi(t_k, t_{k+1})
        hinv = step @ hinv_next @ step.T + trapezoid(psi @ a @ np.swapaxes(psi, -1, -2), h)
        v = step @ v_next - trapezoid(np.einsum("jik,jk->ji", psi, betas), h)
        phi = np.linalg.solve(step.T, phi_next.T).T          # Phi(T, t_{k+1}) Phi(t_{k+1}, t_k)
        Phi_T[k], Hinv[k], vpull[k] = phi, symmetrize(hinv), v
        phi_next, hinv_next, v_next = phi, Hinv[k], v
    return Phi_T, Hinv, vpull


def build_guide_cache(guide: LinearGuide, spec: BridgeSpec, grid: TimeGrid) -> GuideCache:
    """
    Phi(T, t_k), L~(t_k) = int_{t_k}^T Phi(t_k, tau) a~(tau) Phi(t_k, tau)' dtau,
    v(t_k) and log|K(t_k)| for k < N.
    """
    if guide.d != spec.d:
        raise ArgumentError(f"guide dimension {guide.d} does not match bridge dimension {spec.d}")
    if abs(grid.T - spec.T) > 1e-12 * spec.T:
        raise ArgumentError(f"grid ends at {grid.T}, bridge horizon is {spec.T}")
    N, d = grid.N, guide.d
    remaining = spec.T - grid.nodes[:N]

    if guide.constant:
        Phi_T, Hinv, vpull = _constant_pass(guide, spec, remaining)
    else:
        Phi_T, Hinv, vpull = _recursive_pass(guide, spec, grid)

    # First-order expansion L~(s) ~ a~(T)(T - s) right next to the endpoint
    near = remaining < DELTA_MIN_FACTOR * spec.T
    if np.any(near):
        Hinv[near] = guide.a(spec.T)[None] * remaining[near][:, None, None]

    chol = np.zeros((N + 1, d, d))
    logdetK = np.empty(N + 1)
    for k in range(N):
        check_positive_definite(Hinv[k], "L~ = H~^{-1}", node=k, time=float(grid.nodes[k]))
        try:
            chol[k] = np.linalg.cholesky(Hinv[k])
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"Cholesky of L~ failed: {e}", node=k, time=float(grid.nodes[k]))
        sign, logdet_phi = np.linalg.slogdet(Phi_T[k])
        logdetK[k] = 2.0 * np.log(np.diag(chol[k])).sum() + 2.0 * logdet_phi

    Phi_T = np.concatenate([Phi_T, np.eye(d)[None]])
    Hinv = np.concatenate([Hinv, np.zeros((1, d, d))])
    vpull = np.concatenate([vpull, spec.v[None]])
    logdetK[N] = -np.inf
    if not (np.all(np.isfinite(Phi_T)) and np.all(np.isfinite(vpull))):
        raise NumericalError("guide cache contains non-finite entries")
    _readonly(Phi_T, Hinv, chol, vpull, logdetK)

    log_event(logger, "guide_cache_built", {
        "guide": guide.name, "nodes": N + 1, "dim": d, "constant_fast_path": guide.constant,
    }, level=logging.DEBUG)
    return GuideCache(
        grid=grid, spec=spec, Phi_T=Phi_T, Hinv=Hinv, chol=chol, vpull=vpull,
        logdetK=logdetK, vT_exact=True, constant_fast_path=guide.constant,
    )


def _check_node(cache: GuideCache, k: int):
    if k == cache.N and cache.vT_exact:
        raise ArgumentError(f"node {k} is the pinned endpoint v; guiding terms are not defined there")
    if not 0 <= k < cache.N:
        raise ArgumentError(f"node index {k} outside 0..{cache.N - 1} (node N is analytic)")


def guide_score(cache: GuideCache, k: int, x: np.ndarray) -> np.ndarray:
    """
    r~(t_k, x) = H~(t_k)(v(t_k) - x), by Cholesky solve against L~(t_k).
    x may be a single state [d] or a batch [n, d].
    """
    _check_node(cache, k)
    x = np.asarray(x, dtype=float)
    resid = cache.vpull[k] - x
    r = linalg.cho_solve((cache.chol[k], True), np.atleast_2d(resid).T).T
    if not np.all(np.isfinite(r)):
        raise NumericalError("non-finite guiding score", node=k, time=float(cache.grid.nodes[k]))
    return r[0] if resid.ndim == 1 else r


def guide_curvature(cache: GuideCache, k: int) -> np.ndarray:
    """H~(t_k), reconstructed by solving against L~(t_k)."""
    _check_node(cache, k)
    return symmetrize(linalg.cho_solve((cache.chol[k], True), np.eye(cache.d)))


def cache_log_density(cache: GuideCache, k: int, x: np.ndarray) -> np.ndarray:
    """
    R~(t_k, x) from cached quantities, using v - mu(s, x) = Phi(T, s)(v(s) - x)
    and K = Phi L~ Phi'. Batched like guide_score.
    """
    x = np.asarray(x, dtype=float)
    r = guide_score(cache, k, x)
    resid = cache.vpull[k] - x
    quad = np.sum(resid * r, axis=-1)
    return -0.5 * cache.d * LOG_2PI - 0.5 * cache.logdetK[k] - 0.5 * quad
