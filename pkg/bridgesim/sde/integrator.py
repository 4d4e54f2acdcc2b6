import logging
from typing import Callable, Optional, Union

import numpy as np

from bridgesim.core import config
from bridgesim.core.constants import SYMMETRY_TOLERANCE
from bridgesim.core.errors import ArgumentError, NumericalError
from bridgesim.core.rng import RngSpec
from .models import DiffusionModel, Path, PathBatch, TimeGrid, as_vector, outer_square

logger = logging.getLogger("bridgesim.sde.integrator")

# drift_fn(k, t_k, X[n, d]) -> [n, d]
StepDrift = Callable[[int, float, np.ndarray], np.ndarray]


def sample_brownian_increments(
    grid: Union[TimeGrid, np.ndarray],
    dim: int,
    rng: Union[RngSpec, np.random.Generator],
    n_paths: Optional[int] = None,
) -> np.ndarray:
    """
    Brownian increments on the grid, row k ~ Normal(0, Delta_k I).
    Shape [N, dim], or [n_paths, N, dim] when n_paths is given.
    """
    nodes = grid.nodes if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    if nodes.ndim != 1 or nodes.shape[0] < 1:
        raise ArgumentError("grid must be a non-empty vector of nodes")
    if dim < 1:
        raise ArgumentError(f"noise dimension must be positive, got {dim}")
    steps = np.diff(nodes)
    if np.any(steps <= 0):
        raise ArgumentError("grid must be strictly increasing")
    gen = rng.generator() if isinstance(rng, RngSpec) else rng
    n = 1 if n_paths is None else int(n_paths)
    z = gen.standard_normal((n, steps.shape[0], dim))
    dW = z * np.sqrt(steps)[None, :, None]
    return dW[0] if n_paths is None else dW


def coarsen_increments(dW: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of `factor` increments along the time axis."""
    if factor < 1 or dW.shape[-2] % factor:
        raise ArgumentError(f"cannot coarsen {dW.shape[-2]} increments by {factor}")
    shape = dW.shape[:-2] + (dW.shape[-2] // factor, factor, dW.shape[-1])
    return dW.reshape(shape).sum(axis=-2)


def check_finite(values: np.ndarray, what: str, k: int, t: float, xs: np.ndarray):
    if not np.all(np.isfinite(values)):
        bad = np.flatnonzero(~np.all(np.isfinite(values.reshape(values.shape[0], -1)), axis=1))
        i = int(bad[0]) if bad.size else 0
        raise NumericalError(f"non-finite {what}", node=k, time=t, state=xs[i])


def integrate(
    model: DiffusionModel,
    drift_fn: StepDrift,
    x0: np.ndarray,
    grid: TimeGrid,
    dW: np.ndarray,
    n_steps: Optional[int] = None,
) -> np.ndarray:
    """
    Explicit Euler-Maruyama for a batch: X_{k+1} = X_k + f(t_k, X_k) Delta_k
    + sigma(t_k, X_k) dW_k, coefficients at the left node. Runs the first
    n_steps steps (default all) and returns states [n, N+1, d]; rows past
    n_steps are left for the caller to fill.
    """
    n = dW.shape[0]
    N = grid.N
    n_steps = N if n_steps is None else n_steps
    states = np.empty((n, N + 1, model.d))
    states[:, 0, :] = x0
    nodes = grid.nodes
    steps = grid.steps
    x = states[:, 0, :]
    for k in range(n_steps):
        t = float(nodes[k])
        b = drift_fn(k, t, x)
        check_finite(b, "drift", k, t, x)
        s = model.dispersion(t, x)
        check_finite(s, "dispersion", k, t, x)
        if config.DEBUG_CHECKS:
            a = outer_square(s)
            asym = float(np.max(np.abs(a - np.swapaxes(a, -1, -2))))
            if asym > SYMMETRY_TOLERANCE:
                raise NumericalError(f"diffusion matrix asymmetric by {asym:.3g}", node=k, time=t)
        x = x + b * steps[k] + np.einsum("nij,nj->ni", s, dW[:, k, :])
        states[:, k + 1, :] = x
    return states


def euler_maruyama_batch(
    model: DiffusionModel,
    x0,
    grid: TimeGrid,
    n_paths: int,
    rng: RngSpec,
    increments: Optional[np.ndarray] = None,
) -> PathBatch:
    x0 = as_vector(x0, d=model.d, name="x0")
    dW = increments if increments is not None else sample_brownian_increments(grid, model.dW, rng, n_paths)
    states = integrate(model, lambda k, t, x: model.drift(t, x), x0, grid, dW)
    return PathBatch(grid, states)


def euler_maruyama(model: DiffusionModel, x0, grid: TimeGrid, rng: RngSpec) -> Path:
    return euler_maruyama_batch(model, x0, grid, 1, rng).path(0)
