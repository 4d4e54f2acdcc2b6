"""
Comparison proposals. Both pull towards v with (v - x)/(T - t); the full
variant keeps the model drift, the other drops it. Neither carries a weight.
"""
from typing import Optional

import numpy as np

from bridgesim.core.errors import ArgumentError, NumericalError
from bridgesim.core.rng import RngSpec
from bridgesim.guide.cache import build_guide_cache
from bridgesim.guide.linear import LinearGuide, check_positive_definite
from bridgesim.sde.integrator import integrate, sample_brownian_increments
from bridgesim.sde.models import BridgeSpec, DiffusionModel, Path, PathBatch, TimeGrid
from .guided import simulate_guided_bridges


def _pulled_bridges(
    model: DiffusionModel,
    spec: BridgeSpec,
    grid: TimeGrid,
    n_paths: int,
    rng: RngSpec,
    keep_drift: bool,
    increments: Optional[np.ndarray],
) -> PathBatch:
    if abs(grid.T - spec.T) > 1e-12 * spec.T:
        raise ArgumentError(f"grid ends at {grid.T}, bridge horizon is {spec.T}")
    remaining = spec.T - grid.nodes

    def drift(k, t, xs):
        pull = (spec.v - xs) / remaining[k]
        return model.drift(t, xs) + pull if keep_drift else pull

    dW = increments if increments is not None else sample_brownian_increments(grid, model.dW, rng, n_paths)
    states = integrate(model, drift, spec.u, grid, dW, n_steps=grid.N - 1)
    states[:, grid.N, :] = spec.v
    return PathBatch(grid, states)


def delyon_hu_full_batch(model, spec, grid, n_paths, rng, increments=None) -> PathBatch:
    return _pulled_bridges(model, spec, grid, n_paths, rng, True, increments)


def delyon_hu_nodrift_batch(model, spec, grid, n_paths, rng, increments=None) -> PathBatch:
    return _pulled_bridges(model, spec, grid, n_paths, rng, False, increments)


def simulate_delyon_hu_full(model: DiffusionModel, spec: BridgeSpec, grid: TimeGrid, rng: RngSpec) -> Path:
    return delyon_hu_full_batch(model, spec, grid, 1, rng).path(0)


def simulate_delyon_hu_nodrift(model: DiffusionModel, spec: BridgeSpec, grid: TimeGrid, rng: RngSpec) -> Path:
    return delyon_hu_nodrift_batch(model, spec, grid, 1, rng).path(0)


def exact_linear_bridge_batch(guide: LinearGuide, spec, grid, n_paths, rng, increments=None) -> PathBatch:
    """Bridges of the linear process itself: guided proposal with guide = target."""
    try:
        check_positive_definite(guide.a(0.0), "guide diffusion a~(0)")
    except NumericalError as e:
        raise ArgumentError(f"exact linear bridge needs a non-degenerate guide: {e}") from e
    model = DiffusionModel.from_linear(guide, name=f"{guide.name}-target")
    cache = build_guide_cache(guide, spec, grid)
    batch = simulate_guided_bridges(model, guide, cache, n_paths, rng, increments)
    return PathBatch(grid, batch.states)


def simulate_exact_linear_bridge(guide: LinearGuide, spec: BridgeSpec, grid: TimeGrid, rng: RngSpec) -> Path:
    return exact_linear_bridge_batch(guide, spec, grid, 1, rng).path(0)
