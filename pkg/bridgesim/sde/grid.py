import numpy as np

from bridgesim.core.errors import ArgumentError
from .models import TimeGrid


def _check(T: float, N: int):
    if not isinstance(N, (int, np.integer)) or N < 2:
        raise ArgumentError(f"step count must be an integer >= 2, got {N}")
    if not (np.isfinite(T) and T > 0):
        raise ArgumentError(f"horizon must be positive, got {T}")


def make_bridge_grid(T: float, N: int) -> TimeGrid:
    """
    Time-changed grid t_k = tau(kT/N) with tau(s) = s (2 - s/T). Nodes pile up
    quadratically near T where the guiding drift behaves like 1/(T - t).
    """
    _check(T, N)
    s = np.arange(N + 1) * (T / N)
    nodes = s * (2.0 - s / T)
    nodes[-1] = T
    return TimeGrid(nodes)


def uniform_grid(T: float, N: int) -> TimeGrid:
    _check(T, N)
    nodes = np.arange(N + 1) * (T / N)
    nodes[-1] = T
    return TimeGrid(nodes)


def refine_grid(grid: TimeGrid, factor: int = 2) -> TimeGrid:
    """Bridge grid with factor*N nodes; every factor-th node coincides with grid."""
    return make_bridge_grid(grid.T, grid.N * factor)
