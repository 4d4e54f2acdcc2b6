from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from bridgesim.core.errors import ArgumentError

# Coefficients are vectorized over a leading batch axis:
#   drift(t, x[n, d]) -> [n, d]
#   dispersion(t, x[n, d]) -> [n, d, d']
DriftFn = Callable[[float, np.ndarray], np.ndarray]
DispersionFn = Callable[[float, np.ndarray], np.ndarray]


def outer_square(s: np.ndarray) -> np.ndarray:
    """s s' over the last two axes; the one place a = sigma sigma' is formed."""
    return np.einsum("...ik,...jk->...ij", s, s)


def as_vector(x, d: Optional[int] = None, name: str = "x") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ArgumentError(f"{name} must be a vector, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise ArgumentError(f"{name} has dimension {arr.shape[0]}, expected {d}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class DiffusionModel:
    """
    Target SDE dX = b(t, X) dt + sigma(t, X) dW with X in R^d, W in R^d'.
    """
    d: int
    dW: int
    drift: DriftFn
    dispersion: DispersionFn
    name: str = "model"

    def __post_init__(self):
        if self.d < 1 or self.dW < 1:
            raise ArgumentError(f"dimensions must be positive, got d={self.d}, d'={self.dW}")

    def b(self, t: float, x: np.ndarray) -> np.ndarray:
        """Drift at a single state vector."""
        return self.drift(t, np.atleast_2d(x))[0]

    def sigma(self, t: float, x: np.ndarray) -> np.ndarray:
        """Dispersion at a single state vector."""
        return self.dispersion(t, np.atleast_2d(x))[0]

    def a(self, t: float, x: np.ndarray) -> np.ndarray:
        return outer_square(self.sigma(t, x))

    def diffusion_matrix(self, t: float, xs: np.ndarray) -> np.ndarray:
        """a(t, x) = sigma sigma' for a batch of states, shape [n, d, d]."""
        return outer_square(self.dispersion(t, xs))

    @classmethod
    def from_linear(cls, guide, name: str = "linear") -> "DiffusionModel":
        """
        The linear SDE of a guide as a target model. Coefficients run through
        the guide's own code, so model and guide agree bitwise.
        """
        def drift(t, xs):
            return guide.drift_batch(t, xs)

        def dispersion(t, xs):
            s = guide.sigma(t)
            return np.broadcast_to(s, (xs.shape[0],) + s.shape)

        return cls(d=guide.d, dW=guide.dW, drift=drift, dispersion=dispersion, name=name)


@dataclass(frozen=True)
class BridgeSpec:
    """Start u at time 0, endpoint v at horizon T."""
    u: np.ndarray
    v: np.ndarray
    T: float

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ArgumentError(f"horizon T must be positive, got {self.T}")
        u = as_vector(self.u, name="u")
        v = as_vector(self.v, d=u.shape[0], name="v")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def d(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class TimeGrid:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.shape[0] < 3:
            raise ArgumentError("time grid needs at least N=2 steps")
        if nodes[0] != 0.0:
            raise ArgumentError(f"time grid must start at 0, got {nodes[0]}")
        if not np.all(np.diff(nodes) > 0):
            raise ArgumentError("time grid must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def N(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    def index_of(self, t: float, atol: float = 1e-12) -> int:
        """Index of the node equal to t; ArgumentError if t is not a node."""
        k = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[k] - t) > atol * max(1.0, self.T):
            raise ArgumentError(f"t={t} is not a grid node (nearest {self.nodes[k]})")
        return k

    def nearest(self, t: float) -> int:
        """Index of the node closest to t."""
        if not 0.0 <= t <= self.T:
            raise ArgumentError(f"t={t} outside [0, {self.T}]")
        return int(np.argmin(np.abs(self.nodes - t)))


@dataclass(frozen=True)
class Path:
    grid: TimeGrid
    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] != self.grid.N + 1:
            raise ArgumentError(
                f"states shape {states.shape} does not match grid with {self.grid.N + 1} nodes"
            )
        object.__setattr__(self, "states", states)

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class PathBatch:
    """n paths on a common grid, states shape [n, N+1, d]."""
    grid: TimeGrid
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.states.shape[0]

    def path(self, i: int) -> Path:
        return Path(self.grid, self.states[i])

    def paths(self):
        return [self.path(i) for i in range(len(self))]

    def marginal(self, k: int) -> np.ndarray:
        return self.states[:, k, :]
