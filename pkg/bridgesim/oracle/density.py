"""
Forward-simulation estimate of p(s, x; t, .) in one or two dimensions: a fine
histogram of X_t smoothed by a Gaussian kernel of fixed bandwidth.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import interpolate, ndimage

from bridgesim.core.constants import DENSITY_MIN_PER_BIN, ORACLE_MAX_DIM
from bridgesim.core.errors import ArgumentError
from bridgesim.core.logger import log_event
from bridgesim.core.rng import RngSpec
from bridgesim.sde.grid import uniform_grid
from bridgesim.sde.integrator import euler_maruyama_batch
from bridgesim.sde.models import DiffusionModel, as_vector
from bridgesim.workers.batch import BatchRunner

logger = logging.getLogger("bridgesim.oracle.density")

BINS_PER_BANDWIDTH = 4
MAX_BINS = {1: 8192, 2: 512}
PADDING = 5.0          # bandwidths of empty margin around the samples


@dataclass(frozen=True)
class DensityEstimate:
    axes: List[np.ndarray]           # bin centres per coordinate
    values: Optional[np.ndarray]     # density on the product grid; None for a point mass
    bandwidth: float
    n_samples: int
    point_mass: bool = False
    undersized: bool = False
    location: Optional[np.ndarray] = None

    def integral(self) -> float:
        if self.point_mass:
            return 1.0
        cell = np.prod([ax[1] - ax[0] for ax in self.axes])
        return float(self.values.sum() * cell)

    def evaluate(self, points) -> np.ndarray:
        """Density at points [m, d] (or [m] in 1D); zero outside the grid."""
        if self.point_mass:
            raise ArgumentError("density of a point mass cannot be evaluated")
        pts = np.asarray(points, dtype=float)
        pts = pts[:, None] if pts.ndim == 1 else pts
        fn = interpolate.RegularGridInterpolator(self.axes, self.values, bounds_error=False, fill_value=0.0)
        return fn(pts)


def _shifted(model: DiffusionModel, s: float) -> DiffusionModel:
    return DiffusionModel(
        d=model.d, dW=model.dW,
        drift=lambda tau, xs: model.drift(s + tau, xs),
        dispersion=lambda tau, xs: model.dispersion(s + tau, xs),
        name=model.name,
    )


def transition_density_estimate(
    model: DiffusionModel,
    s: float,
    x,
    t: float,
    n_paths: int,
    bandwidth: float,
    rng: RngSpec,
    n_steps: int = 200,
    runner: Optional[BatchRunner] = None,
) -> DensityEstimate:
    if model.d > ORACLE_MAX_DIM:
        raise ArgumentError(f"density estimate supports d <= {ORACLE_MAX_DIM}, got d={model.d}")
    if not t > s:
        raise ArgumentError(f"need s < t, got s={s}, t={t}")
    if not bandwidth > 0 or n_paths < 2:
        raise ArgumentError(f"need bandwidth > 0 and n_paths >= 2, got {bandwidth}, {n_paths}")
    x = as_vector(x, d=model.d)
    d = model.d

    runner = runner or BatchRunner()
    grid = uniform_grid(t - s, n_steps)
    batch = runner.run(lambda n, child: euler_maruyama_batch(_shifted(model, s), x, grid, n, child), n_paths, rng)
    ys = batch.states[:, -1, :]

    spread = np.ptp(ys, axis=0)
    if np.max(spread) <= 1e-12 * (1.0 + np.max(np.abs(ys))):
        log_event(logger, "density_point_mass", {"model": model.name, "location": ys[0]}, level=logging.WARNING)
        return DensityEstimate(
            axes=[], values=None, bandwidth=bandwidth, n_samples=n_paths, point_mass=True, location=ys[0].copy(),
        )

    per_window = n_paths * np.prod(np.minimum(1.0, 2 * bandwidth / spread))
    undersized = bool(per_window < DENSITY_MIN_PER_BIN)
    if undersized:
        log_event(logger, "density_undersized", {
            "n_paths": n_paths, "bandwidth": bandwidth, "expected_per_window": per_window,
        }, level=logging.WARNING)

    edges = []
    for j in range(d):
        lo = ys[:, j].min() - PADDING * bandwidth
        hi = ys[:, j].max() + PADDING * bandwidth
        n_bins = int(min(MAX_BINS[d], np.ceil((hi - lo) * BINS_PER_BANDWIDTH / bandwidth)))
        edges.append(np.linspace(lo, hi, n_bins + 1))
    hist, _ = np.histogramdd(ys, bins=edges, density=True)
    widths = np.array([e[1] - e[0] for e in edges])
    values = ndimage.gaussian_filter(hist, sigma=bandwidth / widths, mode="constant", truncate=4.0)
    axes = [0.5 * (e[1:] + e[:-1]) for e in edges]
    return DensityEstimate(
        axes=axes, values=values, bandwidth=bandwidth, n_samples=n_paths, undersized=undersized,
    )
