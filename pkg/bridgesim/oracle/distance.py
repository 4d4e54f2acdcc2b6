from typing import Optional, Union

import numpy as np
from scipy import stats

from bridgesim.core.errors import ArgumentError
from bridgesim.core.rng import RngSpec
from bridgesim.samplers.importance import WeightedEnsemble
from bridgesim.sde.models import PathBatch


def _marginal(source: Union[WeightedEnsemble, PathBatch], t: float):
    """(states [n, d], weights or None, node time) at the node nearest t."""
    if isinstance(source, WeightedEnsemble):
        grid = source.batch.grid
        k = grid.nearest(t)
        xs, w = source.weighted_marginal(k)
        return xs, w, float(grid.nodes[k])
    k = source.grid.nearest(t)
    return source.marginal(k), None, float(source.grid.nodes[k])


def wasserstein_1(xs: np.ndarray, ys: np.ndarray, wx=None, wy=None) -> float:
    """W1 between two samples [n, d]; the largest per-coordinate distance when d = 2."""
    if xs.shape[1] != ys.shape[1]:
        raise ArgumentError(f"dimension mismatch {xs.shape[1]} vs {ys.shape[1]}")
    return max(
        stats.wasserstein_distance(xs[:, j], ys[:, j], u_weights=wx, v_weights=wy)
        for j in range(xs.shape[1])
    )


def marginal_distance(
    weighted: Union[WeightedEnsemble, PathBatch],
    oracle_paths: PathBatch,
    t: float,
    atol: float = 1e-12,
) -> float:
    """
    W1 between the self-normalized weighted marginal of an ensemble and the
    empirical oracle marginal at the common grid node nearest t. Unweighted
    batches (baseline proposals) count with equal weights.
    """
    xs, wx, tx = _marginal(weighted, t)
    ys, _, ty = _marginal(oracle_paths, t)
    if abs(tx - ty) > atol * max(1.0, t):
        raise ArgumentError(f"no common node near t={t}: ensemble has {tx}, oracle has {ty}")
    return wasserstein_1(xs, ys, wx, None)


def self_distance_baseline(oracle_paths: PathBatch, t: float, rng: RngSpec) -> float:
    """W1 between two random halves of one oracle run at the node nearest t."""
    n = len(oracle_paths)
    if n < 2:
        raise ArgumentError("self-distance needs at least two oracle paths")
    order = rng.generator().permutation(n)
    xs = oracle_paths.marginal(oracle_paths.grid.nearest(t))
    half = n // 2
    return wasserstein_1(xs[order[:half]], xs[order[half:2 * half]])
