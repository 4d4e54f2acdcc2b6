"""
Brute-force bridges: forward-simulate the unconditioned model and keep the
paths that end within epsilon of v.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from bridgesim.core.constants import ORACLE_BATCH, ORACLE_EPSILON_FACTOR, ORACLE_MAX_DIM
from bridgesim.core.errors import ArgumentError, OracleInfeasibleError
from bridgesim.core.logger import log_event
from bridgesim.core.rng import RngSpec
from bridgesim.sde.integrator import euler_maruyama_batch
from bridgesim.sde.models import BridgeSpec, DiffusionModel, PathBatch, TimeGrid
from bridgesim.workers.batch import BatchRunner

logger = logging.getLogger("bridgesim.oracle.rejection")


@dataclass(frozen=True)
class OracleResult:
    paths: PathBatch
    acceptance_fraction: float
    n_forward: int
    epsilon: float
    complete: bool            # n_target reached before the forward budget ran out


def default_epsilon(model: DiffusionModel, spec: BridgeSpec) -> float:
    """ORACLE_EPSILON_FACTOR * sqrt(T) * ||sigma(T, v)||_2"""
    scale = float(np.linalg.norm(model.sigma(spec.T, spec.v), 2))
    return ORACLE_EPSILON_FACTOR * math.sqrt(spec.T) * scale


def rejection_bridge_sample(
    model: DiffusionModel,
    spec: BridgeSpec,
    grid: TimeGrid,
    n_target: int,
    max_forward: int,
    rng: RngSpec,
    epsilon: Optional[float] = None,
    batch_size: int = ORACLE_BATCH,
    runner: Optional[BatchRunner] = None,
) -> OracleResult:
    if model.d > ORACLE_MAX_DIM:
        raise ArgumentError(f"rejection oracle supports d <= {ORACLE_MAX_DIM}, got d={model.d}")
    if abs(grid.T - spec.T) > 1e-12 * spec.T:
        raise ArgumentError(f"grid ends at {grid.T}, bridge horizon is {spec.T}")
    if n_target < 1 or max_forward < 1:
        raise ArgumentError(f"n_target and max_forward must be >= 1, got {n_target}, {max_forward}")
    epsilon = default_epsilon(model, spec) if epsilon is None else float(epsilon)
    if not epsilon > 0:
        raise ArgumentError(f"epsilon must be positive, got {epsilon}")

    runner = runner or BatchRunner()
    kept = []
    n_kept, n_forward, round_ = 0, 0, 0
    while n_kept < n_target and n_forward < max_forward:
        size = min(batch_size, max_forward - n_forward)
        batch = runner.run(
            lambda n, child: euler_maruyama_batch(model, spec.u, grid, n, child), size, rng.child(round_),
        )
        hit = np.linalg.norm(batch.states[:, -1, :] - spec.v, axis=1) <= epsilon
        kept.append(batch.states[hit])
        n_kept += int(hit.sum())
        n_forward += size
        round_ += 1

    if n_kept == 0:
        raise OracleInfeasibleError(
            f"no forward path ended within {epsilon:.3g} of v after {n_forward} draws"
        )
    states = np.concatenate(kept, axis=0)[:n_target]
    fraction = n_kept / n_forward
    log_event(logger, "oracle_finished", {
        "model": model.name, "kept": states.shape[0], "forward": n_forward,
        "acceptance_fraction": fraction, "epsilon": epsilon,
    })
    return OracleResult(
        paths=PathBatch(grid, states, meta={"epsilon": epsilon}),
        acceptance_fraction=fraction,
        n_forward=n_forward,
        epsilon=epsilon,
        complete=n_kept >= n_target,
    )
