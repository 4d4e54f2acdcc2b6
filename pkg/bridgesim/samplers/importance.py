import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from bridgesim.core.errors import ArgumentError
from bridgesim.core.logger import log_event
from bridgesim.core.rng import RngSpec
from bridgesim.engines.guided import BridgeBatch, WeightedPath, simulate_guided_bridges
from bridgesim.guide.cache import GuideCache
from bridgesim.guide.linear import LinearGuide
from bridgesim.sde.models import DiffusionModel
from bridgesim.workers.batch import BatchRunner

logger = logging.getLogger("bridgesim.samplers.importance")


def normalize_log_weights(log_weights: np.ndarray) -> np.ndarray:
    """Shift so the maximum is 0."""
    log_weights = np.asarray(log_weights, dtype=float)
    if log_weights.size == 0:
        raise ArgumentError("empty weight vector")
    if not np.all(np.isfinite(log_weights)):
        raise ArgumentError("log weights must be finite")
    return log_weights - log_weights.max()


def self_normalized(log_weights: np.ndarray) -> np.ndarray:
    w = np.exp(normalize_log_weights(log_weights))
    return w / w.sum()


@dataclass(frozen=True)
class WeightedEnsemble:
    """
    Independent guided proposals with log-weights log psi(T), shifted to max 0.
    The p~(0, u) factor is common to all samples and drops out.
    """
    batch: BridgeBatch
    log_weights: np.ndarray

    @classmethod
    def from_batch(cls, batch: BridgeBatch) -> "WeightedEnsemble":
        return cls(batch=batch, log_weights=normalize_log_weights(batch.log_psi))

    @property
    def samples(self) -> List[WeightedPath]:
        return self.batch.weighted_paths()

    def __len__(self) -> int:
        return self.log_weights.shape[0]

    def normalized_weights(self) -> np.ndarray:
        return self_normalized(self.log_weights)

    def weighted_marginal(self, k: int):
        """(states at node k [n, d], self-normalized weights [n])."""
        return self.batch.marginal(k), self.normalized_weights()

    def weighted_mean(self, k: int) -> np.ndarray:
        xs, w = self.weighted_marginal(k)
        return w @ xs


def effective_sample_size(ensemble_or_weights) -> float:
    """(sum w)^2 / sum w^2 on self-normalized weights; in [1, n]."""
    if isinstance(ensemble_or_weights, WeightedEnsemble):
        w = ensemble_or_weights.normalized_weights()
    else:
        w = np.asarray(ensemble_or_weights, dtype=float)
        if w.size == 0:
            raise ArgumentError("ESS of an empty ensemble")
        w = w / w.sum()
    return float(w.sum() ** 2 / np.sum(w ** 2))


def importance_ensemble(
    model: DiffusionModel,
    guide: LinearGuide,
    cache: GuideCache,
    n_samples: int,
    rng: RngSpec,
    runner: Optional[BatchRunner] = None,
) -> WeightedEnsemble:
    if n_samples < 1:
        raise ArgumentError(f"n_samples must be >= 1, got {n_samples}")
    runner = runner or BatchRunner()
    batch = runner.run(
        lambda n, child: simulate_guided_bridges(model, guide, cache, n, child), n_samples, rng,
    )
    ensemble = WeightedEnsemble.from_batch(batch)
    ess = effective_sample_size(ensemble)
    log_event(logger, "ensemble_drawn", {
        "guide": guide.name, "n": n_samples, "ess": ess, "ess_fraction": ess / n_samples,
    }, level=logging.DEBUG)
    return ensemble
