"""
Independence Metropolis-Hastings over bridge path space. A guided proposal
replaces the current path with probability min(1, psi_prop / psi_curr); the
p~(0, u)/p(0, u) factor of dP*/dP° is the same for every path and cancels.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from bridgesim.core.errors import ArgumentError
from bridgesim.core.logger import log_event
from bridgesim.core.rng import RngSpec
from bridgesim.engines.guided import BridgeBatch, WeightedPath, simulate_guided_bridge, simulate_guided_bridges
from bridgesim.guide.cache import GuideCache
from bridgesim.guide.linear import LinearGuide
from bridgesim.sde.models import DiffusionModel
from bridgesim.workers.batch import BatchRunner

logger = logging.getLogger("bridgesim.samplers.mh")


@dataclass(frozen=True)
class ChainState:
    current: WeightedPath
    iteration: int = 0
    accepted_count: int = 0

    def __post_init__(self):
        if not 0 <= self.accepted_count <= self.iteration:
            raise ArgumentError(
                f"accepted_count {self.accepted_count} must lie in [0, iteration={self.iteration}]"
            )


@dataclass(frozen=True)
class ChainSummary:
    acceptance_rate: float
    paths: List[WeightedPath]
    log_psi_trace: np.ndarray
    accepted: np.ndarray
    final: ChainState


def acceptance_log_ratio(proposal: WeightedPath, current: WeightedPath) -> float:
    return proposal.log_psi - current.log_psi


def accept(state: ChainState, proposal: WeightedPath, uniform: float) -> ChainState:
    """One accept/reject decision against a uniform draw in [0, 1)."""
    with np.errstate(divide="ignore"):
        take = bool(np.log(uniform) < acceptance_log_ratio(proposal, state.current))
    return ChainState(
        current=proposal if take else state.current,
        iteration=state.iteration + 1,
        accepted_count=state.accepted_count + int(take),
    )


def mh_step(
    state: ChainState,
    model: DiffusionModel,
    guide: LinearGuide,
    cache: GuideCache,
    rng: RngSpec,
) -> ChainState:
    """Propose an independent guided bridge and accept or keep the current one."""
    proposal = simulate_guided_bridge(model, guide, cache, rng.child(0))
    uniform = rng.child(1).generator().random()
    return accept(state, proposal, uniform)


def run_chain(
    model: DiffusionModel,
    guide: LinearGuide,
    cache: GuideCache,
    n_iters: int,
    rng: RngSpec,
    thin: int = 1,
    runner: Optional[BatchRunner] = None,
) -> ChainSummary:
    """
    Runs n_iters MH steps. The initial path comes from the first proposal
    stream; the proposals of all steps are drawn up front in parallel chunks.
    """
    if n_iters < 1:
        raise ArgumentError(f"n_iters must be >= 1, got {n_iters}")
    if thin < 1:
        raise ArgumentError(f"thin must be >= 1, got {thin}")
    runner = runner or BatchRunner()

    initial = simulate_guided_bridges(model, guide, cache, 1, rng.child(0)).weighted(0)
    proposals: BridgeBatch = runner.run(
        lambda n, child: simulate_guided_bridges(model, guide, cache, n, child), n_iters, rng.child(1),
    )
    uniforms = rng.child(2).generator().random(n_iters)

    state = ChainState(current=initial)
    trace = np.empty(n_iters)
    accepted = np.zeros(n_iters, dtype=bool)
    stored = []
    for i in range(n_iters):
        before = state.accepted_count
        state = accept(state, proposals.weighted(i), uniforms[i])
        accepted[i] = state.accepted_count > before
        trace[i] = state.current.log_psi
        if (i + 1) % thin == 0:
            stored.append(state.current)

    rate = state.accepted_count / state.iteration
    log_event(logger, "chain_finished", {
        "guide": guide.name, "iterations": n_iters, "acceptance_rate": rate,
    })
    return ChainSummary(
        acceptance_rate=rate, paths=stored, log_psi_trace=trace, accepted=accepted, final=state,
    )
