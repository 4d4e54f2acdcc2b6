from typing import Dict, Optional, Type

from bridgesim.core.errors import ArgumentError
from bridgesim.guide.cache import build_guide_cache
from bridgesim.guide.linear import LinearGuide
from .base import BridgeProposal
from .baselines import delyon_hu_full_batch, delyon_hu_nodrift_batch, exact_linear_bridge_batch
from .guided import simulate_guided_bridges


class GuidedProposal(BridgeProposal):
    name = "guided"
    weighted = True

    def __init__(self, model, spec, grid, guide: LinearGuide):
        super().__init__(model, spec, grid)
        self.guide = guide
        self.cache = build_guide_cache(guide, spec, grid)

    def simulate(self, n_paths, rng, increments=None):
        return simulate_guided_bridges(self.model, self.guide, self.cache, n_paths, rng, increments)


class DelyonHuFullProposal(BridgeProposal):
    name = "delyon-hu"

    def simulate(self, n_paths, rng, increments=None):
        return delyon_hu_full_batch(self.model, self.spec, self.grid, n_paths, rng, increments)


class DelyonHuNoDriftProposal(BridgeProposal):
    name = "delyon-hu-nodrift"

    def simulate(self, n_paths, rng, increments=None):
        return delyon_hu_nodrift_batch(self.model, self.spec, self.grid, n_paths, rng, increments)


class ExactLinearProposal(BridgeProposal):
    """Ignores the model: the target is the guide's own linear process."""
    name = "exact-linear"

    def __init__(self, model, spec, grid, guide: LinearGuide):
        super().__init__(model, spec, grid)
        self.guide = guide

    def simulate(self, n_paths, rng, increments=None):
        return exact_linear_bridge_batch(self.guide, self.spec, self.grid, n_paths, rng, increments)


# Proposal Registry
# Maps CLI/config names to proposal classes

PROPOSAL_REGISTRY: Dict[str, Type[BridgeProposal]] = {
    GuidedProposal.name: GuidedProposal,
    DelyonHuFullProposal.name: DelyonHuFullProposal,
    DelyonHuNoDriftProposal.name: DelyonHuNoDriftProposal,
    ExactLinearProposal.name: ExactLinearProposal,
}

NEEDS_GUIDE = {GuidedProposal.name, ExactLinearProposal.name}


def get_proposal(name: str, model, spec, grid, guide: Optional[LinearGuide] = None) -> BridgeProposal:
    """
    Instantiate the proposal registered under name.
    """
    cls = PROPOSAL_REGISTRY.get(name)
    if cls is None:
        raise ArgumentError(f"unknown proposal '{name}', choose from {sorted(PROPOSAL_REGISTRY)}")
    if name in NEEDS_GUIDE:
        if guide is None:
            raise ArgumentError(f"proposal '{name}' needs a guide")
        return cls(model, spec, grid, guide)
    return cls(model, spec, grid)
