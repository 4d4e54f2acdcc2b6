from .guided import (
    BridgeBatch, G_functional, TransitionEstimate, WeightedPath, estimate_transition_density, guided_drift,
    log_likelihood_ratio, simulate_guided_bridge, simulate_guided_bridges,
)
from .baselines import (
    simulate_delyon_hu_full, simulate_delyon_hu_nodrift, simulate_exact_linear_bridge,
)
from .registry import PROPOSAL_REGISTRY, get_proposal
