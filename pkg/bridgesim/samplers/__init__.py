from .importance import WeightedEnsemble, effective_sample_size, importance_ensemble
from .mh import ChainState, ChainSummary, mh_step, run_chain
