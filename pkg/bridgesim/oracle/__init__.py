from .density import DensityEstimate, transition_density_estimate
from .distance import marginal_distance, self_distance_baseline, wasserstein_1
from .modality import ModalityTest, count_modes, silverman_test
from .rejection import OracleResult, default_epsilon, rejection_bridge_sample
