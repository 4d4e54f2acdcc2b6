from .linear import (
    LinearGuide, fundamental_matrix, guide_covariance, guide_log_density, guide_mean,
    linear_bridge_marginal,
)
from .cache import (
    GuideCache, build_guide_cache, cache_log_density, guide_curvature, guide_score,
)
