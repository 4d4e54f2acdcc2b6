from .zoo import (
    GUIDE_FAMILIES, MODEL_ZOO, bm_drift_guide, bm_drift_model, constant_drift_family, fixed_family,
    get_guide_family, get_model, linear_counterpart, mean_reverting_family, ou_guide,
    ou_log_transition, ou_model,
    polynomial_model, sine_drift_model,
)
