from .diagnostics import ess_by_grid_size, singular_guide_log_divergence
from .invariants import CheckResult, ValidationReport, run_invariant_suite
