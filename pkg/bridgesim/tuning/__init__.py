from .kl import KLScan, kl_scan
from .tuner import (
    GradientStep, TunerConfig, TunerResult, TuningProblem, decay_harmonic, decay_inverse_linear,
    fd_gradient, run_tuner, theta_gradient_step,
)
