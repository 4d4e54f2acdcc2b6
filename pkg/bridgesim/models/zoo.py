"""
Built-in target models and guide families. The CLI refers to them by name;
user drifts enter through the library API (DiffusionModel directly).
"""
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy import stats

from bridgesim.core.errors import ArgumentError
from bridgesim.guide.linear import LinearGuide
from bridgesim.sde.models import DiffusionModel
from bridgesim.tuning.tuner import GuideFamily


def _square(value, d: int, name: str) -> np.ndarray:
    """Scalar -> value * I_d, otherwise a d x d matrix."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(d)
    arr = np.atleast_2d(arr)
    if arr.shape != (d, d):
        raise ArgumentError(f"{name} must be a scalar or {d}x{d} matrix, got shape {arr.shape}")
    return arr


def _vector(value, d: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(d, float(arr))
    if arr.shape != (d,):
        raise ArgumentError(f"{name} must be a scalar or vector of length {d}, got shape {arr.shape}")
    return arr


def _constant_dispersion(sigma: np.ndarray):
    def dispersion(t, xs):
        return np.broadcast_to(sigma, (xs.shape[0],) + sigma.shape)
    return dispersion


# ==============================================================================
# TARGET MODELS
# ==============================================================================

def bm_drift_model(beta1=0.0, sigma=1.0, d: int = 1) -> DiffusionModel:
    """dX = beta1 dt + sigma dW."""
    return DiffusionModel.from_linear(bm_drift_guide(beta1, sigma, d), name="bm-drift")


def ou_model(B=-1.0, beta=0.0, sigma=1.0, d: int = 1) -> DiffusionModel:
    """dX = (B X + beta) dt + sigma dW with constant coefficients."""
    return DiffusionModel.from_linear(ou_guide(B, beta, sigma, d), name="ou")


def sine_drift_model(beta1=2.0, beta2=2.0, frequency=8.0, sigma=0.5) -> DiffusionModel:
    """dX = (beta1 - beta2 sin(frequency X)) dt + sigma dW, scalar."""
    s = np.array([[float(sigma)]])

    def drift(t, xs):
        return beta1 - beta2 * np.sin(frequency * xs)

    return DiffusionModel(d=1, dW=1, drift=drift, dispersion=_constant_dispersion(s), name="sine-drift")


def polynomial_model(coefficients: Sequence[float], sigma=1.0) -> DiffusionModel:
    """dX = (c_0 + c_1 X + c_2 X^2 + ...) dt + sigma dW, scalar."""
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.ndim != 1 or coefficients.size == 0:
        raise ArgumentError("polynomial drift needs at least one coefficient")
    s = np.array([[float(sigma)]])

    def drift(t, xs):
        return np.polynomial.polynomial.polyval(xs, coefficients)

    return DiffusionModel(d=1, dW=1, drift=drift, dispersion=_constant_dispersion(s), name="user-polynomial")


# Model Registry
# Maps config names to builders; parameters are passed as keywords

MODEL_ZOO: Dict[str, Callable[..., DiffusionModel]] = {
    "bm-drift": bm_drift_model,
    "ou": ou_model,
    "sine-drift": sine_drift_model,
    "user-polynomial": polynomial_model,
}


def get_model(name: str, params: Dict) -> DiffusionModel:
    builder = MODEL_ZOO.get(name)
    if builder is None:
        raise ArgumentError(f"unknown model '{name}', choose from {sorted(MODEL_ZOO)}")
    try:
        return builder(**params)
    except TypeError as e:
        raise ArgumentError(f"bad parameters for model '{name}': {e}") from e


# ==============================================================================
# GUIDES
# ==============================================================================

def bm_drift_guide(beta1=0.0, sigma=1.0, d: int = 1, name: str = "bm-drift") -> LinearGuide:
    return LinearGuide.constant_coefficients(
        np.zeros((d, d)), _vector(beta1, d, "beta1"), _square(sigma, d, "sigma"), name=name,
    )


def ou_guide(B=-1.0, beta=0.0, sigma=1.0, d: int = 1, name: str = "ou") -> LinearGuide:
    sigma = np.asarray(sigma, dtype=float)
    return LinearGuide.constant_coefficients(
        _square(B, d, "B"), _vector(beta, d, "beta"),
        sigma * np.eye(d) if sigma.ndim == 0 else sigma, name=name,
    )


def constant_drift_family(sigma=1.0, d: int = 1) -> GuideFamily:
    """theta -> dX~ = theta dt + sigma~ dW."""
    s = _square(sigma, d, "sigma")

    def family(theta: np.ndarray) -> LinearGuide:
        return LinearGuide.constant_coefficients(
            np.zeros((d, d)), _vector(theta if theta.size > 1 else theta[0], d, "theta"), s,
            theta=theta, name="constant-drift",
        )
    return family


def mean_reverting_family(mean=0.0, sigma=1.0, d: int = 1) -> GuideFamily:
    """theta -> dX~ = theta (mean - X~) dt + sigma~ dW, theta a scalar rate."""
    s = _square(sigma, d, "sigma")
    m = _vector(mean, d, "mean")

    def family(theta: np.ndarray) -> LinearGuide:
        rate = float(theta[0])
        return LinearGuide.constant_coefficients(-rate * np.eye(d), rate * m, s, theta=theta, name="mean-reverting")
    return family


def fixed_family(B=0.0, beta=0.0, sigma=1.0, d: int = 1) -> GuideFamily:
    """A single linear guide; theta is ignored."""
    guide = ou_guide(B, beta, sigma, d, name="linear")
    return lambda theta: guide


GUIDE_FAMILIES: Dict[str, Callable[..., GuideFamily]] = {
    "constant-drift": constant_drift_family,
    "mean-reverting": mean_reverting_family,
    "linear": fixed_family,
}


def get_guide_family(name: str, params: Dict) -> GuideFamily:
    builder = GUIDE_FAMILIES.get(name)
    if builder is None:
        raise ArgumentError(f"unknown guide family '{name}', choose from {sorted(GUIDE_FAMILIES)}")
    try:
        return builder(**params)
    except TypeError as e:
        raise ArgumentError(f"bad parameters for guide family '{name}': {e}") from e


# ==============================================================================
# CLOSED FORMS
# ==============================================================================

def ou_log_transition(rate: float, mean: float, sigma: float, s: float, x, t: float, y) -> np.ndarray:
    """
    log p(s, x; t, y) of the scalar OU process dX = rate (mean - X) dt + sigma dW.
    rate = 0 gives Brownian motion.
    """
    dt = t - s
    if dt <= 0:
        raise ArgumentError(f"need s < t, got s={s}, t={t}")
    x = np.asarray(x, dtype=float)
    if rate == 0.0:
        return stats.norm.logpdf(y, loc=x, scale=sigma * np.sqrt(dt))
    decay = np.exp(-rate * dt)
    var = sigma ** 2 * -np.expm1(-2 * rate * dt) / (2 * rate)
    return stats.norm.logpdf(y, loc=mean + (x - mean) * decay, scale=np.sqrt(var))


def linear_counterpart(name: str, params: Dict) -> Optional[LinearGuide]:
    """The linear SDE behind a zoo model, when there is one (closed-form p)."""
    if name == "bm-drift":
        return bm_drift_guide(**params)
    if name == "ou":
        return ou_guide(**params)
    return None
