import math

import numpy as np
import pytest

from bridgesim.core.rng import RngSpec
from bridgesim.models.zoo import (
    bm_drift_model, constant_drift_family, ou_guide, ou_model, sine_drift_model,
)
from bridgesim.sde.grid import make_bridge_grid
from bridgesim.sde.models import BridgeSpec, DiffusionModel


def zero_model(d: int = 1, drift: float = 0.0) -> DiffusionModel:
    """Deterministic model: constant drift, no noise."""
    return DiffusionModel(
        d=d, dW=d,
        drift=lambda t, xs: np.full_like(xs, drift),
        dispersion=lambda t, xs: np.zeros((xs.shape[0], d, d)),
        name="deterministic",
    )


@pytest.fixture
def rng():
    return RngSpec(20240611)


@pytest.fixture
def ou():
    """dX = -X dt + dW and its own linear guide."""
    return ou_model(B=-1.0, beta=0.0, sigma=1.0), ou_guide(B=-1.0, beta=0.0, sigma=1.0)


@pytest.fixture
def ou_spec():
    return BridgeSpec(np.array([1.0]), np.array([0.0]), 1.0)


@pytest.fixture
def sine():
    return sine_drift_model(beta1=2.0, beta2=2.0, frequency=8.0, sigma=0.5)


@pytest.fixture
def sine_spec():
    return BridgeSpec(np.array([0.0]), np.array([math.pi / 2]), 1.0)


@pytest.fixture
def sine_family():
    return constant_drift_family(sigma=0.5)


@pytest.fixture
def brownian():
    return bm_drift_model(beta1=0.0, sigma=1.0)


@pytest.fixture
def grid():
    return make_bridge_grid(1.0, 400)


@pytest.fixture
def coarse_grid():
    return make_bridge_grid(1.0, 100)


@pytest.fixture
def deterministic():
    return zero_model
