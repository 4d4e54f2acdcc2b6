import math

import numpy as np
import pytest

from bridgesim.core.errors import ArgumentError
from bridgesim.models.zoo import (
    MODEL_ZOO, fixed_family, get_guide_family, get_model, linear_counterpart, mean_reverting_family,
    ou_log_transition, polynomial_model,
)


class TestModelZoo:
    def test_registry_names(self):
        assert set(MODEL_ZOO) == {"bm-drift", "ou", "sine-drift", "user-polynomial"}

    def test_sine_drift(self):
        model = get_model("sine-drift", {})
        xs = np.array([[0.0], [math.pi / 16]])
        np.testing.assert_allclose(model.drift(0.0, xs), [[2.0], [0.0]], atol=1e-12)
        np.testing.assert_allclose(model.a(0.0, np.zeros(1)), [[0.25]])

    def test_polynomial(self):
        model = polynomial_model([1.0, 0.0, -2.0], sigma=0.3)
        np.testing.assert_allclose(model.drift(0.0, np.array([[2.0]])), [[-7.0]])
        with pytest.raises(ArgumentError):
            polynomial_model([])

    def test_ou_matrix_parameters(self):
        model = get_model("ou", {"B": [[-1.0, 0.0], [0.5, -2.0]], "beta": 0.0, "sigma": 1.0, "d": 2})
        np.testing.assert_allclose(model.drift(0.0, np.array([[1.0, 1.0]])), [[-1.0, -1.5]])

    def test_unknown_and_bad_parameters(self):
        with pytest.raises(ArgumentError):
            get_model("heston", {})
        with pytest.raises(ArgumentError):
            get_model("ou", {"kappa": 1.0})
        with pytest.raises(ArgumentError):
            get_model("ou", {"B": [[1.0, 0.0]], "d": 2})


class TestGuideFamilies:
    def test_constant_drift(self, sine_family):
        guide = sine_family(np.array([1.36]))
        np.testing.assert_allclose(guide.beta(0.3), [1.36])
        np.testing.assert_allclose(guide.a(0.0), [[0.25]])
        assert guide.constant

    def test_mean_reverting(self):
        guide = mean_reverting_family(mean=2.0, sigma=1.0)(np.array([0.5]))
        np.testing.assert_allclose(guide.drift(0.0, np.array([2.0])), [0.0])
        np.testing.assert_allclose(guide.drift(0.0, np.array([0.0])), [1.0])

    def test_fixed_family_ignores_theta(self):
        family = fixed_family(B=-1.0, sigma=1.0)
        assert family(np.array([0.0])) is family(np.array([5.0]))

    def test_unknown_family(self):
        with pytest.raises(ArgumentError):
            get_guide_family("quadratic", {})


class TestClosedForms:
    def test_brownian_transition(self):
        value = ou_log_transition(0.0, 0.0, 2.0, 0.0, 1.0, 4.0, 1.0)
        assert value == pytest.approx(-0.5 * math.log(2 * math.pi * 16.0))

    def test_needs_forward_time(self):
        with pytest.raises(ArgumentError):
            ou_log_transition(1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0)

    def test_linear_counterpart(self):
        guide = linear_counterpart("ou", {"B": -2.0, "sigma": 0.5})
        np.testing.assert_allclose(guide.B(0.0), [[-2.0]])
        assert linear_counterpart("sine-drift", {}) is None
