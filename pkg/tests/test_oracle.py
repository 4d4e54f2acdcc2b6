import math

import numpy as np
import pytest
from scipy import stats

from bridgesim.core.errors import ArgumentError, OracleInfeasibleError
from bridgesim.core.rng import RngSpec
from bridgesim.engines.baselines import delyon_hu_full_batch, exact_linear_bridge_batch
from bridgesim.guide.cache import build_guide_cache
from bridgesim.models.zoo import bm_drift_guide, bm_drift_model, ou_log_transition
from bridgesim.oracle.density import transition_density_estimate
from bridgesim.oracle.distance import marginal_distance, self_distance_baseline, wasserstein_1
from bridgesim.oracle.modality import count_modes, silverman_test
from bridgesim.oracle.rejection import default_epsilon, rejection_bridge_sample
from bridgesim.samplers.importance import importance_ensemble
from bridgesim.sde.grid import make_bridge_grid
from bridgesim.sde.models import BridgeSpec, PathBatch

ORIGIN = BridgeSpec(np.array([0.0]), np.array([0.0]), 1.0)


class TestRejectionOracle:
    def test_brownian_bridge_midpoint(self, brownian, coarse_grid, rng):
        result = rejection_bridge_sample(brownian, ORIGIN, coarse_grid, 2000, 1_000_000, rng, epsilon=0.05)
        assert result.complete
        assert len(result.paths) == 2000
        k = coarse_grid.nearest(0.5)
        t = float(coarse_grid.nodes[k])
        xs = result.paths.marginal(k)[:, 0]
        target_var = t * (1 - t)
        assert abs(xs.mean()) < 3 * math.sqrt(target_var / 2000)
        assert abs(xs.var(ddof=1) - target_var) < 3 * target_var * math.sqrt(2.0 / 2000)
        assert 0.0 < result.acceptance_fraction < 0.1

    def test_wide_window_keeps_everything(self, brownian, coarse_grid, rng):
        result = rejection_bridge_sample(
            brownian, ORIGIN, coarse_grid, 500, 10_000, rng, epsilon=10.0, batch_size=500,
        )
        assert result.acceptance_fraction == 1.0
        assert result.n_forward == 500

    def test_infeasible(self, brownian, coarse_grid, rng):
        with pytest.raises(OracleInfeasibleError):
            rejection_bridge_sample(brownian, ORIGIN, coarse_grid, 10, 100, rng, epsilon=1e-12)

    def test_budget_exhausted_returns_partial(self, brownian, coarse_grid, rng):
        result = rejection_bridge_sample(brownian, ORIGIN, coarse_grid, 10_000, 2_000, rng, epsilon=0.1)
        assert not result.complete
        assert 0 < len(result.paths) < 10_000
        assert result.n_forward == 2_000

    def test_dimension_limit(self, coarse_grid, rng):
        model = bm_drift_model(d=3)
        spec = BridgeSpec(np.zeros(3), np.zeros(3), 1.0)
        with pytest.raises(ArgumentError):
            rejection_bridge_sample(model, spec, coarse_grid, 10, 100, rng)

    def test_default_epsilon(self, sine, sine_spec):
        assert default_epsilon(sine, sine_spec) == pytest.approx(0.02 * 0.5)

    def test_reproducible(self, brownian, coarse_grid):
        a = rejection_bridge_sample(brownian, ORIGIN, coarse_grid, 50, 50_000, RngSpec(2), epsilon=0.1)
        b = rejection_bridge_sample(brownian, ORIGIN, coarse_grid, 50, 50_000, RngSpec(2), epsilon=0.1)
        np.testing.assert_array_equal(a.paths.states, b.paths.states)


class TestTransitionDensity:
    @pytest.mark.slow
    def test_brownian_density(self, brownian, rng):
        est = transition_density_estimate(brownian, 0.0, [0.0], 1.0, 1_000_000, 0.05, rng, n_steps=10)
        ys = np.linspace(-2.0, 2.0, 41)
        err = np.abs(est.evaluate(ys) - stats.norm.pdf(ys))
        assert err.max() < 0.02
        assert est.integral() == pytest.approx(1.0, abs=1e-6)
        assert not est.point_mass and not est.undersized

    @pytest.mark.slow
    def test_ou_density(self, ou, rng):
        model, _ = ou
        est = transition_density_estimate(model, 0.0, [1.0], 1.0, 400_000, 0.05, rng, n_steps=50)
        ys = np.linspace(-1.0, 1.5, 26)
        exact = np.exp(ou_log_transition(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, ys))
        assert np.max(np.abs(est.evaluate(ys) - exact)) < 0.02

    def test_two_dimensional(self, rng):
        model = bm_drift_model(beta1=0.0, sigma=1.0, d=2)
        est = transition_density_estimate(model, 0.0, [0.0, 0.0], 1.0, 50_000, 0.15, rng, n_steps=10)
        assert len(est.axes) == 2
        value = est.evaluate(np.array([[0.0, 0.0]]))[0]
        assert value == pytest.approx(1 / (2 * math.pi), abs=0.02)

    def test_point_mass_flagged(self, deterministic, rng):
        est = transition_density_estimate(deterministic(drift=1.0), 0.0, [0.0], 1.0, 100, 0.1, rng, n_steps=10)
        assert est.point_mass
        np.testing.assert_allclose(est.location, [1.0])
        with pytest.raises(ArgumentError):
            est.evaluate([1.0])

    def test_undersized_flagged(self, brownian, rng):
        est = transition_density_estimate(brownian, 0.0, [0.0], 1.0, 20, 0.01, rng, n_steps=10)
        assert est.undersized

    def test_argument_checks(self, brownian, rng):
        with pytest.raises(ArgumentError):
            transition_density_estimate(brownian, 1.0, [0.0], 1.0, 100, 0.1, rng)
        with pytest.raises(ArgumentError):
            transition_density_estimate(brownian, 0.0, [0.0], 1.0, 100, 0.0, rng)


class TestDistances:
    def test_identical_samples(self):
        xs = np.random.default_rng(0).standard_normal((300, 1))
        assert wasserstein_1(xs, xs) == 0.0

    def test_shifted_diracs(self):
        assert wasserstein_1(np.zeros((5, 1)), np.ones((7, 1))) == pytest.approx(1.0)

    def test_two_dimensional_takes_max(self):
        xs = np.zeros((4, 2))
        ys = np.column_stack([np.full(4, 0.5), np.full(4, 2.0)])
        assert wasserstein_1(xs, ys) == pytest.approx(2.0)

    def test_brownian_bridge_self_distance(self, coarse_grid):
        guide = bm_drift_guide(0.0, 1.0)
        a = exact_linear_bridge_batch(guide, ORIGIN, coarse_grid, 10_000, RngSpec(1))
        b = exact_linear_bridge_batch(guide, ORIGIN, coarse_grid, 10_000, RngSpec(2))
        assert marginal_distance(a, b, 0.5) <= 0.02
        assert self_distance_baseline(a, 0.5, RngSpec(3)) <= 0.03

    def test_weighted_ensemble_against_paths(self, brownian, coarse_grid, rng):
        guide = bm_drift_guide(0.0, 1.0)
        cache = build_guide_cache(guide, ORIGIN, coarse_grid)
        ensemble = importance_ensemble(brownian, guide, cache, 2000, rng)
        other = exact_linear_bridge_batch(guide, ORIGIN, coarse_grid, 2000, rng.child(9))
        assert marginal_distance(ensemble, other, 0.5) < 0.05

    def test_node_mismatch(self, coarse_grid):
        other_grid = make_bridge_grid(1.0, 101)
        a = PathBatch(coarse_grid, np.zeros((3, 101, 1)))
        b = PathBatch(other_grid, np.zeros((3, 102, 1)))
        with pytest.raises(ArgumentError):
            marginal_distance(a, b, 0.5)

    @pytest.mark.slow
    def test_sine_oracle_agreement(self, sine, sine_spec, sine_family, grid, rng):
        oracle = rejection_bridge_sample(sine, sine_spec, grid, 2000, 20_000_000, rng.child(0), epsilon=0.02)
        assert len(oracle.paths) >= 2000
        baseline = self_distance_baseline(oracle.paths, 0.5, rng.child(1))
        distances = {}
        for i, theta in enumerate((0.0, 1.36)):
            guide = sine_family(np.array([theta]))
            cache = build_guide_cache(guide, sine_spec, grid)
            ensemble = importance_ensemble(sine, guide, cache, 10_000, rng.child(2 + i))
            distances[theta] = marginal_distance(ensemble, oracle.paths, 0.5)
        pulled = delyon_hu_full_batch(sine, sine_spec, grid, 10_000, rng.child(4))
        distances["delyon-hu"] = marginal_distance(pulled, oracle.paths, 0.5)
        assert distances[1.36] <= 2 * baseline
        assert distances[0.0] > distances[1.36]
        assert distances["delyon-hu"] > distances[1.36]

    @pytest.mark.slow
    def test_sine_oracle_marginal_is_multimodal(self, sine, sine_spec, grid, rng):
        oracle = rejection_bridge_sample(sine, sine_spec, grid, 2000, 20_000_000, rng.child(0), epsilon=0.02)
        xs = oracle.paths.marginal(grid.nearest(2 / 3))[:, 0]
        assert silverman_test(xs, rng.child(5)).multimodal(0.05)


class TestModality:
    def test_separated_mixture(self, rng):
        gen = np.random.default_rng(3)
        xs = np.concatenate([gen.normal(-2.0, 0.5, 200), gen.normal(2.0, 0.5, 200)])
        assert count_modes(xs, 0.5) == 2
        result = silverman_test(xs, rng, n_boot=100)
        assert result.multimodal(0.05)
        assert count_modes(xs, result.critical_bandwidth) == 1

    def test_gaussian_sample_is_unimodal_at_critical_bandwidth(self, rng):
        xs = np.random.default_rng(4).standard_normal(300)
        result = silverman_test(xs, rng, n_boot=50)
        assert count_modes(xs, result.critical_bandwidth) == 1
        assert 0.0 <= result.p_value <= 1.0

    def test_too_few_samples(self, rng):
        with pytest.raises(ArgumentError):
            silverman_test(np.ones(50), rng)
