import math

import numpy as np
import pytest

from bridgesim.core.errors import ArgumentError
from bridgesim.core.rng import RngSpec
from bridgesim.engines.guided import PathTerms, estimate_transition_density
from bridgesim.guide.cache import build_guide_cache
from bridgesim.models.zoo import bm_drift_model
from bridgesim.sde.grid import make_bridge_grid
from bridgesim.tuning.kl import kl_scan
from bridgesim.tuning.tuner import (
    TunerConfig, TunerResult, TuningProblem, decay_harmonic, decay_inverse_linear, fd_gradient, run_tuner,
    theta_gradient_step,
)


class TestDecay:
    def test_inverse_linear_schedule(self):
        assert decay_inverse_linear(1, 1) == pytest.approx(1 / 12)
        assert decay_inverse_linear(10, 3) == pytest.approx(1 / 30)

    def test_harmonic(self):
        decay = decay_harmonic(alpha0=0.5, gamma=10.0)
        assert decay(0, 1) == pytest.approx(0.5)
        assert decay(10, 1) == pytest.approx(0.25)


class TestFiniteDifferences:
    def test_quadratic(self):
        fn = lambda th: np.array([th[0] ** 2 + 3 * th[0] * th[1], th[1] ** 3])
        grad = fd_gradient(fn, np.array([1.0, 2.0]), 1e-4)
        np.testing.assert_allclose(grad, [[8.0, 3.0], [0.0, 12.0]], rtol=1e-6, atol=1e-8)

    def test_five_point_agrees(self):
        fn = lambda th: np.sin(th[0]) * np.arange(1.0, 4.0)
        three = fd_gradient(fn, np.array([0.3]), 1e-3)
        five = fd_gradient(fn, np.array([0.3]), 1e-3, stencil=5)
        np.testing.assert_allclose(five[:, 0], math.cos(0.3) * np.arange(1.0, 4.0), rtol=1e-10)
        np.testing.assert_allclose(three, five, rtol=1e-6)

    def test_bad_stencil(self):
        with pytest.raises(ArgumentError):
            fd_gradient(lambda th: th, np.array([0.0]), 1e-3, stencil=4)


class TestTunerConfig:
    def test_validation(self):
        with pytest.raises(ArgumentError):
            TunerConfig(theta0=[0.0], M=0)
        with pytest.raises(ArgumentError):
            TunerConfig(theta0=[0.0], n_outer=-1)

    def test_decay_must_not_grow(self):
        with pytest.raises(ArgumentError, match="nonincreasing"):
            TunerConfig(theta0=[0.0], decay=lambda n, k: 0.01 * n)
        with pytest.raises(ArgumentError, match="positive"):
            TunerConfig(theta0=[0.0], decay=lambda n, k: 0.0)
        TunerConfig(theta0=[0.0], decay=lambda n, k: 0.05)
        TunerConfig(theta0=[0.0], decay=decay_inverse_linear)

    def test_fd_step(self):
        cfg = TunerConfig(theta0=[0.0])
        np.testing.assert_allclose(cfg.step_for(np.array([1.0])), [2e-4])
        assert TunerConfig(theta0=[0.0], fd_step=0.01).step_for(np.array([5.0]))[0] == 0.01


class TestGradientStep:
    def test_reference_theta_has_unit_reweights(self, sine, sine_spec, sine_family, rng):
        grid = make_bridge_grid(1.0, 100)
        problem = TuningProblem(sine, sine_family, sine_spec, grid)
        theta = np.array([0.8])
        batch = problem.sample(theta, 20, rng)
        terms = PathTerms.from_batch(sine, batch)
        step = theta_gradient_step(problem, theta, theta, batch, terms, TunerConfig(theta0=theta), 0.0)
        np.testing.assert_array_equal(step.measure_change, 1.0)
        assert not step.clamped
        assert np.all(np.isfinite(step.theta))

    def test_h_is_log_weight_at_reference(self, sine, sine_spec, sine_family, rng):
        grid = make_bridge_grid(1.0, 100)
        problem = TuningProblem(sine, sine_family, sine_spec, grid)
        batch = problem.sample([1.2], 30, rng)
        h = problem.h([1.2], PathTerms.from_batch(sine, batch))
        np.testing.assert_allclose(h, batch.log_weights, rtol=1e-9, atol=1e-9)


class TestRunTuner:
    def test_zero_iterations(self, sine, sine_spec, sine_family, rng):
        cfg = TunerConfig(theta0=[0.3], n_outer=0)
        result = run_tuner(sine, sine_family, sine_spec, make_bridge_grid(1.0, 50), cfg, rng)
        np.testing.assert_array_equal(result.trace, [[0.3]])
        assert math.isnan(result.log_p_estimate)

    def test_reproducible(self, sine, sine_spec, sine_family):
        grid = make_bridge_grid(1.0, 50)
        cfg = TunerConfig(theta0=[0.0], M=2, K=2, decay=decay_inverse_linear, n_outer=5)
        a = run_tuner(sine, sine_family, sine_spec, grid, cfg, RngSpec(4))
        b = run_tuner(sine, sine_family, sine_spec, grid, cfg, RngSpec(4))
        np.testing.assert_array_equal(a.trace, b.trace)
        assert a.trace.shape == (6, 1)

    def test_tail_mean(self):
        result = TunerResult(trace=np.arange(10.0)[:, None], log_p_estimate=0.0, clamped_steps=0)
        np.testing.assert_allclose(result.tail_mean(0.5), [7.0])
        np.testing.assert_allclose(result.theta, [9.0])

    @pytest.mark.slow
    def test_recovers_brownian_drift(self, sine_spec, sine_family, grid, rng):
        model = bm_drift_model(beta1=2.0, sigma=0.5)
        cfg = TunerConfig(theta0=[0.0], decay=decay_inverse_linear, n_outer=2000)
        result = run_tuner(model, sine_family, sine_spec, grid, cfg, rng)
        assert abs(result.tail_mean()[0] - 2.0) < 0.1

    @pytest.mark.slow
    def test_sine_example(self, sine, sine_spec, sine_family, grid, rng):
        cfg = TunerConfig(theta0=[0.0], decay=decay_inverse_linear, n_outer=1000)
        result = run_tuner(sine, sine_family, sine_spec, grid, cfg, rng)
        assert 1.0 <= result.tail_mean()[0] <= 1.8


class TestKLScan:
    def test_zero_at_target_in_family(self, sine_spec, sine_family, rng):
        model = bm_drift_model(beta1=2.0, sigma=0.5)
        grid = make_bridge_grid(1.0, 100)
        scan = kl_scan(model, sine_family, sine_spec, grid, [1.0, 2.0, 3.0], [2.0], 500, rng)
        assert abs(scan.kl[1]) < 1e-8
        assert scan.kl[0] > -3 * scan.std_err[0]
        assert scan.kl[2] > -3 * scan.std_err[2]
        assert scan.ess == pytest.approx(500.0)
        assert not scan.low_ess

    def test_threads_do_not_change_result(self, sine, sine_spec, sine_family, rng):
        grid = make_bridge_grid(1.0, 50)
        thetas = np.linspace(0.0, 2.0, 5)
        one = kl_scan(sine, sine_family, sine_spec, grid, thetas, [1.36], 100, rng, threads=1)
        four = kl_scan(sine, sine_family, sine_spec, grid, thetas, [1.36], 100, rng, threads=4)
        np.testing.assert_array_equal(one.kl, four.kl)
        assert one.thetas.shape == (5, 1)

    def test_constant_is_transition_density_estimate(self, sine, sine_spec, sine_family, rng):
        grid = make_bridge_grid(1.0, 50)
        scan = kl_scan(sine, sine_family, sine_spec, grid, [0.5, 1.5], [1.0], 200, rng)
        guide = sine_family(np.array([1.0]))
        estimate = estimate_transition_density(sine, guide, build_guide_cache(guide, sine_spec, grid), 200, rng)
        assert scan.log_p == estimate.log_p

    def test_needs_two_samples(self, sine, sine_spec, sine_family, rng):
        with pytest.raises(ArgumentError):
            kl_scan(sine, sine_family, sine_spec, make_bridge_grid(1.0, 50), [0.0], [0.0], 1, rng)

    @pytest.mark.slow
    def test_sine_scan_minimum(self, sine, sine_spec, sine_family, grid, rng):
        thetas = np.linspace(-1.0, 4.0, 26)
        scan = kl_scan(sine, sine_family, sine_spec, grid, thetas, [1.36], 10_000, rng, threads=4)
        assert 1.0 <= scan.argmin[0] <= 1.8
        assert scan.kl[0] > scan.kl.min() and scan.kl[-1] > scan.kl.min()

    @pytest.mark.slow
    def test_minimum_does_not_depend_on_reference(self, sine, sine_spec, sine_family, grid, rng):
        thetas = np.linspace(0.6, 2.2, 17)
        near = kl_scan(sine, sine_family, sine_spec, grid, thetas, [1.36], 4000, rng.child(0), threads=4)
        far = kl_scan(sine, sine_family, sine_spec, grid, thetas, [0.8], 4000, rng.child(1), threads=4)
        assert not near.low_ess and not far.low_ess
        assert abs(near.argmin[0] - far.argmin[0]) <= 0.2 + 1e-9
