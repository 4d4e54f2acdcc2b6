import math

import numpy as np
import pytest

from bridgesim.core.errors import NumericalError
from bridgesim.core.rng import RngSpec
from bridgesim.engines.guided import (
    G_functional, PathTerms, TransitionEstimate, estimate_transition_density, evaluate_log_psi,
    guided_drift, log_likelihood_ratio, log_mean_exp_with_se, simulate_guided_bridge,
    simulate_guided_bridges,
)
from bridgesim.guide.cache import build_guide_cache
from bridgesim.models.zoo import bm_drift_guide, bm_drift_model, ou_log_transition
from bridgesim.samplers.importance import effective_sample_size, importance_ensemble
from bridgesim.sde.grid import make_bridge_grid
from bridgesim.sde.integrator import coarsen_increments, sample_brownian_increments
from bridgesim.sde.models import BridgeSpec, DiffusionModel
from bridgesim.workers.batch import BatchRunner


class TestGuidedDrift:
    def test_sine_example_closed_form(self, sine, sine_spec, sine_family, grid):
        theta = 1.36
        cache = build_guide_cache(sine_family(np.array([theta])), sine_spec, grid)
        k = 40
        s = float(grid.nodes[k])
        xs = np.array([[-0.3], [0.2], [1.1]])
        expected = sine.drift(s, xs) + (math.pi / 2 - xs) / (1.0 - s) - theta
        np.testing.assert_allclose(guided_drift(sine, cache, k, xs), expected, rtol=1e-10, atol=1e-10)

    def test_zero_at_pulled_endpoint(self, brownian, ou_spec, grid):
        cache = build_guide_cache(bm_drift_guide(0.0, 1.0), ou_spec, grid)
        np.testing.assert_allclose(guided_drift(brownian, cache, 17, cache.vpull[17]), 0.0, atol=1e-12)


class TestGFunctional:
    def test_sine_example_at_origin(self, sine, sine_spec, sine_family, grid):
        cache = build_guide_cache(sine_family(np.array([0.0])), sine_spec, grid)
        value = G_functional(sine, sine_family(np.array([0.0])), cache, 0, np.array([0.0]))
        assert value == pytest.approx(4 * math.pi, rel=1e-10)

    def test_vanishes_for_exact_guide(self, ou, ou_spec, grid):
        model, guide = ou
        cache = build_guide_cache(guide, ou_spec, grid)
        xs = np.linspace(-2, 2, 9)[:, None]
        np.testing.assert_array_equal(G_functional(model, guide, cache, 200, xs), 0.0)


class TestGuidedBridges:
    def test_exact_guide_has_zero_log_psi(self, ou, ou_spec, grid, rng):
        model, guide = ou
        cache = build_guide_cache(guide, ou_spec, grid)
        batch = simulate_guided_bridges(model, guide, cache, 1000, rng)
        assert np.all(batch.log_psi == 0.0)
        assert not batch.endpoint_mismatch

    def test_paths_pinned_to_endpoint(self, sine, sine_spec, sine_family, grid, rng):
        cache = build_guide_cache(sine_family(np.array([1.36])), sine_spec, grid)
        batch = simulate_guided_bridges(sine, sine_family(np.array([1.36])), cache, 200, rng)
        assert np.all(batch.states[:, -1, 0] == sine_spec.v[0])
        assert np.all(batch.states[:, 0, 0] == sine_spec.u[0])
        assert np.all(np.isfinite(batch.log_psi))

    def test_weight_mean_identity(self, ou, ou_spec, grid, rng):
        model, _ = ou
        guide = bm_drift_guide(0.0, 1.0)
        cache = build_guide_cache(guide, ou_spec, grid)
        batch = simulate_guided_bridges(model, guide, cache, 10_000, rng)
        log_p = float(ou_log_transition(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0))
        log_mean, se = log_mean_exp_with_se(batch.log_weights)
        ratio = math.exp(log_mean - log_p)
        assert abs(ratio - 1.0) < 3 * se / math.exp(log_p)

    def test_likelihood_ratio_shifts_by_log_p(self, ou, ou_spec, coarse_grid, rng):
        model, _ = ou
        guide = bm_drift_guide(0.0, 1.0)
        cache = build_guide_cache(guide, ou_spec, coarse_grid)
        batch = simulate_guided_bridges(model, guide, cache, 20, rng)
        np.testing.assert_allclose(log_likelihood_ratio(batch, -1.5), batch.log_weights + 1.5)

    def test_drift_in_family_gives_full_ess(self, sine_spec, sine_family, grid, rng):
        model = bm_drift_model(beta1=2.0, sigma=0.5)
        guide = sine_family(np.array([2.0]))
        cache = build_guide_cache(guide, sine_spec, grid)
        ensemble = importance_ensemble(model, guide, cache, 500, rng)
        assert effective_sample_size(ensemble) == pytest.approx(500.0)

    def test_drift_in_family_gives_brownian_bridge_marginal(self, sine_spec, sine_family, grid, rng):
        model = bm_drift_model(beta1=2.0, sigma=0.5)
        guide = sine_family(np.array([2.0]))
        cache = build_guide_cache(guide, sine_spec, grid)
        n = 10_000
        batch = simulate_guided_bridges(model, guide, cache, n, rng)
        np.testing.assert_allclose(batch.log_psi, 0.0, atol=1e-10)
        k = grid.nearest(0.5)
        t = float(grid.nodes[k])
        xs = batch.states[:, k, 0]
        mean = sine_spec.u[0] + (sine_spec.v[0] - sine_spec.u[0]) * t
        var = 0.25 * t * (1.0 - t)
        assert abs(xs.mean() - mean) < 3 * math.sqrt(var / n)
        assert abs(xs.var(ddof=1) - var) < 3 * var * math.sqrt(2.0 / (n - 1))

    def test_mismatched_diffusion_is_flagged(self, sine, sine_spec, grid, rng):
        guide = bm_drift_guide(0.0, 1.0)
        cache = build_guide_cache(guide, sine_spec, grid)
        assert simulate_guided_bridges(sine, guide, cache, 5, rng).endpoint_mismatch

    def test_reproducible_and_thread_independent(self, sine, sine_spec, sine_family, coarse_grid, rng):
        guide = sine_family(np.array([1.0]))
        cache = build_guide_cache(guide, sine_spec, coarse_grid)

        def simulate(n, child):
            return simulate_guided_bridges(sine, guide, cache, n, child)

        one = BatchRunner(threads=1, chunk_size=50).run(simulate, 230, rng)
        three = BatchRunner(threads=3, chunk_size=50).run(simulate, 230, rng)
        np.testing.assert_array_equal(one.states, three.states)
        np.testing.assert_array_equal(one.log_psi, three.log_psi)

    def test_single_bridge(self, sine, sine_spec, sine_family, coarse_grid, rng):
        guide = sine_family(np.array([1.36]))
        cache = build_guide_cache(guide, sine_spec, coarse_grid)
        weighted = simulate_guided_bridge(sine, guide, cache, rng)
        assert weighted.path.states.shape == (101, 1)
        assert weighted.log_weight == pytest.approx(weighted.log_ptilde0 + weighted.log_psi)

    def test_grid_refinement_halves_the_error(self, sine, sine_spec, sine_family, rng):
        guide = sine_family(np.array([1.36]))
        sizes = (100, 200, 400, 800)
        finest = make_bridge_grid(1.0, sizes[-1])
        dW = sample_brownian_increments(finest, 1, rng, n_paths=1000)
        log_psi = []
        for N in sizes:
            grid = make_bridge_grid(1.0, N)
            cache = build_guide_cache(guide, sine_spec, grid)
            increments = coarsen_increments(dW, sizes[-1] // N)
            log_psi.append(simulate_guided_bridges(sine, guide, cache, 1000, rng, increments).log_psi)
        diffs = [np.mean(np.abs(fine - coarse)) for coarse, fine in zip(log_psi, log_psi[1:])]
        ratios = np.array(diffs[:-1]) / np.array(diffs[1:])
        assert np.all(np.abs(ratios - 2.0) <= 0.4), ratios

    def test_reweighting_matches_simulation(self, sine, sine_spec, sine_family, coarse_grid, rng):
        guide = sine_family(np.array([0.7]))
        cache = build_guide_cache(guide, sine_spec, coarse_grid)
        batch = simulate_guided_bridges(sine, guide, cache, 50, rng)
        log_psi = evaluate_log_psi(guide, cache, PathTerms.from_batch(sine, batch))
        np.testing.assert_allclose(log_psi, batch.log_psi, rtol=1e-9, atol=1e-9)

    def test_non_finite_drift_raises(self, ou_spec, coarse_grid, rng):
        model = DiffusionModel(
            d=1, dW=1,
            drift=lambda t, xs: np.log(xs - 10.0),
            dispersion=lambda t, xs: np.ones((xs.shape[0], 1, 1)),
        )
        guide = bm_drift_guide(0.0, 1.0)
        cache = build_guide_cache(guide, ou_spec, coarse_grid)
        with np.errstate(invalid="ignore"), pytest.raises(NumericalError):
            simulate_guided_bridges(model, guide, cache, 3, rng)


class TestTransitionDensityEstimate:
    def test_exact_guide_recovers_closed_form(self, ou, ou_spec, coarse_grid, rng):
        model, guide = ou
        estimate = estimate_transition_density(model, guide, build_guide_cache(guide, ou_spec, coarse_grid), 50, rng)
        log_p = float(ou_log_transition(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0))
        assert estimate.log_p == pytest.approx(log_p, abs=1e-8)
        assert estimate.std_err == pytest.approx(0.0, abs=1e-12)
        assert len(estimate.batch) == 50

    def test_brownian_guide_within_three_standard_errors(self, ou, ou_spec, grid, rng):
        model, _ = ou
        guide = bm_drift_guide(0.0, 1.0)
        estimate = estimate_transition_density(model, guide, build_guide_cache(guide, ou_spec, grid), 10_000, rng)
        log_p = float(ou_log_transition(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0))
        assert abs(math.exp(estimate.log_p) - math.exp(log_p)) < 3 * estimate.std_err
        assert 0.0 < estimate.relative_std_err < 0.05

    def test_runner_matches_chunked_simulation(self, sine, sine_spec, sine_family, coarse_grid, rng):
        guide = sine_family(np.array([1.0]))
        cache = build_guide_cache(guide, sine_spec, coarse_grid)
        runner = BatchRunner(threads=2, chunk_size=40)
        estimate = estimate_transition_density(sine, guide, cache, 100, rng, runner=runner)
        batch = runner.run(lambda n, child: simulate_guided_bridges(sine, guide, cache, n, child), 100, rng)
        direct = TransitionEstimate.from_batch(batch)
        assert (estimate.log_p, estimate.std_err) == (direct.log_p, direct.std_err)
        np.testing.assert_array_equal(estimate.batch.log_psi, batch.log_psi)
