"""
Subcommand pipelines. Each takes a RunContext, writes its tables through the
context's artifacts and returns the summary document.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
import pandas as pd

from bridgesim.cli.artifacts import RunArtifacts, paths_frame, weights_frame
from bridgesim.cli.config import ExperimentConfig
from bridgesim.core.constants import SINE_EXAMPLE
from bridgesim.core.errors import ConfigError
from bridgesim.core.logger import log_event
from bridgesim.core.rng import RngSpec
from bridgesim.engines.guided import BridgeBatch, TransitionEstimate
from bridgesim.engines.registry import get_proposal
from bridgesim.guide.cache import build_guide_cache
from bridgesim.guide.linear import LinearGuide, guide_log_density
from bridgesim.models.zoo import (
    constant_drift_family, get_guide_family, get_model, linear_counterpart, sine_drift_model,
)
from bridgesim.monitoring.invariants import run_invariant_suite
from bridgesim.oracle.distance import marginal_distance, self_distance_baseline
from bridgesim.oracle.rejection import rejection_bridge_sample
from bridgesim.samplers.importance import WeightedEnsemble, effective_sample_size, importance_ensemble
from bridgesim.samplers.mh import run_chain
from bridgesim.sde.grid import make_bridge_grid, uniform_grid
from bridgesim.sde.integrator import euler_maruyama_batch
from bridgesim.sde.models import BridgeSpec, DiffusionModel, PathBatch
from bridgesim.tuning.kl import kl_scan
from bridgesim.tuning.tuner import TunerConfig, decay_harmonic, decay_inverse_linear, run_tuner
from bridgesim.workers.batch import BatchRunner

logger = logging.getLogger("bridgesim.cli.pipelines")

# One random stream per subcommand; children split it further.
STREAMS = {
    "forward": 1, "bridge": 2, "mh": 3, "is": 4, "tune-theta": 5,
    "kl-scan": 6, "sine-figure": 7, "validate": 8,
}

HISTOGRAM_BINS = 40


@dataclass
class RunContext:
    command: str
    cfg: ExperimentConfig
    seed: int
    threads: int
    artifacts: RunArtifacts

    @property
    def rng(self) -> RngSpec:
        return RngSpec(self.seed, STREAMS[self.command])

    @property
    def runner(self) -> BatchRunner:
        return BatchRunner(threads=self.threads)

    def model(self) -> DiffusionModel:
        return get_model(self.cfg.model.name, self.cfg.model.params)

    def spec(self) -> BridgeSpec:
        b = self.cfg.bridge
        return BridgeSpec(np.array(b.u), np.array(b.v), b.T)

    def family(self):
        if self.cfg.guide is None:
            raise ConfigError([f"guide: required by '{self.command}'"])
        return get_guide_family(self.cfg.guide.family, self.cfg.guide.params)

    def guide(self) -> LinearGuide:
        return self.family()(np.asarray(self.cfg.guide.theta, dtype=float))


def _weights_table(batch: BridgeBatch) -> pd.DataFrame:
    ensemble = WeightedEnsemble.from_batch(batch)
    return weights_frame(batch.log_psi, batch.log_ptilde0, ensemble.normalized_weights())


def run_forward(ctx: RunContext) -> Dict:
    """Unconditioned Euler-Maruyama paths from u on a uniform grid."""
    model, spec = ctx.model(), ctx.spec()
    grid = uniform_grid(spec.T, ctx.cfg.grid.N)
    n = ctx.cfg.sampler.n_paths
    batch = ctx.runner.run(lambda m, child: euler_maruyama_batch(model, spec.u, grid, m, child), n, ctx.rng)
    ctx.artifacts.write_table("paths.csv", paths_frame(batch))
    end = batch.states[:, -1, :]
    return {
        "n_paths": n,
        "terminal_mean": end.mean(axis=0),
        "terminal_var": end.var(axis=0, ddof=1) if n > 1 else np.full(model.d, np.nan),
    }


def run_bridge(ctx: RunContext) -> Dict:
    """Bridge proposals of the configured kind, with weights when guided."""
    model, spec = ctx.model(), ctx.spec()
    grid = make_bridge_grid(spec.T, ctx.cfg.grid.N)
    name = ctx.cfg.sampler.proposal
    guide = ctx.guide() if ctx.cfg.guide is not None else None
    proposal = get_proposal(name, model, spec, grid, guide)
    batch = ctx.runner.run(proposal.simulate, ctx.cfg.sampler.n_paths, ctx.rng)
    ctx.artifacts.write_table("paths.csv", paths_frame(batch))
    summary = {"proposal": name, "n_paths": len(batch)}
    if isinstance(batch, BridgeBatch):
        ctx.artifacts.write_table("weights.csv", _weights_table(batch))
        estimate = TransitionEstimate.from_batch(batch)
        summary.update({
            "ess": effective_sample_size(WeightedEnsemble.from_batch(batch)),
            "log_p_estimate": estimate.log_p,
            "p_estimate_std_err": estimate.std_err,
            "endpoint_mismatch": batch.endpoint_mismatch,
        })
    return summary


def run_mh(ctx: RunContext) -> Dict:
    """Independence Metropolis-Hastings chain of guided bridges."""
    model, spec, guide = ctx.model(), ctx.spec(), ctx.guide()
    grid = make_bridge_grid(spec.T, ctx.cfg.grid.N)
    cache = build_guide_cache(guide, spec, grid)
    s = ctx.cfg.sampler
    chain = run_chain(model, guide, cache, s.n_iters, ctx.rng, thin=s.thin, runner=ctx.runner)
    states = np.stack([p.path.states for p in chain.paths])
    ctx.artifacts.write_table("paths.csv", paths_frame(PathBatch(grid, states)))
    ctx.artifacts.write_table("trace.csv", pd.DataFrame({
        "iteration": np.arange(1, s.n_iters + 1),
        "value": chain.log_psi_trace,
        "accepted": chain.accepted.astype(int),
    }))
    return {"iterations": s.n_iters, "acceptance_rate": chain.acceptance_rate, "stored_paths": len(chain.paths)}


def run_is(ctx: RunContext) -> Dict:
    """Weighted ensemble of guided bridges."""
    model, spec, guide = ctx.model(), ctx.spec(), ctx.guide()
    grid = make_bridge_grid(spec.T, ctx.cfg.grid.N)
    cache = build_guide_cache(guide, spec, grid)
    ensemble = importance_ensemble(model, guide, cache, ctx.cfg.sampler.n_paths, ctx.rng, ctx.runner)
    batch = ensemble.batch
    ctx.artifacts.write_table("paths.csv", paths_frame(batch))
    ctx.artifacts.write_table("weights.csv", _weights_table(batch))
    mid = grid.nearest(0.5 * spec.T)
    estimate = TransitionEstimate.from_batch(batch)
    return {
        "n_paths": len(ensemble),
        "ess": effective_sample_size(ensemble),
        "midpoint_time": float(grid.nodes[mid]),
        "midpoint_weighted_mean": ensemble.weighted_mean(mid),
        "log_p_estimate": estimate.log_p,
        "p_estimate_std_err": estimate.std_err,
    }


def _tuner_config(ctx: RunContext) -> TunerConfig:
    t = ctx.cfg.tuner
    decay = decay_inverse_linear if t.decay == "inverse-linear" else decay_harmonic(t.alpha0, t.gamma)
    return TunerConfig(theta0=np.array(t.theta0), M=t.M, K=t.K, decay=decay, n_outer=t.n_outer, fd_step=t.fd_step)


def run_tune_theta(ctx: RunContext) -> Dict:
    """Stochastic-gradient tuning of the guide parameter."""
    model, spec, family = ctx.model(), ctx.spec(), ctx.family()
    grid = make_bridge_grid(spec.T, ctx.cfg.grid.N)
    result = run_tuner(model, family, spec, grid, _tuner_config(ctx), ctx.rng)
    frame = pd.DataFrame({"iteration": np.arange(result.trace.shape[0])})
    if result.trace.shape[1] == 1:
        frame["value"] = result.trace[:, 0]
    else:
        for j in range(result.trace.shape[1]):
            frame[f"value_{j + 1}"] = result.trace[:, j]
    ctx.artifacts.write_table("trace.csv", frame)
    return {
        "theta_final": result.theta,
        "theta_tail_mean": result.tail_mean(),
        "log_p_estimate": result.log_p_estimate,
        "clamped_steps": result.clamped_steps,
    }


def run_kl_scan(ctx: RunContext) -> Dict:
    """KL divergence from the true bridge over a theta grid."""
    model, spec, family = ctx.model(), ctx.spec(), ctx.family()
    grid = make_bridge_grid(spec.T, ctx.cfg.grid.N)
    k = ctx.cfg.kl_scan
    thetas = np.linspace(k.theta_min, k.theta_max, k.n_theta)
    scan = kl_scan(model, family, spec, grid, thetas, np.array(k.theta_ref), k.n_mc, ctx.rng, ctx.threads)
    ctx.artifacts.write_table("kl_scan.csv", pd.DataFrame({
        "theta": scan.thetas[:, 0],
        "kl_estimate": scan.kl,
        "std_err": scan.std_err,
        "ess": np.full(scan.kl.shape[0], scan.ess),
    }))
    return {"argmin": scan.argmin, "log_p_estimate": scan.log_p, "ess": scan.ess, "low_ess": scan.low_ess}


def _marginals_table(states: np.ndarray, grid, weights: Optional[np.ndarray], times) -> pd.DataFrame:
    n = states.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else weights
    parts = []
    for t in times:
        k = grid.nearest(t)
        parts.append(pd.DataFrame({
            "path_id": np.arange(n), "t": np.full(n, grid.nodes[k]), "x": states[:, k, 0], "weight": w,
        }))
    return pd.concat(parts, ignore_index=True)


def _histogram_table(panels: Dict, grid, times, bins: int = HISTOGRAM_BINS) -> pd.DataFrame:
    """Weighted marginal densities on bin edges shared by every panel at each time."""
    rows = []
    for t in times:
        k = grid.nearest(t)
        pooled = np.concatenate([batch.states[:, k, 0] for batch, _ in panels.values()])
        edges = np.histogram_bin_edges(pooled, bins=bins)
        for label, (batch, ensemble) in panels.items():
            weights = None if ensemble is None else ensemble.normalized_weights()
            density, _ = np.histogram(batch.states[:, k, 0], bins=edges, weights=weights, density=True)
            rows.append(pd.DataFrame({
                "panel": label, "t": grid.nodes[k],
                "bin_left": edges[:-1], "bin_right": edges[1:], "density": density,
            }))
    return pd.concat(rows, ignore_index=True)


def run_sine_figure(ctx: RunContext) -> Dict:
    """Oracle bridges against the two pulled baselines and two guided proposals."""
    cfg, o = ctx.cfg, ctx.cfg.oracle
    params = dict(cfg.model.params) if cfg.model.name == "sine-drift" else {}
    sine = {key: params.get(key, SINE_EXAMPLE[key]) for key in ("beta1", "beta2", "frequency", "sigma")}
    model = sine_drift_model(**sine)
    spec = ctx.spec()
    grid = make_bridge_grid(spec.T, cfg.grid.N)
    rng, runner = ctx.rng, ctx.runner

    oracle = rejection_bridge_sample(
        model, spec, grid, o.n_target, o.max_forward, rng.child(0),
        epsilon=o.epsilon, batch_size=o.batch_size, runner=runner,
    )
    family = constant_drift_family(sigma=sine["sigma"])
    panels = {"oracle": (oracle.paths, None)}
    for i, name in enumerate(("delyon-hu", "delyon-hu-nodrift")):
        proposal = get_proposal(name, model, spec, grid)
        panels[name] = (runner.run(proposal.simulate, o.n_paths, rng.child(1 + i)), None)
    for i, (label, theta) in enumerate((("guided-theta0", 0.0), ("guided-tuned", o.theta_tuned))):
        guide = family(np.array([theta]))
        cache = build_guide_cache(guide, spec, grid)
        ensemble = importance_ensemble(model, guide, cache, o.n_paths, rng.child(3 + i), runner)
        panels[label] = (ensemble.batch, ensemble)

    distances = {}
    for label, (batch, ensemble) in panels.items():
        weights = None if ensemble is None else ensemble.normalized_weights()
        ctx.artifacts.write_table(f"marginals_{label}.csv", _marginals_table(batch.states, grid, weights, o.times))
        if label != "oracle":
            distances[label] = {
                str(t): marginal_distance(ensemble if ensemble is not None else batch, oracle.paths, t)
                for t in o.times
            }
    ctx.artifacts.write_table("marginal_histograms.csv", _histogram_table(panels, grid, o.times))
    baseline = {str(t): self_distance_baseline(oracle.paths, t, rng.child(5)) for t in o.times}
    return {
        "oracle_kept": len(oracle.paths),
        "oracle_acceptance_fraction": oracle.acceptance_fraction,
        "oracle_epsilon": oracle.epsilon,
        "oracle_complete": oracle.complete,
        "w1_to_oracle": distances,
        "oracle_self_distance": baseline,
    }


def run_validate(ctx: RunContext) -> Dict:
    """Invariant suite for the configured model and guide."""
    model, spec, guide = ctx.model(), ctx.spec(), ctx.guide()
    grid = make_bridge_grid(spec.T, ctx.cfg.grid.N)
    linear = linear_counterpart(ctx.cfg.model.name, ctx.cfg.model.params)
    log_p = guide_log_density(linear, spec, 0.0, spec.u) if linear is not None else None
    report = run_invariant_suite(model, guide, spec, grid, ctx.rng, ctx.cfg.validate_.n_paths, log_p)
    ctx.artifacts.write_table("validation.csv", pd.DataFrame(report.rows()))
    return {"passed": report.passed, "failures": report.failures}


PIPELINES: Dict[str, Callable[[RunContext], Dict]] = {
    "forward": run_forward,
    "bridge": run_bridge,
    "mh": run_mh,
    "is": run_is,
    "tune-theta": run_tune_theta,
    "kl-scan": run_kl_scan,
    "sine-figure": run_sine_figure,
    "validate": run_validate,
}


def run_pipeline(ctx: RunContext) -> Dict:
    log_event(logger, "pipeline_started", {"command": ctx.command, "seed": ctx.seed, "threads": ctx.threads})
    summary = PIPELINES[ctx.command](ctx)
    ctx.artifacts.write_json("summary.json", summary)
    log_event(logger, "pipeline_finished", {"command": ctx.command})
    return summary
