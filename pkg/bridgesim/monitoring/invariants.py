"""
Invariant suite for a model/guide pair on a bridge problem. Each check returns
a CheckResult; the suite collects them into a ValidationReport.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy import integrate

from bridgesim.core.constants import ENDPOINT_MATCH_TOLERANCE, SYMMETRY_TOLERANCE
from bridgesim.core.logger import log_event
from bridgesim.core.rng import RngSpec
from bridgesim.engines.guided import (
    endpoint_mismatch, estimate_transition_density,
)
from bridgesim.guide.cache import GuideCache, build_guide_cache, guide_curvature, guide_score
from bridgesim.guide.linear import (
    LinearGuide, fundamental_matrix, guide_covariance, guide_log_density, symmetrize,
)
from bridgesim.sde.models import BridgeSpec, DiffusionModel, TimeGrid
from .diagnostics import singular_guide_log_divergence

logger = logging.getLogger("bridgesim.monitoring.invariants")

PASS, FAIL, INFO = "PASS", "FAIL", "INFO"

COMPOSITION_TOLERANCE = 1e-8
LIOUVILLE_TOLERANCE = 1e-6
FD_RELATIVE_TOLERANCE = 1e-4
BACKWARD_RESIDUAL_TOLERANCE = 1e-3
CURVATURE_GROWTH_FACTOR = 100.0
WEIGHT_IDENTITY_FLOOR = 1e-8


@dataclass(frozen=True)
class CheckResult:
    check: str
    status: str
    value: float
    threshold: float

    @classmethod
    def at_most(cls, check: str, value: float, threshold: float) -> "CheckResult":
        ok = bool(np.isfinite(value) and value <= threshold)
        return cls(check, PASS if ok else FAIL, float(value), float(threshold))


@dataclass
class ValidationReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    @property
    def failures(self) -> List[str]:
        return [c.check for c in self.checks if c.status == FAIL]

    def rows(self) -> List[dict]:
        return [
            {"check": c.check, "status": c.status, "value": c.value, "threshold": c.threshold}
            for c in self.checks
        ]


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def _interior_times(spec: BridgeSpec, gen: np.random.Generator, n: int) -> np.ndarray:
    return np.sort(gen.uniform(0.05 * spec.T, 0.95 * spec.T, size=n))


def check_phi_composition(guide: LinearGuide, spec: BridgeSpec, gen, n: int = 5) -> CheckResult:
    """Phi(t, s) Phi(s, r) = Phi(t, r) for random r < s < t."""
    worst = 0.0
    for _ in range(n):
        r, s, t = np.sort(gen.uniform(0.0, spec.T, size=3))
        lhs = fundamental_matrix(guide, t, s) @ fundamental_matrix(guide, s, r)
        worst = max(worst, _relative(lhs, fundamental_matrix(guide, t, r)))
    return CheckResult.at_most("phi_composition", worst, COMPOSITION_TOLERANCE)


def check_liouville(guide: LinearGuide, spec: BridgeSpec, gen, n: int = 5) -> CheckResult:
    """|Phi(t, s)| = exp(int_s^t tr B~(u) du)"""
    worst = 0.0
    for _ in range(n):
        s, t = np.sort(gen.uniform(0.0, spec.T, size=2))
        trace, _ = integrate.quad(lambda u: float(np.trace(guide.B(u))), s, t)
        worst = max(worst, abs(np.linalg.det(fundamental_matrix(guide, t, s)) - np.exp(trace)))
    return CheckResult.at_most("liouville", worst, LIOUVILLE_TOLERANCE)


def _fd_score(guide: LinearGuide, spec: BridgeSpec, s: float, x: np.ndarray) -> np.ndarray:
    d = x.shape[0]
    grad = np.empty(d)
    for j in range(d):
        h = 1e-4 * (1.0 + abs(x[j]))
        e = np.zeros(d)
        e[j] = h
        grad[j] = (guide_log_density(guide, spec, s, x + e) - guide_log_density(guide, spec, s, x - e)) / (2 * h)
    return grad


def _test_points(cache: GuideCache, gen, n: int):
    """Random interior nodes and states scattered around the pulled-back endpoint."""
    N = cache.N
    ks = gen.integers(1, max(2, int(0.95 * N)), size=n)
    for k in ks:
        spread = np.sqrt(np.trace(cache.Hinv[k]) / cache.d)
        yield int(k), cache.vpull[k] + spread * gen.standard_normal(cache.d)


def check_score(guide: LinearGuide, cache: GuideCache, gen, n: int = 10) -> CheckResult:
    """Cached r~ against the finite-difference gradient of R~ in x."""
    worst = 0.0
    for k, x in _test_points(cache, gen, n):
        s = float(cache.grid.nodes[k])
        worst = max(worst, _relative(_fd_score(guide, cache.spec, s, x), guide_score(cache, k, x)))
    return CheckResult.at_most("score_vs_fd", worst, FD_RELATIVE_TOLERANCE)


def check_curvature(guide: LinearGuide, cache: GuideCache, gen, n: int = 10) -> CheckResult:
    """-D r~ by finite differences against H~ = Phi(T, s)' K(s)^{-1} Phi(T, s)."""
    worst = 0.0
    spec = cache.spec
    for k, x in _test_points(cache, gen, n):
        s = float(cache.grid.nodes[k])
        d = x.shape[0]
        jac = np.empty((d, d))
        for j in range(d):
            h = 1e-4 * (1.0 + abs(x[j]))
            e = np.zeros(d)
            e[j] = h
            jac[:, j] = -(guide_score(cache, k, x + e) - guide_score(cache, k, x - e)) / (2 * h)
        phi = fundamental_matrix(guide, spec.T, s)
        H = symmetrize(phi.T @ np.linalg.solve(guide_covariance(guide, s, spec.T), phi))
        worst = max(worst, _relative(symmetrize(jac), H), _relative(guide_curvature(cache, k), H))
        if np.linalg.eigvalsh(symmetrize(jac))[0] <= 0:
            worst = np.inf
    return CheckResult.at_most("curvature_vs_fd", worst, FD_RELATIVE_TOLERANCE)


def check_backward_equation(guide: LinearGuide, spec: BridgeSpec, gen, n: int = 100) -> CheckResult:
    """
    Residual of d/ds R~ + L~ R~ + 1/2 r~' a~ r~ = 0, where L~ is the generator of
    the guide: L~ R~ = b~' r~ - 1/2 tr(a~ H~).
    """
    worst = 0.0
    d = guide.d
    for s in _interior_times(spec, gen, n):
        x = spec.v + np.sqrt(spec.T - s) * gen.standard_normal(d)
        ds = 1e-5 * spec.T
        dR = (guide_log_density(guide, spec, s + ds, x) - guide_log_density(guide, spec, s - ds, x)) / (2 * ds)
        r = _fd_score(guide, spec, s, x)
        jac = np.empty((d, d))
        for j in range(d):
            h = 1e-4 * (1.0 + abs(x[j]))
            e = np.zeros(d)
            e[j] = h
            jac[:, j] = -(_fd_score(guide, spec, s, x + e) - _fd_score(guide, spec, s, x - e)) / (2 * h)
        a = guide.a(s)
        generator = guide.drift(s, x) @ r - 0.5 * np.trace(a @ symmetrize(jac))
        worst = max(worst, abs(dR + generator + 0.5 * r @ a @ r))
    return CheckResult.at_most("backward_equation_residual", worst, BACKWARD_RESIDUAL_TOLERANCE)


def check_curvature_growth(guide: LinearGuide, cache: GuideCache) -> CheckResult:
    """(T - s) ||H~(s)|| over all nodes, against a multiple of ||a~(T)^{-1}||."""
    T = cache.spec.T
    worst = max(
        (T - float(cache.grid.nodes[k])) * float(np.linalg.norm(guide_curvature(cache, k), 2))
        for k in range(cache.N)
    )
    bound = CURVATURE_GROWTH_FACTOR * float(np.linalg.norm(np.linalg.inv(guide.a(T)), 2)) * max(1.0, T)
    return CheckResult.at_most("curvature_growth", worst, bound)


def run_invariant_suite(
    model: DiffusionModel,
    guide: LinearGuide,
    spec: BridgeSpec,
    grid: TimeGrid,
    rng: RngSpec,
    n_paths: int = 1000,
    log_p: Optional[float] = None,
) -> ValidationReport:
    """
    log_p, when known (linear targets), adds the weight-mean identity
    E[p~(0, u) psi(T)] = p(0, u; T, v) at 3 standard errors.
    """
    gen = rng.child(0).generator()
    cache = build_guide_cache(guide, spec, grid)
    report = ValidationReport()
    add = report.checks.append

    add(check_phi_composition(guide, spec, gen))
    add(check_liouville(guide, spec, gen))
    add(check_score(guide, cache, gen))
    add(check_curvature(guide, cache, gen))
    add(check_backward_equation(guide, spec, gen))
    add(check_curvature_growth(guide, cache))

    estimate = estimate_transition_density(model, guide, cache, n_paths, rng.child(1))
    batch = estimate.batch
    add(CheckResult.at_most("endpoint_pinning", float(np.max(np.abs(batch.states[:, -1, :] - spec.v))), 0.0))
    asym = 0.0
    for k in range(0, grid.N, max(1, grid.N // 20)):
        a = model.diffusion_matrix(float(grid.nodes[k]), batch.states[:, k, :])
        asym = max(asym, float(np.max(np.abs(a - np.swapaxes(a, -1, -2)))))
    add(CheckResult.at_most("dispersion_symmetry", asym, SYMMETRY_TOLERANCE))
    mismatch = endpoint_mismatch(model, guide, spec)
    add(CheckResult.at_most("endpoint_covariance_match", mismatch, ENDPOINT_MATCH_TOLERANCE))

    if log_p is not None:
        ratio = float(np.exp(estimate.log_p - log_p))
        rel_se = estimate.relative_std_err * ratio
        add(CheckResult.at_most("weight_mean_identity", abs(ratio - 1.0), max(3.0 * rel_se, WEIGHT_IDENTITY_FLOOR)))

    if spec.d == 1 and mismatch > ENDPOINT_MATCH_TOLERANCE:
        alpha = float(model.a(spec.T, spec.v)[0, 0] / guide.a(spec.T)[0, 0])
        divergence = singular_guide_log_divergence(alpha, spec.T, float(grid.nodes[-2]))
        add(CheckResult("singular_guide_divergence", INFO, divergence, float("nan")))

    log_event(logger, "invariant_suite_finished", {
        "model": model.name, "guide": guide.name, "passed": report.passed, "failures": report.failures,
    }, level=logging.INFO if report.passed else logging.WARNING)
    return report
