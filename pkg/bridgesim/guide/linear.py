"""
Linear auxiliary process

    dX~_t = B~(t) X~_t dt + beta~(t) dt + sigma~(t) dW_t

and its Gaussian transition law: fundamental matrix Phi(t, s), mean
mu_t(s, x), covariance K_t(s) and log density R~(s, x) = log p~(s, x; T, v).

Guides declared `constant` are handled exactly with matrix exponentials
(scaling-and-squaring via scipy); everything else goes through fixed-step RK4
for Phi and composite trapezoid quadrature for the integrals.
"""
import math
from dataclasses import dataclass
from typing import Any, Callable, Optional, Tuple

import numpy as np
from scipy import linalg

from bridgesim.core.constants import FUNDAMENTAL_MIN_SUBSTEPS, PD_TOLERANCE, RK4_MAX_STEP
from bridgesim.core.errors import ArgumentError, NumericalError
from bridgesim.sde.models import BridgeSpec, as_vector, outer_square

MatrixFn = Callable[[float], np.ndarray]
VectorFn = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class LinearGuide:
    d: int
    dW: int
    Bt: MatrixFn
    betat: VectorFn
    sigmat: MatrixFn
    theta: Optional[Any] = None
    constant: bool = False
    name: str = "guide"

    def B(self, t: float) -> np.ndarray:
        return np.asarray(self.Bt(0.0 if self.constant else t), dtype=float).reshape(self.d, self.d)

    def beta(self, t: float) -> np.ndarray:
        return np.asarray(self.betat(0.0 if self.constant else t), dtype=float).reshape(self.d)

    def sigma(self, t: float) -> np.ndarray:
        return np.asarray(self.sigmat(0.0 if self.constant else t), dtype=float).reshape(self.d, self.dW)

    def a(self, t: float) -> np.ndarray:
        return outer_square(self.sigma(t))

    def drift(self, t: float, x: np.ndarray) -> np.ndarray:
        """b~(t, x) = B~(t) x + beta~(t) for a single state."""
        return self.B(t) @ x + self.beta(t)

    def drift_batch(self, t: float, xs: np.ndarray) -> np.ndarray:
        return xs @ self.B(t).T + self.beta(t)

    @classmethod
    def constant_coefficients(cls, B, beta, sigma, theta=None, name: str = "guide") -> "LinearGuide":
        B = np.atleast_2d(np.asarray(B, dtype=float))
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        d, dW = sigma.shape
        if B.shape != (d, d) or beta.shape != (d,):
            raise ArgumentError(f"inconsistent guide shapes B{B.shape} beta{beta.shape} sigma{sigma.shape}")
        return cls(
            d=d, dW=dW,
            Bt=lambda t: B, betat=lambda t: beta, sigmat=lambda t: sigma,
            theta=theta, constant=True, name=name,
        )


# ==============================================================================
# MATRIX HELPERS
# ==============================================================================

def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def check_positive_definite(m: np.ndarray, what: str, node: Optional[int] = None, time: Optional[float] = None):
    """Smallest eigenvalue must exceed PD_TOLERANCE * trace / d."""
    d = m.shape[-1]
    trace = float(np.trace(m))
    smallest = float(np.linalg.eigvalsh(m)[0]) if np.all(np.isfinite(m)) else -np.inf
    if not (trace > 0 and smallest > PD_TOLERANCE * trace / d):
        raise NumericalError(
            f"{what} is not positive definite (min eigenvalue {smallest:.3g}, trace {trace:.3g})",
            node=node, time=time,
        )


def van_loan(A: np.ndarray, Q: np.ndarray, deltas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    For each delta: (int_0^delta e^{A u} Q e^{A' u} du, e^{A delta}), stacked.
    One batched expm of the block matrix [[-A, Q], [0, A']] delta.
    """
    d = A.shape[0]
    block = np.zeros((2 * d, 2 * d))
    block[:d, :d] = -A
    block[:d, d:] = Q
    block[d:, d:] = A.T
    E = linalg.expm(np.asarray(deltas, dtype=float)[:, None, None] * block)
    F = np.swapaxes(E[:, d:, d:], -1, -2)
    return symmetrize(F @ E[:, :d, d:]), F


def affine_integral(A: np.ndarray, beta: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """For each delta: int_0^delta e^{A u} du beta, stacked [m, d]."""
    d = A.shape[0]
    block = np.zeros((d + 1, d + 1))
    block[:d, :d] = A
    block[:d, d] = beta
    E = linalg.expm(np.asarray(deltas, dtype=float)[:, None, None] * block)
    return E[:, :d, d]


def rk4_left_propagator(B: MatrixFn, t0: float, t1: float, n: int) -> np.ndarray:
    """
    Psi_j = Phi(t0, tau_j) on the uniform sub-grid tau_j of [t0, t1] with n
    steps, from d/dtau Phi(t0, tau) = -Phi(t0, tau) B(tau). Returns [n+1, d, d].
    """
    h = (t1 - t0) / n
    B0 = B(t0)
    d = B0.shape[0]
    out = np.empty((n + 1, d, d))
    psi = np.eye(d)
    out[0] = psi
    Bl = B0
    for j in range(n):
        tau = t0 + j * h
        Bm = B(tau + 0.5 * h)
        Br = B(tau + h)
        k1 = -psi @ Bl
        k2 = -(psi + 0.5 * h * k1) @ Bm
        k3 = -(psi + 0.5 * h * k2) @ Bm
        k4 = -(psi + h * k3) @ Br
        psi = psi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[j + 1] = psi
        Bl = Br
    if not np.all(np.isfinite(out)):
        raise NumericalError("fundamental matrix integration produced non-finite entries", time=t0)
    return out


def trapezoid(values: np.ndarray, h: float) -> np.ndarray:
    """Composite trapezoid over the leading axis with uniform spacing h."""
    return h * (0.5 * values[0] + values[1:-1].sum(axis=0) + 0.5 * values[-1])


def _substeps(span: float) -> int:
    return max(FUNDAMENTAL_MIN_SUBSTEPS, int(math.ceil(abs(span) / RK4_MAX_STEP)))


# ==============================================================================
# TRANSITION LAW
# ==============================================================================

def fundamental_matrix(guide: LinearGuide, t: float, s: float) -> np.ndarray:
    """Phi(t, s) = Phi(t) Phi(s)^{-1}, solution operator of x' = B~(t) x."""
    if t == s:
        return np.eye(guide.d)
    if guide.constant:
        return linalg.expm(guide.B(0.0) * (t - s))
    # Phi(t, s) = Phi(s, t)^{-1}; integrate over [min, max] and invert when needed.
    lo, hi = (s, t) if s < t else (t, s)
    psi = rk4_left_propagator(guide.B, lo, hi, _substeps(hi - lo))[-1]  # Phi(lo, hi)
    if s < t:
        return np.linalg.inv(psi)
    return psi


def _right_propagator(guide: LinearGuide, s: float, t: float) -> Tuple[np.ndarray, float]:
    """Phi(t, tau_j) on a uniform sub-grid of [s, t], plus the spacing."""
    n = _substeps(t - s)
    left = rk4_left_propagator(guide.B, s, t, n)   # Phi(s, tau_j)
    phi_ts = np.linalg.inv(left[-1])               # Phi(t, s)
    return phi_ts[None] @ left, (t - s) / n


def guide_mean(guide: LinearGuide, s: float, x, t: float) -> np.ndarray:
    """mu_t(s, x) = Phi(t, s) x + int_s^t Phi(t, tau) beta~(tau) dtau."""
    x = as_vector(x, d=guide.d)
    if t < s:
        raise ArgumentError(f"guide_mean needs s <= t, got s={s}, t={t}")
    if t == s:
        return x.copy()
    if guide.constant:
        B = guide.B(0.0)
        phi = linalg.expm(B * (t - s))
        return phi @ x + affine_integral(B, guide.beta(0.0), np.array([t - s]))[0]
    psi, h = _right_propagator(guide, s, t)
    taus = np.linspace(s, t, psi.shape[0])
    betas = np.stack([guide.beta(tau) for tau in taus])
    return psi[0] @ x + trapezoid(np.einsum("jik,jk->ji", psi, betas), h)


def guide_covariance(guide: LinearGuide, s: float, t: float) -> np.ndarray:
    """K_t(s) = int_s^t Phi(t, tau) a~(tau) Phi(t, tau)' dtau."""
    if not t > s:
        raise ArgumentError(f"guide_covariance needs s < t, got s={s}, t={t}")
    if guide.constant:
        K, _ = van_loan(guide.B(0.0), guide.a(0.0), np.array([t - s]))
        K = K[0]
    else:
        psi, h = _right_propagator(guide, s, t)
        taus = np.linspace(s, t, psi.shape[0])
        a = np.stack([guide.a(tau) for tau in taus])
        K = symmetrize(trapezoid(psi @ a @ np.swapaxes(psi, -1, -2), h))
    check_positive_definite(K, "guide covariance K", time=s)
    return K


def gaussian_log_density(y: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    d = mean.shape[0]
    chol = np.linalg.cholesky(cov)
    z = linalg.solve_triangular(chol, y - mean, lower=True)
    return float(-0.5 * d * math.log(2 * math.pi) - np.log(np.diag(chol)).sum() - 0.5 * z @ z)


def guide_log_density(guide: LinearGuide, spec: BridgeSpec, s: float, x) -> float:
    """R~(s, x) = log p~(s, x; T, v)."""
    if not s < spec.T:
        raise ArgumentError(f"guide_log_density needs s < T, got s={s}")
    mu = guide_mean(guide, s, x, spec.T)
    K = guide_covariance(guide, s, spec.T)
    return gaussian_log_density(spec.v, mu, K)


def linear_bridge_marginal(guide: LinearGuide, spec: BridgeSpec, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean and covariance of X~_t given X~_0 = u and X~_T = v, by Gaussian
    conditioning of (X~_t, X~_T) started at u. Degenerate at t = 0 and t = T.
    """
    if not 0.0 <= t <= spec.T:
        raise ArgumentError(f"t={t} outside [0, {spec.T}]")
    d = guide.d
    if t == 0.0:
        return spec.u.copy(), np.zeros((d, d))
    if t == spec.T:
        return spec.v.copy(), np.zeros((d, d))
    m_t = guide_mean(guide, 0.0, spec.u, t)
    m_T = guide_mean(guide, t, m_t, spec.T)
    K_t = guide_covariance(guide, 0.0, t)
    K_T = guide_covariance(guide, 0.0, spec.T)
    cross = K_t @ fundamental_matrix(guide, spec.T, t).T      # Cov(X~_t, X~_T)
    gain = np.linalg.solve(K_T, cross.T).T
    mean = m_t + gain @ (spec.v - m_T)
    cov = symmetrize(K_t - gain @ cross.T)
    return mean, cov
