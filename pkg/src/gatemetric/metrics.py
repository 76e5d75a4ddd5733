"""Environment-invariant distances between composite-system unitaries.

Every distance here is a quotient distance: it minimizes a unitarily
invariant norm distance over the environment transformation
``I_s (x) Phi``, so two unitaries that differ only in what they do to
the environment are at distance zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .linalg import (
    CompositeDims,
    DimensionError,
    DimsLike,
    check_unitary,
    dagger,
    hs_norm,
    kron,
    partial_trace_sys,
    spectral_norm,
    svd,
)

log = logging.getLogger(__name__)

#: Normalization of the two-norm distance.
LAMBDA_2 = 0.5


def lambda_hs(n: int) -> float:
    """Normalization ``(2n)^(-1/2)`` of the Hilbert-Schmidt distance."""
    return (2.0 * n) ** -0.5


@dataclass(frozen=True)
class DistanceResult:
    value: float
    gamma: np.ndarray
    optimal_phi: np.ndarray
    dims: CompositeDims

    @property
    def trace_norm_gamma(self) -> float:
        return float(self.dims.n * (1.0 - self.value**2))


@dataclass(frozen=True)
class TwoNormBounds:
    lower: float
    upper: float
    phi_relaxed: np.ndarray
    phi_unitary: np.ndarray
    iterations: int
    converged: bool


@dataclass(frozen=True)
class SubgradientConfig:
    """Settings for the projected subgradient solve of the relaxed two-norm problem."""

    max_iters: int = 2000
    step: float = 0.5
    tol: float = 1e-9
    patience: int = 50


def _pair(u, v, dims: DimsLike) -> tuple[np.ndarray, np.ndarray, CompositeDims]:
    dims = CompositeDims.of(dims)
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != (dims.n, dims.n) or v.shape != (dims.n, dims.n):
        raise DimensionError(f"expected {dims.n}x{dims.n} operators, got {u.shape} and {v.shape}")
    return u, v, dims


def _lift_target(v_s, dims: CompositeDims) -> np.ndarray:
    v_s = np.asarray(v_s, dtype=complex)
    if v_s.shape != (dims.n_s, dims.n_s):
        raise DimensionError(f"system target must be {dims.n_s}x{dims.n_s}, got {v_s.shape}")
    return kron(v_s, np.eye(dims.n_e))


def gamma(u, v, dims: DimsLike) -> np.ndarray:
    """``Tr_s(U V^dag)``, the ``n_e x n_e`` matrix every HS quantity depends on."""
    u, v, dims = _pair(u, v, dims)
    return partial_trace_sys(u @ dagger(v), dims)


def gamma_closed(u, v_s, dims: DimsLike) -> np.ndarray:
    """``Tr_s[U (V_s^dag (x) I_e)]`` for a target given on the system alone."""
    dims = CompositeDims.of(dims)
    u = np.asarray(u, dtype=complex)
    v_s = np.asarray(v_s, dtype=complex)
    if u.shape != (dims.n, dims.n):
        raise DimensionError(f"expected {dims.n}x{dims.n} operator, got {u.shape}")
    if v_s.shape != (dims.n_s, dims.n_s):
        raise DimensionError(f"system target must be {dims.n_s}x{dims.n_s}, got {v_s.shape}")
    t = u.reshape(dims.n_s, dims.n_e, dims.n_s, dims.n_e)
    # sum_{i,j} U[i a, j b] conj(Vs[i, j])
    return np.einsum("iajb,ij->ab", t, np.conj(v_s))


def distance_from_gamma(g: np.ndarray, u: np.ndarray, v: np.ndarray, dims: CompositeDims) -> DistanceResult:
    """HS distance given ``Gamma = Tr_s(U V^dag)`` and the pair it came from.

    The value is taken from the residual ``lambda_n ||U - (I (x) Phi*) V||_HS``,
    which equals ``sqrt(1 - ||Gamma||_Tr / n)`` but keeps full relative
    precision when the distance is tiny, where the closed form loses about
    half the digits to cancellation.
    """
    w, _, x = svd(g)
    phi = w @ dagger(x)
    res = u - kron(np.eye(dims.n_s), phi) @ v
    value = float(np.clip(lambda_hs(dims.n) * hs_norm(res), 0.0, 1.0))
    return DistanceResult(value=value, gamma=g, optimal_phi=phi, dims=dims)


def dist_hs(u, v, dims: DimsLike) -> DistanceResult:
    """Hilbert-Schmidt quotient distance ``sqrt(1 - ||Gamma||_Tr / n)``.

    The minimizing environment unitary is ``W X^dag`` from ``Gamma = W S X^dag``;
    for degenerate singular values any SVD gives a valid (non-unique) minimizer.
    """
    u, v, dims = _pair(u, v, dims)
    return distance_from_gamma(gamma(u, v, dims), u, v, dims)


def dist_hs_closed(u, v_s, dims: DimsLike) -> DistanceResult:
    dims = CompositeDims.of(dims)
    g = gamma_closed(u, v_s, dims)
    return distance_from_gamma(g, np.asarray(u, dtype=complex), _lift_target(v_s, dims), dims)


def _system_pair(u_s, v_s) -> tuple[np.ndarray, np.ndarray]:
    u_s = np.asarray(u_s, dtype=complex)
    v_s = np.asarray(v_s, dtype=complex)
    if u_s.shape != v_s.shape or u_s.ndim != 2 or u_s.shape[0] != u_s.shape[1]:
        raise DimensionError(f"system operators must be square and equal-sized, got {u_s.shape}, {v_s.shape}")
    return u_s, v_s


def dist_tensor(u_s, v_s) -> float:
    """Distance between ``[U_s (x) U_e]`` and ``[V_s (x) V_e]``; phase-insensitive."""
    u_s, v_s = _system_pair(u_s, v_s)
    overlap = abs(np.trace(u_s @ dagger(v_s))) / u_s.shape[0]
    return float(np.clip(np.sqrt(max(1.0 - overlap, 0.0)), 0.0, 1.0))


def dist_phase_sensitive(u_s, v_s) -> float:
    """``||U_s - V_s||_HS / sqrt(2 n_s)``; zero only when ``U_s == V_s``."""
    u_s, v_s = _system_pair(u_s, v_s)
    val = 1.0 - np.trace(u_s @ dagger(v_s)).real / u_s.shape[0]
    return float(np.sqrt(max(val, 0.0)))


def env_residual(u, v, phi, dims: DimsLike) -> np.ndarray:
    """``U - (I_s (x) Phi) V``."""
    dims = CompositeDims.of(dims)
    return np.asarray(u) - kron(np.eye(dims.n_s), phi) @ np.asarray(v)


def hs_objective(u, v, phi, dims: DimsLike) -> float:
    """``lambda_n ||U - (I (x) Phi) V||_HS`` for an arbitrary ``Phi``."""
    dims = CompositeDims.of(dims)
    return lambda_hs(dims.n) * hs_norm(env_residual(u, v, phi, dims))


def two_norm_objective(u, v, phi, dims: DimsLike) -> float:
    """``lambda_2 ||U - (I (x) Phi) V||_2`` for an arbitrary ``Phi``."""
    return LAMBDA_2 * spectral_norm(env_residual(u, v, phi, dims))


def _project_spectral_ball(phi: np.ndarray) -> np.ndarray:
    w, s, x = svd(phi)
    return (w * np.minimum(s, 1.0)) @ dagger(x)


def dist_two_norm_bounds(u, v, dims: DimsLike, cfg: SubgradientConfig | None = None) -> TwoNormBounds:
    """Bracket the two-norm quotient distance.

    The relaxed problem ``min ||U - (I (x) Phi) V||_2`` over ``||Phi||_2 <= 1``
    is convex and solved by projected subgradient descent; its value gives
    the lower bound. The polar factor of the relaxed minimizer is a feasible
    unitary and gives the upper bound.
    """
    cfg = cfg or SubgradientConfig()
    u, v, dims = _pair(u, v, dims)
    eye_s = np.eye(dims.n_s)

    def residual(p):
        return u - kron(eye_s, p) @ v

    # the HS-optimal unitary is feasible and usually close
    phi = dist_hs(u, v, dims).optimal_phi
    best_phi = phi
    best = spectral_norm(residual(phi))
    last_check = best
    # a change dPhi moves the residual by ||dPhi||_2, so the minimizer lies within
    # about 2 * best of the start; scale the steps to that radius
    scale = cfg.step * max(best, 1e-15)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        res = residual(phi)
        w, s, x = svd(res)
        # subgradient of ||res||_2 w.r.t. Phi under the real HS inner product
        g = -partial_trace_sys(np.outer(w[:, 0], np.conj(x[:, 0])) @ dagger(v), dims)
        gnorm = hs_norm(g)
        if gnorm == 0.0:
            converged = True
            break
        phi = _project_spectral_ball(phi - (scale / np.sqrt(it)) * g / gnorm)
        f = spectral_norm(residual(phi))
        if f < best:
            best, best_phi = f, phi
        if it % cfg.patience == 0:
            if last_check - best < cfg.tol:
                converged = True
                break
            last_check = best
    if not converged:
        log.warning("two-norm subgradient solve stopped at max_iters=%d", cfg.max_iters)

    phi_bar = best_phi
    w, _, x = svd(phi_bar)
    phi_unitary = w @ dagger(x)
    lower = LAMBDA_2 * best
    upper = LAMBDA_2 * spectral_norm(residual(phi_unitary))
    return TwoNormBounds(
        lower=float(lower),
        upper=float(upper),
        phi_relaxed=phi_bar,
        phi_unitary=phi_unitary,
        iterations=it,
        converged=converged,
    )
