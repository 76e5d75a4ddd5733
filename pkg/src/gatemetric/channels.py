"""Kraus maps of the reduced system dynamics and channel fidelities."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .linalg import (
    CompositeDims,
    DimensionError,
    DimsLike,
    check_density,
    dagger,
    hs_norm,
    kron,
    psd_sqrt,
    trace_norm,
)
from .metrics import gamma_closed

log = logging.getLogger(__name__)

PRUNE_TOL = 1e-14


@dataclass(frozen=True)
class KrausMap:
    """Operators ``K_i`` of a trace-preserving channel ``rho -> sum K_i rho K_i^dag``."""

    n_s: int
    operators: tuple

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.operators)
        if not ops:
            raise ValueError("a Kraus map needs at least one operator")
        for k in ops:
            if k.shape != (self.n_s, self.n_s):
                raise DimensionError(f"Kraus operator has shape {k.shape}, expected {self.n_s}x{self.n_s}")
        object.__setattr__(self, "operators", ops)
        res = self.completeness_residual()
        if res > 1e-9 * self.n_s:
            raise ValueError(f"Kraus operators are not complete: ||sum K^dag K - I||_HS = {res:.3e}")

    def completeness_residual(self) -> float:
        total = sum(dagger(k) @ k for k in self.operators)
        return hs_norm(total - np.eye(self.n_s))

    def __len__(self) -> int:
        return len(self.operators)

    @classmethod
    def unitary(cls, v) -> KrausMap:
        v = np.asarray(v, dtype=complex)
        return cls(v.shape[0], (v,))


@dataclass(frozen=True)
class FidelityBounds:
    """``(1 - d)^2 <= F <= 1 - d^2`` for a distance ``d``."""

    lower: float
    upper: float
    distance: float


def maximally_mixed(dim: int) -> np.ndarray:
    if dim < 1:
        raise DimensionError("dim must be >= 1")
    return np.eye(dim, dtype=complex) / dim


def kraus_from_unitary(u, rho_e, dims: DimsLike, prune_tol: float = PRUNE_TOL) -> KrausMap:
    """Kraus map induced on the system by ``U`` with the environment starting in ``rho_e``.

    ``K_{nu nu'} = sqrt(zeta_nu') Tr_e[(I_s (x) |nu'><nu|) U]`` in the eigenbasis
    ``{|nu>}`` of ``rho_e``; eigenvalues below ``prune_tol`` are dropped.
    """
    dims = CompositeDims.of(dims)
    u = np.asarray(u, dtype=complex)
    if u.shape != (dims.n, dims.n):
        raise DimensionError(f"expected {dims.n}x{dims.n} operator, got {u.shape}")
    rho_e = check_density(rho_e, dims.n_e)
    zeta, basis = np.linalg.eigh(0.5 * (rho_e + dagger(rho_e)))
    # rotate the environment into the eigenbasis of rho_e
    rot = kron(np.eye(dims.n_s), basis)
    t = (dagger(rot) @ u @ rot).reshape(dims.n_s, dims.n_e, dims.n_s, dims.n_e)
    ops = []
    for nu_p in range(dims.n_e):
        if zeta[nu_p] < prune_tol:
            continue
        for nu in range(dims.n_e):
            ops.append(np.sqrt(zeta[nu_p]) * t[:, nu, :, nu_p])
    return KrausMap(dims.n_s, tuple(ops))


def apply_channel(k: KrausMap, rho_s) -> np.ndarray:
    rho_s = np.asarray(rho_s, dtype=complex)
    if rho_s.shape != (k.n_s, k.n_s):
        raise DimensionError(f"state is {rho_s.shape}, channel acts on {k.n_s}x{k.n_s}")
    return sum(op @ rho_s @ dagger(op) for op in k.operators)


def _state_pair(rho1, rho2) -> tuple[np.ndarray, np.ndarray]:
    rho1 = np.asarray(rho1, dtype=complex)
    rho2 = np.asarray(rho2, dtype=complex)
    if rho1.shape != rho2.shape:
        raise DimensionError(f"state shapes differ: {rho1.shape} vs {rho2.shape}")
    return check_density(rho1, tol=1e-8), check_density(rho2, tol=1e-8)


def uhlmann_fidelity(rho1, rho2) -> float:
    """``||sqrt(rho1) sqrt(rho2)||_Tr^2``."""
    rho1, rho2 = _state_pair(rho1, rho2)
    f = trace_norm(psd_sqrt(rho1) @ psd_sqrt(rho2)) ** 2
    return float(np.clip(f, 0.0, 1.0))


def kolmogorov_distance(rho1, rho2) -> float:
    rho1, rho2 = _state_pair(rho1, rho2)
    return 0.5 * trace_norm(rho1 - rho2)


def _check_target(k: KrausMap, v_s) -> np.ndarray:
    v_s = np.asarray(v_s, dtype=complex)
    if v_s.shape != (k.n_s, k.n_s):
        raise DimensionError(f"target is {v_s.shape}, channel acts on {k.n_s}x{k.n_s}")
    return v_s


def channel_fidelity_mms(k: KrausMap, v_s) -> float:
    """Channel fidelity at the maximally mixed input, ``sum |Tr(V^dag K_i)|^2 / n_s^2``."""
    v_s = _check_target(k, v_s)
    total = sum(abs(np.trace(dagger(v_s) @ op)) ** 2 for op in k.operators)
    return float(total / k.n_s**2)


def channel_fidelity_mmc(u, v_s, dims: DimsLike) -> float:
    """Channel fidelity with both system and environment maximally mixed, ``||Gamma||_HS^2 / (n_s n)``."""
    dims = CompositeDims.of(dims)
    g = gamma_closed(u, v_s, dims)
    return float(hs_norm(g) ** 2 / (dims.n_s * dims.n))


def pure_state_fidelity(k: KrausMap, v_s, psi) -> float:
    """``sum_i |<psi| V^dag K_i |psi>|^2`` for a normalized state vector."""
    v_s = _check_target(k, v_s)
    psi = np.asarray(psi, dtype=complex)
    return float(sum(abs(np.vdot(psi, dagger(v_s) @ op @ psi)) ** 2 for op in k.operators))


def sampled_min_pure_fidelity(k: KrausMap, v_s, samples: int = 1000, seed=None) -> float:
    """Minimum of :func:`pure_state_fidelity` over random pure states.

    An upper estimate of the minimum pure-state fidelity, used for cross-checks.
    """
    v_s = _check_target(k, v_s)
    rng = np.random.default_rng(seed)
    a = np.stack([dagger(v_s) @ op for op in k.operators])
    psi = rng.standard_normal((samples, k.n_s)) + 1j * rng.standard_normal((samples, k.n_s))
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    amps = np.einsum("si,kij,sj->sk", np.conj(psi), a, psi)
    return float(np.min(np.sum(np.abs(amps) ** 2, axis=1)))


def _project_simplex(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, x.size + 1)
    r = idx[u - css / idx > 0][-1]
    return np.maximum(x - css[r - 1] / r, 0.0)


def project_density(h: np.ndarray) -> np.ndarray:
    """Nearest density matrix in HS norm to a Hermitian matrix."""
    evals, evecs = np.linalg.eigh(0.5 * (h + dagger(h)))
    return (evecs * _project_simplex(evals)) @ dagger(evecs)


@dataclass(frozen=True)
class StateSolverConfig:
    max_iters: int = 5000
    tol: float = 1e-10


def fidelity_lower_bound(k: KrausMap, v_s, cfg: StateSolverConfig | None = None) -> tuple[float, bool]:
    """Convex lower bound ``min_rho sum_i |Tr(V^dag K_i rho)|^2`` on the minimum pure-state fidelity.

    Projected gradient over density matrices with step ``1/L``,
    ``L = 2 sum ||V^dag K_i||_HS^2``. Returns ``(value, converged)``.
    """
    cfg = cfg or StateSolverConfig()
    v_s = _check_target(k, v_s)
    a = np.stack([dagger(v_s) @ op for op in k.operators])
    lip = 2.0 * float(np.sum(np.abs(a) ** 2))

    def value(rho):
        c = np.einsum("kij,ji->k", a, rho)
        return float(np.sum(np.abs(c) ** 2)), c

    rho = maximally_mixed(k.n_s)
    f, c = value(rho)
    converged = False
    for _ in range(cfg.max_iters):
        grad = np.einsum("k,kij->ij", np.conj(c), a)
        grad = grad + dagger(grad)
        rho_new = project_density(rho - grad / lip)
        f_new, c_new = value(rho_new)
        if f - f_new <= cfg.tol:
            if f_new < f:
                rho, f, c = rho_new, f_new, c_new
            converged = True
            break
        rho, f, c = rho_new, f_new, c_new
    if not converged:
        log.warning("fidelity lower bound solve stopped at max_iters=%d", cfg.max_iters)
    return float(np.clip(f, 0.0, 1.0)), converged


def fidelity_bounds_from_distance(delta: float) -> FidelityBounds:
    """Gate fidelities ``((1 - d)^2, 1 - d^2)`` implied by the HS distance."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"distance must lie in [0, 1], got {delta}")
    return FidelityBounds(lower=(1.0 - delta) ** 2, upper=1.0 - delta**2, distance=delta)

