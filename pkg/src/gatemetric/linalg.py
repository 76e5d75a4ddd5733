"""Dense complex linear algebra shared by the rest of the package.

Composite-space basis ordering is ``|i> (x) |nu>`` with the system index
major, i.e. ``kron(system_op, env_op)`` acts on the composite space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

UNITARITY_TOL = 1e-10
HERMITICITY_TOL = 1e-10
PSD_TOL = 1e-10


class DimensionError(ValueError):
    """Operand shapes do not match the declared system/environment split."""


class NotUnitaryError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


class InvalidStateError(ValueError):
    """Matrix is not a density matrix within tolerance."""


class NumericalError(RuntimeError):
    """A decomposition failed to converge."""


@dataclass(frozen=True)
class CompositeDims:
    """System/environment split of a composite Hilbert space."""

    n_s: int
    n_e: int

    def __post_init__(self):
        if int(self.n_s) < 1 or int(self.n_e) < 1:
            raise DimensionError(f"dimensions must be >= 1, got ({self.n_s}, {self.n_e})")

    @property
    def n(self) -> int:
        return self.n_s * self.n_e

    @classmethod
    def of(cls, dims: DimsLike) -> CompositeDims:
        if isinstance(dims, CompositeDims):
            return dims
        n_s, n_e = dims
        return cls(int(n_s), int(n_e))


DimsLike = Union[CompositeDims, tuple]


class SvdResult(NamedTuple):
    """``m = left @ diag(singular_values) @ right.conj().T``."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray


def _square(m, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def _blocks(m, dims: DimsLike) -> tuple[np.ndarray, CompositeDims]:
    dims = CompositeDims.of(dims)
    m = _square(m)
    if m.shape[0] != dims.n:
        raise DimensionError(f"matrix is {m.shape[0]}x{m.shape[0]}, dims imply n={dims.n}")
    # m[i, nu, j, mu] = <i nu| m |j mu>
    return m.reshape(dims.n_s, dims.n_e, dims.n_s, dims.n_e), dims


def partial_trace_env(m, dims: DimsLike) -> np.ndarray:
    """Trace out the environment factor; returns an ``n_s x n_s`` matrix."""
    t, _ = _blocks(m, dims)
    return np.einsum("iaja->ij", t)


def partial_trace_sys(m, dims: DimsLike) -> np.ndarray:
    """Trace out the system factor; returns an ``n_e x n_e`` matrix."""
    t, _ = _blocks(m, dims)
    return np.einsum("iaib->ab", t)


def svd(m) -> SvdResult:
    m = np.asarray(m, dtype=complex)
    if not np.all(np.isfinite(m)):
        raise NumericalError("svd input contains non-finite entries")
    try:
        w, s, xh = np.linalg.svd(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"svd did not converge: {exc}") from exc
    return SvdResult(w, s, dagger(xh))


def singular_values(m) -> np.ndarray:
    try:
        return np.linalg.svd(np.asarray(m, dtype=complex), compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"svd did not converge: {exc}") from exc


def trace_norm(m) -> float:
    return float(np.sum(singular_values(m)))


def hs_norm(m) -> float:
    return float(np.linalg.norm(np.asarray(m, dtype=complex), "fro"))


def spectral_norm(m) -> float:
    s = singular_values(m)
    return float(s[0]) if s.size else 0.0


def polar_unitary(m) -> np.ndarray:
    """Unitary factor ``W X^dag`` of the SVD ``m = W S X^dag``.

    Not unique when ``m`` is rank deficient; the SVD's choice is returned.
    """
    w, _, x = svd(m)
    return w @ dagger(x)


def is_hermitian(h, tol: float = HERMITICITY_TOL) -> bool:
    h = np.asarray(h, dtype=complex)
    scale = max(hs_norm(h), 1.0)
    return hs_norm(h - dagger(h)) <= tol * scale


def hermitian_expm(h, scale: float) -> np.ndarray:
    """``exp(-i * scale * h)`` for Hermitian ``h``, via eigendecomposition."""
    h = _square(h, "h")
    if not is_hermitian(h):
        raise NotHermitianError("hermitian_expm requires a Hermitian matrix")
    h = 0.5 * (h + dagger(h))
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.exp(-1j * scale * evals)) @ dagger(evecs)


def random_unitary(dim: int, seed=None) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a complex Ginibre matrix.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if dim < 1:
        raise DimensionError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_density(dim: int, seed=None, rank: int | None = None) -> np.ndarray:
    """Random density matrix ``G G^dag / Tr`` with a Ginibre factor of given rank."""
    rng = np.random.default_rng(seed)
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ dagger(g)
    return rho / np.trace(rho).real


def random_pure_state(dim: int, seed=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return psi / np.linalg.norm(psi)


def unitarity_defect(u) -> float:
    u = np.asarray(u, dtype=complex)
    return hs_norm(dagger(u) @ u - np.eye(u.shape[0]))


def check_unitary(u, dims: DimsLike | None = None, tol: float | None = None) -> np.ndarray:
    """Return ``u`` as a complex array, raising unless it is unitary.

    The default tolerance scales with the dimension (``1e-10 * n``).
    """
    u = _square(u, "operator")
    if not np.all(np.isfinite(u)):
        raise NotUnitaryError("operator has non-finite entries")
    if dims is not None and u.shape[0] != CompositeDims.of(dims).n:
        raise DimensionError(f"operator is {u.shape[0]}x{u.shape[0]}, dims imply n={CompositeDims.of(dims).n}")
    tol = UNITARITY_TOL * u.shape[0] if tol is None else tol
    defect = unitarity_defect(u)
    if defect > tol:
        raise NotUnitaryError(f"||U^dag U - I||_HS = {defect:.3e} exceeds {tol:.1e}")
    return u


def check_density(rho, dim: int | None = None, tol: float = PSD_TOL) -> np.ndarray:
    rho = _square(rho, "density matrix")
    if dim is not None and rho.shape[0] != dim:
        raise DimensionError(f"density matrix is {rho.shape[0]}x{rho.shape[0]}, expected {dim}")
    if not is_hermitian(rho, tol):
        raise InvalidStateError("density matrix is not Hermitian")
    evals = np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))
    if evals.min() < -tol:
        raise InvalidStateError(f"density matrix has eigenvalue {evals.min():.3e} < 0")
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol * max(1, rho.shape[0]):
        raise InvalidStateError(f"density matrix has trace {tr.real:.12g}")
    return rho


def psd_sqrt(rho) -> np.ndarray:
    """Hermitian square root with negative eigenvalues clamped to zero."""
    rho = _square(rho)
    evals, evecs = np.linalg.eigh(0.5 * (rho + dagger(rho)))
    return (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ dagger(evecs)
