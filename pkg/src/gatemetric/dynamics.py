"""Spin-chain model and piecewise-constant Schrodinger propagation.

Sites are ordered qubits first, then environment particles, with site 0 the
leftmost tensor factor, so the first ``q`` sites form the system factor of
the composite space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .linalg import CompositeDims, dagger, kron

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# environment frequencies from the reference model, in units of the first qubit frequency
CHAIN_1Q2E_OMEGA = (1.0, 0.99841, 1.00159)
TRIANGLE_2Q1E_OMEGA = (1.0, 1.09159, 0.99841)


@dataclass(frozen=True)
class SpinSystem:
    """Qubits plus environment spins with Heisenberg exchange couplings.

    ``couplings[i, j]`` is the exchange constant between sites ``i`` and ``j``.
    """

    q: int
    e: int
    omega: tuple
    mu: tuple
    couplings: np.ndarray = field(repr=False)

    def __post_init__(self):
        total = self.q + self.e
        if self.q < 1 or self.e < 0:
            raise ValueError(f"need q >= 1 and e >= 0, got q={self.q}, e={self.e}")
        if len(self.omega) != total:
            raise ValueError(f"omega needs {total} entries, got {len(self.omega)}")
        if len(self.mu) != self.q:
            raise ValueError(f"mu needs {self.q} entries, got {len(self.mu)}")
        if any(w <= 0 for w in self.omega):
            raise ValueError("all frequencies must be positive")
        g = np.asarray(self.couplings, dtype=float)
        if g.shape != (total, total):
            raise ValueError(f"couplings must be {total}x{total}")
        if not np.allclose(g, g.T) or np.any(np.diag(g) != 0):
            raise ValueError("couplings must be symmetric with zero diagonal")
        g = g.copy()
        g.setflags(write=False)
        object.__setattr__(self, "couplings", g)
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))

    @property
    def sites(self) -> int:
        return self.q + self.e

    @property
    def dims(self) -> CompositeDims:
        return CompositeDims(2**self.q, 2**self.e)

    def decoupled(self) -> SpinSystem:
        return SpinSystem(self.q, self.e, self.omega, self.mu, np.zeros_like(self.couplings))

    def qubits_only(self) -> SpinSystem:
        """The system's own qubits with the environment removed."""
        return SpinSystem(self.q, 0, self.omega[: self.q], self.mu, self.couplings[: self.q, : self.q])


def chain_1q2e(gamma: float, omega=CHAIN_1Q2E_OMEGA, mu=(1.0,)) -> SpinSystem:
    """One qubit between two environment spins, ``e2 -- q1 -- e3``."""
    g = np.zeros((3, 3))
    g[0, 1] = g[1, 0] = gamma
    g[0, 2] = g[2, 0] = gamma
    return SpinSystem(1, 2, tuple(omega), tuple(mu), g)


def triangle_2q1e(gamma: float, omega=TRIANGLE_2Q1E_OMEGA, mu=(1.0, 1.0), gamma_qq: float = 0.0) -> SpinSystem:
    """Two qubits each coupled with strength ``gamma`` to one environment spin.

    ``gamma_qq`` is the qubit-qubit exchange, which the reference model
    leaves unspecified.
    """
    g = np.zeros((3, 3))
    g[0, 2] = g[2, 0] = gamma
    g[1, 2] = g[2, 1] = gamma
    g[0, 1] = g[1, 0] = gamma_qq
    return SpinSystem(2, 1, tuple(omega), tuple(mu), g)


def spin_operator(axis: str, site: int, total: int) -> np.ndarray:
    """``sigma_axis / 2`` acting on ``site`` of a ``total``-site register."""
    if axis not in PAULI:
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    if not 0 <= site < total:
        raise IndexError(f"site {site} out of range for {total} sites")
    factors = [np.eye(2, dtype=complex)] * total
    factors[site] = PAULI[axis] / 2
    return reduce(kron, factors)


def build_drift(sys: SpinSystem) -> np.ndarray:
    """Free precession plus Heisenberg exchange, ``sum w_i S_iz - sum_{i<j} g_ij S_i . S_j``."""
    total = sys.sites
    ops = {(a, i): spin_operator(a, i, total) for a in "xyz" for i in range(total)}
    h = np.zeros((2**total, 2**total), dtype=complex)
    for i in range(total):
        h += sys.omega[i] * ops["z", i]
    for i in range(total):
        for j in range(i + 1, total):
            gij = sys.couplings[i, j]
            if gij:
                h -= gij * sum(ops[a, i] @ ops[a, j] for a in "xyz")
    return h


def build_dipole(sys: SpinSystem) -> np.ndarray:
    """``sum_i mu_i S_ix`` over the qubits; the control Hamiltonian is ``-C(t)`` times this."""
    total = sys.sites
    return sum(sys.mu[i] * spin_operator("x", i, total) for i in range(sys.q))


@dataclass(frozen=True)
class ControlField:
    """Piecewise-constant control: ``samples[k]`` holds on ``[k dt, (k+1) dt)``."""

    t_f: float
    samples: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.samples, dtype=float).copy()
        if c.ndim != 1 or c.size < 1:
            raise ValueError("control needs at least one sample")
        if not np.all(np.isfinite(c)):
            raise ValueError("control samples must be finite")
        if not self.t_f > 0:
            raise ValueError("t_f must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "samples", c)

    @property
    def steps(self) -> int:
        return self.samples.size

    @property
    def dt(self) -> float:
        return self.t_f / self.steps

    @property
    def times(self) -> np.ndarray:
        """Left endpoints ``t_k = k dt`` of the control intervals."""
        return np.arange(self.steps) * self.dt

    @classmethod
    def zeros(cls, t_f: float, steps: int) -> ControlField:
        return cls(t_f, np.zeros(steps))

    def with_samples(self, samples) -> ControlField:
        return ControlField(self.t_f, samples)


@dataclass(frozen=True)
class Trajectory:
    """Cumulative propagators ``U(t_k)`` for ``k = 0..M`` plus per-step eigendata.

    The eigendata (``evals``, ``evecs`` of each step Hamiltonian) is kept for
    exact gradients of the discretized propagator.
    """

    dims: CompositeDims
    unitaries: np.ndarray
    evals: np.ndarray
    evecs: np.ndarray
    dt: float

    @property
    def final(self) -> np.ndarray:
        return self.unitaries[-1]


class Propagator:
    """Drift, dipole and dimensions of a spin system, cached for repeated propagation."""

    def __init__(self, sys: SpinSystem):
        self.system = sys
        self.dims = sys.dims
        self.drift = build_drift(sys)
        self.dipole = build_dipole(sys)

    def step_hamiltonians(self, samples: np.ndarray) -> np.ndarray:
        return self.drift[None, :, :] - np.asarray(samples)[:, None, None] * self.dipole[None, :, :]

    def propagate(self, control: ControlField) -> Trajectory:
        dt = control.dt
        evals, evecs = np.linalg.eigh(self.step_hamiltonians(control.samples))
        steps = np.einsum("kij,kj,klj->kil", evecs, np.exp(-1j * dt * evals), np.conj(evecs))
        n = self.drift.shape[0]
        unitaries = np.empty((control.steps + 1, n, n), dtype=complex)
        unitaries[0] = np.eye(n)
        for k in range(control.steps):
            unitaries[k + 1] = steps[k] @ unitaries[k]
        return Trajectory(self.dims, unitaries, evals, evecs, dt)


def propagate(sys: SpinSystem, control: ControlField) -> Trajectory:
    """``U(t_{k+1}) = exp(-i dt (H_drift - C_k mu)) U(t_k)`` with ``U(0) = I``."""
    return Propagator(sys).propagate(control)


def hadamard_gate() -> np.ndarray:
    return np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def cnot_gate() -> np.ndarray:
    g = np.eye(4, dtype=complex)
    g[2:, 2:] = [[0, 1], [1, 0]]
    return g


def heisenberg_pictures(traj: Trajectory, op: np.ndarray) -> np.ndarray:
    """``U^dag(t_k) op U(t_k)`` for every stored time."""
    u = traj.unitaries
    return dagger(u) @ op[None] @ u
