"""Self-checks run by ``gatemetric check``.

Each suite draws random instances at small dimensions from a seeded
generator and returns a :class:`SuiteResult`; the suites compare
independent computations of the same quantity or test known inequalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channels import apply_channel, channel_fidelity_mmc, channel_fidelity_mms, kraus_from_unitary
from .control import ControlProblem, ObjectiveConfig
from .dynamics import ControlField, chain_1q2e, hadamard_gate
from .linalg import (
    hs_norm,
    kron,
    partial_trace_env,
    psd_sqrt,
    random_density,
    random_unitary,
)
from .metrics import dist_hs, dist_hs_closed, dist_two_norm_bounds, gamma_closed, hs_objective

DIMS = ((2, 2), (2, 4), (4, 2))


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    cases: int
    worst: float
    detail: str = ""


def _env_lift(phi, n_s: int) -> np.ndarray:
    return kron(np.eye(n_s), phi)


def check_invariance(rng, cases: int = 30) -> SuiteResult:
    worst = 0.0
    for k in range(cases):
        n_s, n_e = DIMS[k % len(DIMS)]
        u = random_unitary(n_s * n_e, rng)
        phi = random_unitary(n_e, rng)
        worst = max(worst, dist_hs(_env_lift(phi, n_s) @ u, u, (n_s, n_e)).value)
    return SuiteResult("environment-invariance", worst < 1e-7, cases, worst, "max distance to own class")


def check_optimal_phi(rng, cases: int = 10, trials: int = 200) -> SuiteResult:
    margin = math.inf
    for _ in range(cases):
        u, v = random_unitary(4, rng), random_unitary(4, rng)
        res = dist_hs(u, v, (2, 2))
        best = hs_objective(u, v, res.optimal_phi, (2, 2))
        rand = min(hs_objective(u, v, random_unitary(2, rng), (2, 2)) for _ in range(trials))
        margin = min(margin, rand - best)
        # the objective at the analytic minimizer must equal the closed form
        margin = min(margin, 1e-10 - abs(best - res.value))
    return SuiteResult("optimal-phi", margin >= 0, cases, margin, "min(random - analytic) objective gap")


def check_stability(rng, cases: int = 20) -> SuiteResult:
    worst = 0.0
    for k in range(cases):
        n_s, n_e = DIMS[k % len(DIMS)]
        u, v = random_unitary(n_s * n_e, rng), random_unitary(n_s * n_e, rng)
        xi = random_unitary(2, rng)
        d0 = dist_hs(u, v, (n_s, n_e)).value
        d1 = dist_hs(kron(u, xi), kron(v, xi), (n_s, n_e * 2)).value
        worst = max(worst, abs(d1 - d0))
    return SuiteResult("stability", worst < 1e-10, cases, worst, "max change under an ancilla")


def check_chaining(rng, cases: int = 30) -> SuiteResult:
    slack = math.inf
    dims = (2, 2)
    for _ in range(cases):
        u1, u2 = random_unitary(4, rng), random_unitary(4, rng)
        v1 = kron(random_unitary(2, rng), random_unitary(2, rng))
        v2 = kron(random_unitary(2, rng), random_unitary(2, rng))
        lhs = dist_hs(u2 @ u1, v2 @ v1, dims).value
        rhs = dist_hs(u1, v1, dims).value + dist_hs(u2, v2, dims).value
        slack = min(slack, rhs - lhs)
    return SuiteResult("chaining", slack >= -1e-9, cases, slack, "min(sum of steps - end to end)")


def check_sandwich(rng, cases: int = 30) -> SuiteResult:
    slack = math.inf
    for k in range(cases):
        n_s, n_e = DIMS[k % len(DIMS)]
        u = random_unitary(n_s * n_e, rng)
        v_s = random_unitary(n_s, rng)
        d = dist_hs_closed(u, v_s, (n_s, n_e)).value
        f = channel_fidelity_mmc(u, v_s, (n_s, n_e))
        slack = min(slack, f - (1 - d) ** 2, (1 - d**2) - f)
    return SuiteResult("distance-fidelity-sandwich", slack >= -1e-9, cases, slack, "min distance to either bound")


def check_fms_two_paths(rng, cases: int = 20) -> SuiteResult:
    worst = 0.0
    for k in range(cases):
        n_s, n_e = DIMS[k % len(DIMS)]
        u = random_unitary(n_s * n_e, rng)
        v_s = random_unitary(n_s, rng)
        rho_e = random_density(n_e, rng)
        via_kraus = channel_fidelity_mms(kraus_from_unitary(u, rho_e, (n_s, n_e)), v_s)
        via_gamma = hs_norm(gamma_closed(u, v_s, (n_s, n_e)) @ psd_sqrt(rho_e)) ** 2 / n_s**2
        worst = max(worst, abs(via_kraus - via_gamma))
    return SuiteResult("kraus-fidelity-two-paths", worst < 1e-10, cases, worst, "max |Kraus sum - Gamma form|")


def check_kraus_oracle(rng, cases: int = 20) -> SuiteResult:
    worst = 0.0
    for k in range(cases):
        n_s, n_e = DIMS[k % len(DIMS)]
        u = random_unitary(n_s * n_e, rng)
        rho_s, rho_e = random_density(n_s, rng), random_density(n_e, rng)
        out = apply_channel(kraus_from_unitary(u, rho_e, (n_s, n_e)), rho_s)
        ref = partial_trace_env(u @ kron(rho_s, rho_e) @ u.conj().T, (n_s, n_e))
        worst = max(worst, hs_norm(out - ref))
    return SuiteResult("kraus-propagation-oracle", worst < 1e-10, cases, worst, "max HS gap to joint propagation")


def check_gradient(rng, cases: int = 2, steps: int = 24, h: float = 1e-6) -> SuiteResult:
    cfg = ObjectiveConfig(hadamard_gate(), alpha=1e-3, t_f=4 * math.pi, steps=steps)
    problem = ControlProblem(chain_1q2e(0.05), cfg)
    worst = 0.0
    for _ in range(cases):
        eta = cfg.shape.values(cfg.zero_control())
        c = ControlField(cfg.t_f, rng.standard_normal(steps) * eta)
        g = problem.gradient(c)
        # where eta > 0 the shaped gradient is eta/dt times dJ/dC_k; elsewhere it is alpha C_k = 0
        ref = cfg.alpha * c.samples
        for k in np.flatnonzero(eta > 0):
            e = np.zeros(steps)
            e[k] = h
            jp = problem.evaluate(c.with_samples(c.samples + e)).objective
            jm = problem.evaluate(c.with_samples(c.samples - e)).objective
            ref[k] = eta[k] / c.dt * (jp - jm) / (2 * h)
        worst = max(worst, float(np.linalg.norm(g - ref) / np.linalg.norm(ref)))
    return SuiteResult("gradient-vs-finite-difference", worst < 1e-4, cases, worst, "max relative L2 error")


def check_centrality(rng, cases: int = 500) -> SuiteResult:
    excess = -math.inf
    for n in (2, 3, 4):
        mixed = np.eye(n) / n
        bound = (n - 1) / n
        for _ in range(cases):
            rank = int(rng.integers(1, n + 1))
            rho = random_density(n, rng, rank=rank)
            excess = max(excess, hs_norm(rho - mixed) ** 2 - bound)
        pure = np.zeros((n, n))
        pure[0, 0] = 1.0
        if abs(hs_norm(pure - mixed) ** 2 - bound) > 1e-12:
            return SuiteResult("maximally-mixed-centrality", False, cases, excess, "pure state misses the bound")
    return SuiteResult("maximally-mixed-centrality", excess <= 1e-9, 3 * cases, excess, "max excess over (n-1)/n")


def check_two_norm_bracket(rng, cases: int = 5) -> SuiteResult:
    slack = math.inf
    for _ in range(cases):
        u, v = random_unitary(4, rng), random_unitary(4, rng)
        b = dist_two_norm_bounds(u, v, (2, 2))
        d = dist_hs(u, v, (2, 2)).value
        slack = min(slack, b.upper - b.lower, math.sqrt(2.0) * d + 1e-8 - b.lower)
        phi = random_unitary(2, rng)
        member = dist_two_norm_bounds(_env_lift(phi, 2) @ v, v, (2, 2))
        slack = min(slack, 1e-6 - member.upper)
    return SuiteResult("two-norm-bracket", slack >= 0, cases, slack, "min slack of lower <= upper, HS cap, members")


SUITES: dict[str, Callable] = {
    "environment-invariance": check_invariance,
    "optimal-phi": check_optimal_phi,
    "stability": check_stability,
    "chaining": check_chaining,
    "distance-fidelity-sandwich": check_sandwich,
    "kraus-fidelity-two-paths": check_fms_two_paths,
    "kraus-propagation-oracle": check_kraus_oracle,
    "gradient-vs-finite-difference": check_gradient,
    "maximally-mixed-centrality": check_centrality,
    "two-norm-bracket": check_two_norm_bracket,
}


def run_checks(seed: int = 0, names=None) -> list[SuiteResult]:
    """Run the named suites (all by default), each from its own seeded stream."""
    names = list(SUITES) if names is None else list(names)
    order = list(SUITES)
    out = []
    for name in names:
        suite = SUITES[name]
        # keyed by catalogue position so a suite sees the same samples when run alone
        rng = np.random.default_rng([seed, order.index(name)])
        out.append(suite(rng))
    return out
